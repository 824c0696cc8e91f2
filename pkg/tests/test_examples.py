import numpy as np
import pytest

from gkflow import examples as E
from gkflow.errors import ValidationError
from gkflow.fields import courant_axioms
from gkflow.linalg import maxnorm


@pytest.mark.parametrize("name", E.names())
def test_every_example_registers(name):
    ex = E.get(name)
    assert ex.name == name
    assert ex.tolerances["h"] == pytest.approx(1e-3)


def test_unknown_example():
    with pytest.raises(KeyError):
        E.get("no_such_geometry")


def test_synthetic_oracle_freeze():
    p = E.synthetic_parameters()
    I0, Q, F0, A = p["I0"], p["Q"], p["F0"], p["A"]
    # L_X Q = -A Q - Q A^T and L_X I0 = [I0, A] for X = A x
    assert maxnorm(A @ Q + Q @ A.T) < 1e-15
    assert maxnorm(I0 @ A - A @ I0 - Q @ F0) < 1e-15
    # F0 is a positive (1,1) form
    assert maxnorm(I0.T @ F0 @ I0 - F0) < 1e-15
    assert np.min(np.linalg.eigvalsh(-0.5 * (F0 @ I0 + (F0 @ I0).T))) > 0
    ex = E.get("synthetic_flow_R4")
    assert ex.residuals["flow_lie_Q"] < 1e-10 and ex.residuals["flow_lie_I"] < 1e-10


def test_axiom_sections_are_normalised():
    ex = E.get("elliptic_Ec")
    x = ex.samples()
    secs = ex.axiom_sections(0, x)
    for s in secs:
        assert maxnorm(s(x)) == pytest.approx(1.0)
    res = courant_axioms(*secs, x, H=ex.H)
    assert max(res.values()) < 1e-4


def test_bad_twist_is_negative_control():
    ex = E.get("kahler_torus_T4_badH")
    x = ex.samples()
    res = courant_axioms(*ex.axiom_sections(0, x), x, H=ex.H)
    assert res["jacobi"] > 1e-2
    assert max(res["leibniz"], res["pairing_invariance"], res["skew_anomaly"]) < 1e-4


def test_cp2_cubic_chart():
    ex = E.get("cp2_cubic")
    x = ex.samples()
    assert ex.residuals["holo_schouten"] < ex.chart.tol()
    # the Hitchin-type field passes at the discretization level
    assert max(ex.residuals["flow_lie_Q"], ex.residuals["flow_lie_I"]) < ex.chart.tol(10)
    assert ex.extra["connection"].lie_q_residual(ex.Q, x) < ex.chart.tol(10)
    F0 = ex.F(x)
    g0 = -0.5 * F0 @ (2 * ex.I(x))
    assert np.min(np.linalg.eigvalsh(0.5 * (g0 + np.swapaxes(g0, -1, -2)))) > 0


def test_cp2_accepts_coefficient_vector_and_rejects_zeros():
    ex = E.cp2_chart([1.0] + [0.0] * 9)
    assert ex.residuals["flow_lie_I"] < 1e-12
    with pytest.raises(ValidationError):
        E.cp2_chart({(1, 0): 1.0})  # z1 vanishes inside the chart
    with pytest.raises(ValueError):
        E.cubic_from_coeffs({(4, 0): 1.0})


def test_elliptic_positivity_scan_is_empty():
    rows, good = E.elliptic_positivity_scan()
    assert good == []
    # F_c alone is only semi-definite; adding omega0 breaks the brane equation
    assert max(r["margin"] for r in rows if r["lambda"] == 0) <= 1e-12
    assert all(r["nlin"] > 1e-2 * r["lambda"] for r in rows if r["lambda"] > 0)


def test_elliptic_candidate_flow_is_negative_control():
    rows, passing = E.elliptic_flow_scan()
    assert passing == []
    for r in rows:
        assert r["lie_Q"] < r["tol"]
        assert r["lie_I"] > 1.0
