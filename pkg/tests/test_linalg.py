import numpy as np
import pytest
from hypothesis import given, strategies as st

from gkflow import linalg as la
from conftest import random_skew, random_spd

seeds = st.integers(0, 2**31 - 1)
dims = st.integers(2, 5)


@given(dims)
def test_pairing_signature(n):
    lam = np.linalg.eigvalsh(la.pairing_matrix(n))
    assert np.sum(lam > 0) == n and np.sum(lam < 0) == n


def test_pairing_values():
    a = la.gvec([1.0, 0.0], [0.0, 2.0])
    b = la.gvec([0.0, 3.0], [5.0, 0.0])
    # <X + xi, Y + eta> = s (eta(X) + xi(Y))
    assert la.pairing(a, b) == pytest.approx(la.PAIRING_SCALE * (5.0 + 6.0))
    assert la.pairing(a, b, 0.5) == pytest.approx(5.5)


@given(seeds, dims)
def test_b_transform_is_orthogonal(seed, n):
    rng = np.random.default_rng(seed)
    B = random_skew(rng, n)
    assert la.is_pairing_orthogonal(la.shear(B), tol=1e-10)
    # composition adds the 2-forms
    B2 = random_skew(rng, n)
    assert la.maxnorm(la.shear(B) @ la.shear(B2) - la.shear(B + B2)) < 1e-12


def test_shear_rejects_nothing_but_symmetric_is_not_orthogonal(rng):
    S = random_spd(rng, 3)
    assert not la.is_pairing_orthogonal(la.shear(S))


@given(seeds)
def test_symplectic_endo_is_gcs(seed):
    rng = np.random.default_rng(seed)
    w = random_skew(rng, 4) + 3 * np.kron(np.eye(2), [[0, -1], [1, 0]])
    sq, orth = la.check_gcs_fiber(la.symplectic_endo(w))
    assert sq < 1e-9 and orth < 1e-9


def test_upper_triangular_complex():
    I = np.kron(np.eye(2), [[0.0, -1.0], [1.0, 0.0]])
    sq, orth = la.check_gcs_fiber(la.upper_triangular(I, np.zeros((4, 4))))
    assert sq == 0 and orth == 0


@given(seeds, dims)
def test_generalized_metric_splitting(seed, n):
    rng = np.random.default_rng(seed)
    m = la.GMetricFiber(random_spd(rng, n), random_skew(rng, n)).validate()
    Pp, Pm = m.projectors()
    e = np.eye(2 * n)
    assert la.maxnorm(Pp + Pm - e) < 1e-8
    assert la.maxnorm(Pp @ Pp - Pp) < 1e-8
    G = m.reflection()
    assert la.maxnorm(G @ G - e) < 1e-8
    up, um = m.lifts()
    P = la.pairing_matrix(n)
    # C+ positive, C- negative, mutually orthogonal
    assert np.min(np.linalg.eigvalsh(la.sym(up.T @ P @ up))) > 0
    assert np.max(np.linalg.eigvalsh(la.sym(um.T @ P @ um))) < 0
    assert la.maxnorm(up.T @ P @ um) < 1e-8
    # G form is symmetric positive definite
    Gf = m.form()
    assert la.maxnorm(Gf - Gf.T) < 1e-8
    assert np.min(np.linalg.eigvalsh(la.sym(Gf))) > 0


@given(seeds)
def test_project_pm_membership(seed):
    rng = np.random.default_rng(seed)
    m = la.GMetricFiber(random_spd(rng, 3), random_skew(rng, 3))
    a = rng.standard_normal(6)
    ap, am = la.project_pm(a, m)
    assert la.maxnorm(ap + am - a) < 1e-9
    assert la.membership_residual(ap, m, 1) < 1e-8
    assert la.membership_residual(am, m, -1) < 1e-8
    assert la.generalized_metric_value(a, m) > 0


def test_gmetric_validation_errors():
    with pytest.raises(ValueError):
        la.GMetricFiber(np.diag([1.0, -1.0]), np.zeros((2, 2))).validate()
    with pytest.raises(ValueError):
        la.GMetricFiber(np.eye(2), np.eye(2)).validate()
    with pytest.raises(ValueError):
        la.GMetricFiber(np.eye(2), np.zeros((3, 3)))
