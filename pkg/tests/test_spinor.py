import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gkflow import linalg as la
from gkflow import spinor as sp
from gkflow.fields import Chart, ext_d, form2_components
from gkflow.gcs import groupoid_residual
from gkflow.linalg import maxnorm

seeds = st.integers(0, 10_000)


def rand_form(rng, degree=None):
    c = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    f = sp.ExtForm(c)
    return f if degree is None else f.degree_part(degree)


def close(a, b, tol=1e-12):
    return np.max(np.abs(a.c - b.c)) < tol


@given(seeds)
def test_wedge_associative(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (rand_form(rng) for _ in range(3))
    assert close((a ^ b) ^ c, a ^ (b ^ c), 1e-10)


@given(seeds, st.integers(0, 4), st.integers(0, 4))
def test_graded_commutative(seed, p, q):
    rng = np.random.default_rng(seed)
    a, b = rand_form(rng, p), rand_form(rng, q)
    assert close(a ^ b, (b ^ a) * (-1) ** (p * q), 1e-10)


@given(seeds, st.integers(0, 4))
def test_interior_antiderivation(seed, p):
    rng = np.random.default_rng(seed)
    a, b = rand_form(rng, p), rand_form(rng)
    v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    lhs = sp.interior_vector(v, a ^ b)
    rhs = (sp.interior_vector(v, a) ^ b) + (a ^ sp.interior_vector(v, b)) * (-1) ** p
    assert close(lhs, rhs, 1e-10)
    assert sp.interior_vector(v, sp.interior_vector(v, b)).is_zero(1e-10)


@given(seeds)
def test_clifford_square(seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    xi = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    rho = rand_form(rng)
    twice = sp.clifford(v, xi, sp.clifford(v, xi, rho))
    assert close(twice, rho * np.dot(xi, v), 1e-10)


def test_contraction_convention():
    B = sp.ExtBivector.wedge_of([1, 0, 0, 0], [0, 0, 1, 0])
    top = sp.ExtForm.monomial(sp.DZ, sp.DW)
    assert sp.contract(B, top).as_dict() == {"1": 1}


def test_bivector_constructors():
    with pytest.raises(ValueError):
        sp.ExtBivector(np.eye(4))
    U = np.zeros((4, 4))
    U[0, 2] = 2.0
    assert np.allclose(sp.ExtBivector.from_upper(U).B, sp.ExtBivector.wedge_of([2, 0, 0, 0], [0, 0, 1, 0]).B)
    with pytest.raises(ValueError):
        sp.ExtForm(np.zeros(8))


@given(seeds)
def test_exp_inverse(seed):
    rng = np.random.default_rng(seed)
    rho = rand_form(rng)
    F = rand_form(rng, 2)
    assert close(sp.exp_act(F * -1, sp.exp_act(F, rho)), rho, 1e-9)
    B = sp.ExtBivector.from_upper(rng.standard_normal((4, 4)))
    assert close(sp.exp_act(B * -1, sp.exp_act(B, rho)), rho, 1e-9)
    with pytest.raises(TypeError):
        sp.exp_act("x", rho)


# --- elliptic family --------------------------------------------------------

ZS = [0.5, 0.5j, -1 + 1j, 1.5 - 0.5j, 2.0]
WS = [0, 1, 1j, -0.7 + 0.3j, 2 - 1j]


def test_verify_elliptic_grid():
    worst = max(sp.verify_elliptic(c, z, w) for c in (0.0, 1.0, 2.0) for z in ZS for w in WS)
    assert worst < 1e-13
    assert max(sp.verify_elliptic(0.0, z, w) for z in ZS for w in WS) == 0.0


def test_verify_elliptic_detects_wrong_form():
    z, w, c = 1 + 1j, 0.5, 1.0
    lhs = sp.exp_act(sp.f_c(2 * c, z), sp.exp_act(sp.sigma_c(0, z, w), sp.omega_c(0, z, w)))
    rhs = sp.pure_spinor(c, z, w)
    assert np.max(np.abs(lhs.c - rhs.c)) > 0.1
    with pytest.raises(ValueError):
        sp.verify_elliptic(1.0, 0.0, 1.0)


def test_pure_spinor_at_c0():
    assert sp.pure_spinor(0.0, 1.0, 1.0).as_dict() == {"1": 1, "dz^dw": 1}


@pytest.mark.parametrize("c", [0.0, 0.5, 1.0, 2.0])
def test_pure_spinor_annihilated_by_structure(c):
    ch = sp.elliptic_chart()
    x = ch.samples(6, seed=2)
    et = sp.elliptic_tensors(c, ch)
    I, Q = et.I(x), et.Q(x)
    for p in range(x.shape[0]):
        z, w = x[p, 0] + 1j * x[p, 1], x[p, 2] + 1j * x[p, 3]
        J = la.upper_triangular(I[p], Q[p])
        rho = sp.pure_spinor(c, z, w)
        assert sp.annihilation_residual(J, rho, -1) < 1e-12
        assert sp.annihilation_residual(J, rho, 1) > 1e-3


def test_complex_structure_is_complex():
    x = sp.elliptic_chart().samples(16)
    for c in (0.0, 1.0):
        I = sp.complex_structure_c(c, x)
        assert maxnorm(I @ I + np.eye(4)) < 1e-13
        assert np.isrealobj(I)


def test_real_f_matches_complex_form():
    z, c = 1.2 - 0.4j, 0.7
    F = sp.f_c(c, z)
    Fc = np.zeros((4, 4), complex)
    for (k, l), m in zip(itertools.combinations(range(4), 2), [3, 5, 9, 6, 10, 12]):
        Fc[k, l], Fc[l, k] = F.c[m], -F.c[m]
    real_components = sp.FORM_C2R.T @ Fc @ sp.FORM_C2R
    x = np.array([[z.real, z.imag, 0.3, 0.1]])
    assert maxnorm(real_components - form2_components(sp.f_c_real(c, x))[0]) < 1e-13


@pytest.mark.parametrize("c", [0.0, 0.5, 1.0, 2.0])
def test_elliptic_tensor_invariants(c):
    ch = sp.elliptic_chart()
    x = ch.samples(32)
    et = sp.elliptic_tensors(c, ch)
    res = et.holo_poisson.residuals(x)
    assert max(res.values()) < ch.tol(max(1.0, et.Q.max_abs(x)))
    assert maxnorm(ext_d(et.F)(x)) < ch.tol()
    e0 = sp.elliptic_tensors(0.0, ch)
    r1, r2 = groupoid_residual(e0.I, et.I, e0.Q, et.F, x)
    assert max(r1, r2) < 100 * ch.h**2
    assert maxnorm(np.imag(sp.sigma_tensor_c(c, x) - sp.sigma_tensor_c(0.0, x))) < 1e-12
    # F_c is linear in c
    assert maxnorm(et.F(x) - c * sp.elliptic_tensors(1.0, ch).F(x)) < 1e-14


def test_chart_must_avoid_origin():
    with pytest.raises(ValueError):
        sp.elliptic_tensors(1.0, Chart.box([-1.0] * 4, [1.0] * 4))
