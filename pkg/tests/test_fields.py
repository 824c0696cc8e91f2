import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from gkflow import fields as fl
from gkflow.errors import ChartExitError, SingularError
from gkflow.examples import volume_form3
from gkflow.linalg import maxnorm

T4 = fl.Chart.torus(4)
BOX3 = fl.Chart.box([-1.0] * 3, [1.0] * 3)
BOX4 = fl.Chart.box([-1.0] * 4, [1.0] * 4)
seeds = st.integers(0, 10_000)


# --- charts and fields ------------------------------------------------------

def test_chart_rejects_bad_input():
    with pytest.raises(ValueError):
        fl.Chart.box([0.0, 1.0], [1.0, 0.5])
    with pytest.raises(ValueError):
        fl.Chart.box([0.0], [1.0], h=0.5)
    with pytest.raises(ValueError):
        fl.Chart.box([0.0], [1.0], order=3)


def test_samples_deterministic_and_inside():
    a, b = BOX4.samples(64, 3), BOX4.samples(64, 3)
    assert np.array_equal(a, b)
    assert np.all(BOX4.contains(a, margin=3 * BOX4.h))
    assert not np.array_equal(a, BOX4.samples(64, 4))


def test_periodic_wrap():
    f = fl.Field("scalar", lambda x: np.sin(x[..., 0]), T4)
    x = np.array([[0.3, 0, 0, 0]])
    assert f(x + [2 * np.pi, 0, 0, 0]) == pytest.approx(f(x))
    with pytest.raises(ChartExitError):
        BOX4.require_inside(np.array([[2.0, 0, 0, 0]]))


def test_field_algebra():
    x = BOX3.samples(8)
    f = fl.Field("scalar", lambda p: p[..., 0], BOX3)
    v = fl.coordinates(BOX3)
    w = v * f
    assert maxnorm(w(x) - x * x[:, :1]) == 0
    assert maxnorm((v - v)(x)) == 0
    with pytest.raises(ValueError):
        fl.Field("nonsense", lambda p: p, BOX3)
    with pytest.raises(ValueError):
        v + f
    with pytest.raises(ValueError):
        fl.constant("endo", np.eye(2), BOX3)


@pytest.mark.parametrize("order,rate", [(2, 2), (4, 4)])
def test_fd_jacobian_order(order, rate):
    x = np.array([[0.3, -0.2]])
    f = lambda p: np.sin(p[..., 0]) * np.exp(p[..., 1])
    exact = np.array([np.cos(0.3) * np.exp(-0.2), np.sin(0.3) * np.exp(-0.2)])
    e1 = np.abs(fl.fd_jacobian(f, x, 1e-2, order)[0] - exact).max()
    e2 = np.abs(fl.fd_jacobian(f, x, 5e-3, order)[0] - exact).max()
    assert e1 / e2 == pytest.approx(2**rate, rel=0.05)


# --- exterior and Lie calculus ----------------------------------------------

@given(seeds)
def test_d_squared_vanishes(seed):
    x = T4.samples(16, seed % 7)
    f = fl.random_field("scalar", T4, seed)
    assert maxnorm(fl.ext_d(fl.ext_d(f))(x)) < 1e-5
    a = fl.random_field("form1", T4, seed)
    assert maxnorm(fl.ext_d(fl.ext_d(a))(x)) < 1e-5


def test_lie_bracket_analytic():
    ch = fl.Chart.box([-1.0] * 2, [1.0] * 2)
    X = fl.Field("vector", lambda p: np.stack([p[..., 1], 0 * p[..., 0]], -1), ch)
    Y = fl.Field("vector", lambda p: np.stack([0 * p[..., 0], p[..., 0]], -1), ch)
    x = ch.samples(16)
    expect = np.stack([-x[:, 0], x[:, 1]], -1)
    assert maxnorm(fl.lie_bracket(X, Y)(x) - expect) < 1e-10


def _linear_flow_derivative(T, A, x, kind, eps=1e-4):
    """d/dt at 0 of the pullback of T by exp(t A), by central differences in t."""
    def pulled(t):
        phi = fl.Diffeo.linear(expm(t * A))
        if kind == "form2":
            return fl.pullback_form(T, phi, BOX3.with_h(1e-3))(x)
        back = fl.Diffeo.linear(expm(-t * A))
        if kind == "endo":
            return fl.pushforward_endo(T, back)(x)
        return fl.pushforward_bivector(T, back)(x)
    return (pulled(eps) - pulled(-eps)) / (2 * eps)


@pytest.mark.parametrize("kind", ["form2", "endo", "bivector"])
def test_lie_derivative_matches_flow_pullback(kind):
    big = fl.Chart.box([-3.0] * 3, [3.0] * 3)
    rng = np.random.default_rng(1)
    A = 0.3 * rng.standard_normal((3, 3))
    X = fl.Field("vector", lambda p: p @ A.T, big)
    T = fl.random_field(kind, big, 5)
    x = BOX3.samples(16)
    oracle = _linear_flow_derivative(T, A, x, kind)
    assert maxnorm(fl.lie_derivative(X, T)(x) - oracle) < 1e-6


@given(seeds)
def test_cartan_formula_on_two_forms(seed):
    X = fl.random_field("vector", T4, seed)
    w = fl.random_field("form2", T4, seed + 1)
    x = T4.samples(8)
    iXw = fl.Field("form1", lambda p: fl.interior_vector_form2(X(p), w(p)), T4)
    dw = fl.ext_d(w)
    iXdw = fl.Field("form2", lambda p: fl.interior_vector_form3(X(p), dw(p)), T4)
    rhs = fl.ext_d(iXw)(x) + iXdw(x)
    assert maxnorm(fl.lie_derivative(X, w)(x) - rhs) < 1e-4


@given(seeds)
def test_lie_derivative_is_a_derivation(seed):
    X = fl.random_field("vector", T4, seed)
    Y = fl.random_field("vector", T4, seed + 1)
    I = fl.random_field("endo", T4, seed + 2)
    IY = fl.act(I, Y)
    x = T4.samples(8)
    lhs = fl.lie_bracket(X, IY)(x)
    rhs = fl.act(fl.lie_derivative(X, I), Y)(x) + fl.act(I, fl.lie_bracket(X, Y))(x)
    assert maxnorm(lhs - rhs) < 1e-4


def test_schouten():
    x = BOX3.samples(16)
    const = fl.constant("bivector", np.array([[0, 1.0, 0], [-1, 0, 2], [0, -2, 0]]), BOX3)
    assert maxnorm(fl.schouten_square(const)(x)) == 0
    # Lie-Poisson structure of so(3): Poisson
    eps = volume_form3()
    lp = fl.Field("bivector", lambda p: np.einsum("ijk,...k->...ij", eps, p), BOX3)
    assert maxnorm(fl.schouten_square(lp)(x)) < 1e-9
    # {x1, x2} = 1, {x2, x3} = x2 violates Jacobi
    def bad(p):
        Q = np.zeros(p.shape[:-1] + (3, 3))
        Q[..., 0, 1], Q[..., 1, 0] = 1, -1
        Q[..., 1, 2], Q[..., 2, 1] = p[..., 1], -p[..., 1]
        return Q
    assert maxnorm(fl.schouten_square(fl.Field("bivector", bad, BOX3))(x)) > 0.1


# --- Courant bracket --------------------------------------------------------

def test_dorfman_special_cases():
    x = T4.samples(16)
    X, Y = fl.random_field("vector", T4, 1), fl.random_field("vector", T4, 2)
    xi, eta = fl.random_field("form1", T4, 3), fl.random_field("form1", T4, 4)
    assert maxnorm(fl.dorfman(fl.tangent(X), fl.tangent(Y))(x)[:, :4] - fl.lie_bracket(X, Y)(x)) < 1e-12
    assert maxnorm(fl.dorfman(fl.cotangent(xi), fl.cotangent(eta))(x)) == 0
    assert maxnorm(fl.dorfman(fl.tangent(X), fl.cotangent(eta))(x)[:, 4:] - fl.lie_derivative(X, eta)(x)) < 1e-12
    dxi = fl.ext_d(xi)
    iYdxi = -np.einsum("...ij,...j->...i", dxi(x), Y(x))
    assert maxnorm(fl.dorfman(fl.cotangent(xi), fl.tangent(Y))(x)[:, 4:] - iYdxi) < 1e-12


@given(seeds)
def test_courant_axioms_flat(seed):
    a, b, c = (fl.random_field("gsection", T4, seed + k) for k in range(3))
    f = fl.random_field("scalar", T4, seed + 3)
    res = fl.courant_axioms(a, b, c, f, T4.samples(16))
    assert max(res.values()) < 100 * T4.h**2 * 10


def test_courant_axioms_twisted():
    T3 = fl.Chart.torus(3)
    H = fl.constant("form3", volume_form3(0.7), T3)
    a, b, c = (fl.random_field("gsection", T3, k) for k in range(3))
    f = fl.random_field("scalar", T3, 9)
    res = fl.courant_axioms(a, b, c, f, T3.samples(16), H=H)
    assert max(res.values()) < 1e-4
    # half pairing: the anomaly rescales, the identities still hold
    res = fl.courant_axioms(a, b, c, f, T3.samples(16), H=H, pairing_scale=0.5)
    assert max(res.values()) < 1e-4


def test_nonclosed_twist_breaks_jacobi_and_warns():
    H3 = np.zeros((4, 4, 4))
    H3[:3, :3, :3] = volume_form3()
    H = fl.Field("form3", lambda p: np.sin(p[..., 3])[..., None, None, None] * H3, T4)
    x = T4.samples(16)
    assert maxnorm(fl.ext_d_form3(H)(x)) > 0.1
    a, b, c = (fl.random_field("gsection", T4, k) for k in range(3))
    res = fl.courant_axioms(a, b, c, fl.random_field("scalar", T4, 4), x, H=H)
    assert res["jacobi"] > 1e-2
    with pytest.warns(UserWarning):
        fl.courant_bracket(a, b, H, check_closed=True)


def test_frame_dorfman_matches_dorfman():
    S = lambda p: np.stack([fl.random_field("gsection", T4, k)(p) for k in range(3)], -1)
    x = T4.samples(4)
    Br = fl.frame_dorfman(S, x, T4)
    for A in range(3):
        for B in range(3):
            a = fl.random_field("gsection", T4, A)
            b = fl.random_field("gsection", T4, B)
            assert maxnorm(Br[..., :, A, B] - fl.dorfman(a, b)(x)) < 1e-10


# --- maps -------------------------------------------------------------------

def test_diffeo_linear_and_singular():
    A = np.array([[2.0, 1.0, 0], [0, 1.0, 0], [0, 0, 3.0]])
    phi = fl.Diffeo.linear(A, shift=[0.1, 0, 0])
    x = BOX3.samples(4)
    assert maxnorm(phi.inverse()(phi(x)) - x) < 1e-14
    F = fl.constant("form2", np.array([[0, -1.0, 0], [1, 0, 0], [0, 0, 0]]), fl.Chart.box([-9] * 3, [9] * 3))
    assert maxnorm(fl.pullback_form(F, phi, BOX3)(x) - A.T @ F(x)[0] @ A) < 1e-14
    with pytest.raises(SingularError):
        fl._checked_inv(np.zeros((1, 3, 3)))
    with pytest.raises(SingularError):
        fl.Diffeo(lambda p: p).inverse()


def test_pullback_leaving_chart_aborts():
    phi = fl.Diffeo.linear(5 * np.eye(3))
    F = fl.random_field("form2", BOX3, 0)
    with pytest.raises(ChartExitError):
        fl.pullback_form(F, phi)(BOX3.samples(8))
