"""Tensor fields on coordinate charts with finite-difference calculus.

Fields are closures ``x -> value`` that accept a batch of points of shape
``(..., n)`` and return ``(..., *shape)``.  Storage conventions:

=========  ===========  ==============================================
kind       shape        meaning
=========  ===========  ==============================================
scalar     ()
vector     (n,)         X^i
form1      (n,)         xi_i
form2      (n, n)       contraction map: M @ X = i_X F, so M = F_comp.T
form3      (n, n, n)    components H[i, j, k]
bivector   (n, n)       contraction map: N @ xi = i_xi Q
trivector  (n, n, n)    components
endo       (n, n)       I acting as I @ X
metric     (n, n)       g_ij
gendo      (2n, 2n)     block endomorphism of T + T*
gsection   (2n,)        (X, xi)
=========  ===========  ==============================================

Jacobians put the derivative direction last: ``D[..., *shape, k] = d_k f``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .errors import ChartExitError, SingularError
from .linalg import PAIRING_SCALE, maxnorm

DEFAULT_H = 1e-3
DEFAULT_SAMPLES = 64

KINDS = {
    "scalar": lambda n: (),
    "vector": lambda n: (n,),
    "form1": lambda n: (n,),
    "form2": lambda n: (n, n),
    "form3": lambda n: (n, n, n),
    "bivector": lambda n: (n, n),
    "trivector": lambda n: (n, n, n),
    "endo": lambda n: (n, n),
    "metric": lambda n: (n, n),
    "christoffel": lambda n: (n, n, n),
    "gendo": lambda n: (2 * n, 2 * n),
    "gsection": lambda n: (2 * n,),
}


@dataclass(frozen=True)
class Chart:
    """Coordinate box with per-axis periodicity and a finite-difference step."""

    lo: tuple
    hi: tuple
    periodic: tuple = None
    h: float = DEFAULT_H
    order: int = 2
    sample_box: tuple | None = None  # optional (lo, hi) of a safe region for samples

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        per = self.periodic if self.periodic is not None else (False,) * len(lo)
        per = tuple(bool(p) for p in per)
        if not (len(lo) == len(hi) == len(per)):
            raise ValueError("lo, hi and periodic must have equal length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("need lo < hi on every axis")
        if self.h <= 0 or self.h >= 0.1 * min(b - a for a, b in zip(lo, hi)):
            raise ValueError(f"finite-difference step {self.h} out of range")
        if self.order not in (2, 4):
            raise ValueError("stencil order must be 2 or 4")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "periodic", per)

    @classmethod
    def box(cls, lo, hi, **kw):
        return cls(tuple(lo), tuple(hi), None, **kw)

    @classmethod
    def torus(cls, n: int, length: float = 2 * np.pi, **kw):
        return cls((0.0,) * n, (length,) * n, (True,) * n, **kw)

    @property
    def dim(self) -> int:
        return len(self.lo)

    def with_h(self, h: float, order: int | None = None) -> "Chart":
        return Chart(self.lo, self.hi, self.periodic, h, order or self.order, self.sample_box)

    def tol(self, scale: float = 1.0) -> float:
        return 100.0 * scale * self.h**2

    def wrap(self, x):
        if not any(self.periodic):
            return x
        lo, hi = np.array(self.lo), np.array(self.hi)
        per = np.array(self.periodic)
        w = lo + np.mod(x - lo, hi - lo)
        return np.where(per, w, x)

    def contains(self, x, margin: float = 0.0):
        x = np.asarray(x)
        lo, hi = np.array(self.lo), np.array(self.hi)
        per = np.array(self.periodic)
        ok = per | ((x >= lo + margin) & (x <= hi - margin))
        return np.all(ok, axis=-1)

    def samples(self, count: int = DEFAULT_SAMPLES, seed: int = 0, box=None) -> np.ndarray:
        """Deterministic scrambled Sobol points, kept 4h inside non-periodic edges."""
        box = box if box is not None else self.sample_box
        lo, hi = np.array(self.lo), np.array(self.hi)
        if box is not None:
            lo = np.maximum(lo, np.asarray(box[0], float))
            hi = np.minimum(hi, np.asarray(box[1], float))
        pad = np.where(np.array(self.periodic), 0.0, 4 * self.h)
        lo, hi = lo + pad, hi - pad
        sob = qmc.Sobol(self.dim, scramble=True, seed=seed)
        m = int(np.ceil(np.log2(max(count, 1))))
        u = sob.random_base2(m)[:count]
        return lo + u * (hi - lo)

    def require_inside(self, x, what: str = "point"):
        ok = self.contains(x)
        if not np.all(ok):
            bad = np.asarray(x)[~ok].reshape(-1, self.dim)[0]
            raise ChartExitError(f"{what} leaves the chart at {np.round(bad, 6).tolist()}")


@dataclass(frozen=True)
class Field:
    kind: str
    fn: Callable = field(repr=False)
    chart: Chart = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        if self.chart is None:
            raise ValueError("a field needs a chart")

    @property
    def dim(self) -> int:
        return self.chart.dim

    @property
    def shape(self) -> tuple:
        return KINDS[self.kind](self.dim)

    def __call__(self, x):
        x = self.chart.wrap(np.asarray(x, dtype=float))
        return self.fn(x)

    def _combine(self, other, op):
        if isinstance(other, Field):
            if other.kind != self.kind:
                raise ValueError(f"cannot combine {self.kind} with {other.kind}")
            return Field(self.kind, lambda x: op(self(x), other(x)), self.chart)
        return Field(self.kind, lambda x: op(self(x), other), self.chart)

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __neg__(self):
        return Field(self.kind, lambda x: -self(x), self.chart)

    def __mul__(self, c):
        """Multiply by a constant or by a scalar field."""
        if isinstance(c, Field):
            if c.kind != "scalar":
                raise ValueError("can only multiply by a scalar field")
            nd = len(self.shape)

            def fn(x):
                cv = c(x)
                return self(x) * cv.reshape(cv.shape + (1,) * nd)

            return Field(self.kind, fn, self.chart)
        return Field(self.kind, lambda x: c * self(x), self.chart)

    __rmul__ = __mul__

    @property
    def real(self):
        return Field(self.kind, lambda x: np.real(self(x)), self.chart)

    @property
    def imag(self):
        return Field(self.kind, lambda x: np.imag(self(x)), self.chart)

    def max_abs(self, x) -> float:
        return maxnorm(self(x))


def constant(kind: str, value, chart: Chart) -> Field:
    value = np.asarray(value)
    if value.shape != KINDS[kind](chart.dim):
        raise ValueError(f"value shape {value.shape} does not match kind {kind}")

    def fn(x):
        return np.broadcast_to(value, x.shape[:-1] + value.shape).copy()

    return Field(kind, fn, chart)


def pointwise(kind: str, fn: Callable, *fields: Field, chart: Chart | None = None) -> Field:
    """Field whose value at x is fn(f1(x), f2(x), ...)."""
    chart = chart or fields[0].chart
    return Field(kind, lambda x: fn(*(f(x) for f in fields)), chart)


def coordinates(chart: Chart) -> Field:
    """The identity map as a vector field (x -> x)."""
    return Field("vector", lambda x: np.array(x, copy=True), chart)


# --- finite differences ----------------------------------------------------

def fd_jacobian(f: Callable, x, h: float = DEFAULT_H, order: int = 2):
    """Central-difference derivative of f at x, derivative axis last."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    E = np.eye(n) * h
    xs = x[..., None, :]
    if order == 2:
        d = (f(xs + E) - f(xs - E)) / (2 * h)
    elif order == 4:
        d = (8 * (f(xs + E) - f(xs - E)) - (f(xs + 2 * E) - f(xs - 2 * E))) / (12 * h)
    else:
        raise ValueError("order must be 2 or 4")
    return np.moveaxis(d, x.ndim - 1, -1)


def jac(f: Field, x):
    return fd_jacobian(f, x, f.chart.h, f.chart.order)


def _out(kind, fn, chart):
    return Field(kind, fn, chart)


# --- exterior calculus -----------------------------------------------------

def ext_d(f: Field) -> Field:
    if f.kind == "scalar":
        return _out("form1", lambda x: jac(f, x), f.chart)
    if f.kind == "form1":
        def d1(x):
            D = jac(f, x)  # D[j, i] = d_i xi_j
            return D - np.swapaxes(D, -1, -2)
        return _out("form2", d1, f.chart)
    if f.kind == "form2":
        def d2(x):
            D = jac(f, x)  # D[a, b, k] = d_k M[a, b] = d_k F_ba
            E = np.einsum("...kji->...ijk", D)  # E[i, j, k] = d_i F_jk
            return E + np.einsum("...jki->...ijk", E) + np.einsum("...kij->...ijk", E)
        return _out("form3", d2, f.chart)
    raise ValueError(f"ext_d does not accept kind {f.kind}")


def form2_from_components(F):
    """Component array F_ij -> contraction map."""
    return np.swapaxes(np.asarray(F), -1, -2)


def form2_components(M):
    return np.swapaxes(np.asarray(M), -1, -2)


def interior_vector_form3(X, H):
    """Map of the two-form i_X H: B @ Y = H(X, Y, .)."""
    return np.einsum("...i,...ijk->...kj", X, H)


def interior_vector_form2(X, M):
    """i_X F for F stored as a contraction map."""
    return np.einsum("...ij,...j->...i", M, X)


def apply_bivector(N, xi):
    return np.einsum("...ij,...j->...i", N, xi)


# --- Lie calculus ----------------------------------------------------------

def lie_bracket(X: Field, Y: Field) -> Field:
    def fn(x):
        Xv, Yv = X(x), Y(x)
        return np.einsum("...k,...ik->...i", Xv, jac(Y, x)) - np.einsum("...k,...ik->...i", Yv, jac(X, x))
    return _out("vector", fn, X.chart)


def lie_derivative(X: Field, T: Field) -> Field:
    """Coordinate formula for L_X T; DX[i, k] = d_k X^i."""
    if X.kind != "vector":
        raise ValueError("first argument must be a vector field")
    kind = T.kind
    if kind == "vector":
        return lie_bracket(X, T)

    def fn(x):
        Xv = X(x)
        DX = jac(X, x)
        DT = jac(T, x)
        nd = len(T.shape)
        adv = np.sum(DT * Xv.reshape(Xv.shape[:-1] + (1,) * nd + Xv.shape[-1:]), axis=-1)
        if kind == "scalar":
            return adv
        Tv = T(x)
        if kind == "form1":
            return adv + np.einsum("...k,...kj->...j", Tv, DX)
        if kind in ("form2", "metric"):
            return adv + Tv @ DX + np.swapaxes(DX, -1, -2) @ Tv
        if kind == "bivector":
            return adv - DX @ Tv - Tv @ np.swapaxes(DX, -1, -2)
        if kind == "endo":
            return adv - DX @ Tv + Tv @ DX
        if kind == "form3":
            return (adv + np.einsum("...ajk,...ai->...ijk", Tv, DX)
                    + np.einsum("...iak,...aj->...ijk", Tv, DX)
                    + np.einsum("...ija,...ak->...ijk", Tv, DX))
        raise ValueError(f"lie_derivative does not accept kind {kind}")

    if kind not in ("scalar", "form1", "form2", "metric", "bivector", "endo", "form3"):
        raise ValueError(f"lie_derivative does not accept kind {kind}")
    return _out(kind, fn, T.chart)


def _antisymmetrize3(T):
    out = np.zeros_like(T)
    for p in permutations(range(3)):
        sgn = np.linalg.det(np.eye(3)[list(p)])
        axes = tuple(range(T.ndim - 3)) + tuple(T.ndim - 3 + q for q in p)
        out = out + sgn * np.transpose(T, axes)
    return out / 6.0


def schouten_square(Q: Field) -> Field:
    """[Q, Q]^{ijk} = 2 Alt(Q^{li} d_l Q^{jk}); works for complex Q."""
    def fn(x):
        Qv = Q(x)
        DQ = jac(Q, x)
        T = np.einsum("...li,...jkl->...ijk", Qv, DQ)
        return 2.0 * _antisymmetrize3(T)
    return _out("trivector", fn, Q.chart)


# --- Courant bracket -------------------------------------------------------

def dorfman(a: Field, b: Field, H: Field | None = None) -> Field:
    """[X + xi, Y + eta]_H = [X, Y] + L_X eta - i_Y d xi + H(X, Y, .)."""
    n = a.dim

    def fn(x):
        av, bv = a(x), b(x)
        Da, Db = jac(a, x), jac(b, x)
        X, xi = av[..., :n], av[..., n:]
        Y, eta = bv[..., :n], bv[..., n:]
        DX, Dxi = Da[..., :n, :], Da[..., n:, :]
        DY, Deta = Db[..., :n, :], Db[..., n:, :]
        vec = np.einsum("...k,...ik->...i", X, DY) - np.einsum("...k,...ik->...i", Y, DX)
        lie_eta = np.einsum("...k,...jk->...j", X, Deta) + np.einsum("...k,...kj->...j", eta, DX)
        iy_dxi = np.einsum("...k,...jk->...j", Y, Dxi) - np.einsum("...k,...kj->...j", Y, Dxi)
        form = lie_eta - iy_dxi
        if H is not None:
            form = form + np.einsum("...a,...b,...abj->...j", X, Y, H(x))
        return np.concatenate([vec, form], axis=-1)

    return _out("gsection", fn, a.chart)


def courant_bracket(a: Field, b: Field, H: Field | None = None, check_closed: bool = False) -> Field:
    """Dorfman bracket; with check_closed a warning is raised when dH is not small."""
    if H is not None and check_closed:
        import warnings
        x = a.chart.samples(8)
        r = maxnorm(ext_d_form3(H)(x))
        if r > a.chart.tol(max(1.0, H.max_abs(x))):
            warnings.warn(f"twist is not closed: |dH| = {r:.3e}")
    return dorfman(a, b, H)


def skew_bracket(a: Field, b: Field, H: Field | None = None) -> Field:
    ab, ba = dorfman(a, b, H), dorfman(b, a, H)
    return Field("gsection", lambda x: 0.5 * (ab(x) - ba(x)), a.chart)


def ext_d_form3(H: Field) -> Field:
    """dH as a 4-index array; only used for closedness checks."""
    def fn(x):
        D = jac(H, x)  # D[i, j, k, l] = d_l H_ijk
        E = np.einsum("...jkli->...ijkl", D)  # E[i,j,k,l] = d_i H_jkl
        return (E - np.einsum("...jikl->...ijkl", E) + np.einsum("...kijl->...ijkl", E)
                - np.einsum("...lijk->...ijkl", E))
    return Field("form3", fn, H.chart)


def pairing_field(a: Field, b: Field, pairing_scale: float | None = None) -> Field:
    s = PAIRING_SCALE if pairing_scale is None else pairing_scale
    n = a.dim

    def fn(x):
        av, bv = a(x), b(x)
        return s * (np.sum(av[..., :n] * bv[..., n:], -1) + np.sum(av[..., n:] * bv[..., :n], -1))

    return Field("scalar", fn, a.chart)


def anchor(a: Field) -> Field:
    n = a.dim
    return Field("vector", lambda x: a(x)[..., :n], a.chart)


def cotangent(xi: Field) -> Field:
    """Embed a 1-form field as a generalized section (0, xi)."""
    return Field("gsection", lambda x: np.concatenate([np.zeros_like(xi(x)), xi(x)], -1), xi.chart)


def tangent(X: Field) -> Field:
    return Field("gsection", lambda x: np.concatenate([X(x), np.zeros_like(X(x))], -1), X.chart)


def gsection(X: Field, xi: Field) -> Field:
    return Field("gsection", lambda x: np.concatenate([X(x), xi(x)], -1), X.chart)


def act(M: Field, a: Field) -> Field:
    """Pointwise M @ a for an endomorphism field and a section."""
    kind = a.kind
    return Field(kind, lambda x: np.einsum("...ij,...j->...i", M(x), a(x)), a.chart)


def courant_axioms(a: Field, b: Field, c: Field, f: Field, x, H: Field | None = None,
                   pairing_scale: float | None = None) -> dict:
    """Residuals of the Courant algebroid axioms for the Dorfman bracket at points x."""
    s = PAIRING_SCALE if pairing_scale is None else pairing_scale
    n = a.dim
    br = lambda u, v: dorfman(u, v, H)
    ab = br(a, b)
    jacobi = br(ab, c)(x) - br(a, br(b, c))(x) + br(b, br(a, c))(x)
    fb = b * f
    rho_f = np.einsum("...k,...k->...", a(x)[..., :n], jac(f, x))
    leib = br(a, fb)(x) - f(x)[..., None] * ab(x) - rho_f[..., None] * b(x)
    bc = pairing_field(b, c, s)
    lhs = np.einsum("...k,...k->...", a(x)[..., :n], jac(bc, x))
    rhs = pairing_field(ab, c, s)(x) + pairing_field(b, br(a, c), s)(x)
    aa = br(a, a)(x)
    grad = jac(pairing_field(a, a, s), x) / (2 * s)
    anomaly = np.concatenate([aa[..., :n], aa[..., n:] - grad], -1)
    return {
        "jacobi": maxnorm(jacobi),
        "leibniz": maxnorm(leib),
        "pairing_invariance": maxnorm(lhs - rhs),
        "skew_anomaly": maxnorm(anomaly),
    }


# --- maps ------------------------------------------------------------------

@dataclass(frozen=True)
class Diffeo:
    """Smooth map with inverse and Jacobian; all callables are batched."""

    fwd: Callable
    inv: Callable | None = None
    jacobian: Callable | None = None
    h: float = DEFAULT_H

    def __call__(self, x):
        return self.fwd(np.asarray(x, float))

    def jac(self, x):
        x = np.asarray(x, float)
        if self.jacobian is not None:
            return self.jacobian(x)
        return fd_jacobian(self.fwd, x, self.h, 4)

    def inverse(self) -> "Diffeo":
        if self.inv is None:
            raise SingularError("map has no inverse")
        return Diffeo(self.inv, self.fwd, lambda y: np.linalg.inv(self.jac(self.inv(y))), self.h)

    @classmethod
    def identity(cls, n: int):
        return cls(lambda x: x, lambda x: x, lambda x: np.broadcast_to(np.eye(n), x.shape + (n,)).copy())

    @classmethod
    def linear(cls, A, shift=None):
        A = np.asarray(A, float)
        s = np.zeros(A.shape[0]) if shift is None else np.asarray(shift, float)
        Ai = np.linalg.inv(A)
        return cls(lambda x: x @ A.T + s, lambda y: (y - s) @ Ai.T,
                   lambda x: np.broadcast_to(A, x.shape + (A.shape[0],)).copy())


def _checked_inv(J):
    cond = np.linalg.cond(J)
    if not np.all(np.isfinite(cond)) or np.max(cond) > 1e12:
        raise SingularError(f"singular Jacobian (condition number {np.max(cond):.3e})")
    return np.linalg.inv(J)


def pullback_form(F: Field, phi: Diffeo, chart: Chart | None = None) -> Field:
    """(phi^* F)_p = Dphi^T F(phi p) Dphi."""
    chart = chart or F.chart

    def fn(x):
        y = phi(x)
        F.chart.require_inside(y, "image of pullback")
        J = phi.jac(x)
        return np.swapaxes(J, -1, -2) @ F(y) @ J

    return Field("form2", fn, chart)


def pushforward_endo(I: Field, phi: Diffeo, chart: Chart | None = None) -> Field:
    """(phi_* I)_p = Dphi I Dphi^-1 evaluated at q = phi^-1(p)."""
    chart = chart or I.chart
    if phi.inv is None:
        raise SingularError("pushforward needs an invertible map")

    def fn(p):
        q = phi.inv(p)
        I.chart.require_inside(q, "preimage of pushforward")
        J = phi.jac(q)
        return J @ I(q) @ _checked_inv(J)

    return Field("endo", fn, chart)


def pushforward_bivector(Q: Field, phi: Diffeo, chart: Chart | None = None) -> Field:
    chart = chart or Q.chart

    def fn(p):
        q = phi.inv(p)
        Q.chart.require_inside(q, "preimage of pushforward")
        J = phi.jac(q)
        return J @ Q(q) @ np.swapaxes(J, -1, -2)

    return Field("bivector", fn, chart)


# --- random test data ------------------------------------------------------

def _skew_project(kind, arr):
    if kind in ("form2", "bivector"):
        return arr - np.swapaxes(arr, -1, -2)
    if kind == "metric":
        return arr + np.swapaxes(arr, -1, -2)
    if kind == "form3":
        return 6.0 * _antisymmetrize3(arr)
    return arr


def random_field(kind: str, chart: Chart, seed: int = 0, amplitude: float = 0.5,
                 terms: int = 3) -> Field:
    """Smooth random field: trigonometric on periodic charts, quadratic otherwise."""
    rng = np.random.default_rng(seed)
    shape = KINDS[kind](chart.dim)
    size = int(np.prod(shape)) if shape else 1
    n = chart.dim
    if all(chart.periodic):
        L = np.array(chart.hi) - np.array(chart.lo)
        K = rng.integers(-1, 2, size=(terms, n)) * (2 * np.pi / L)
        Cc = amplitude * rng.standard_normal((terms, size))
        Cs = amplitude * rng.standard_normal((terms, size))
        c0 = amplitude * rng.standard_normal(size)

        def fn(x):
            ph = x @ K.T
            v = c0 + np.cos(ph) @ Cc + np.sin(ph) @ Cs
            return _skew_project(kind, v.reshape(x.shape[:-1] + shape))
    else:
        center = 0.5 * (np.array(chart.lo) + np.array(chart.hi))
        iu = np.triu_indices(n)
        nfeat = 1 + n + len(iu[0])
        C = amplitude * rng.standard_normal((nfeat, size))

        def fn(x):
            y = x - center
            quad = (y[..., :, None] * y[..., None, :])[..., iu[0], iu[1]]
            feats = np.concatenate([np.ones(y.shape[:-1] + (1,)), y, quad], -1)
            return _skew_project(kind, (feats @ C).reshape(x.shape[:-1] + shape))

    return Field(kind, fn, chart)


def frame_dorfman(S: Callable, x, chart: Chart, H: Field | None = None):
    """Dorfman brackets of all pairs of columns of a section-valued matrix field.

    ``S(x)`` has shape (..., 2n, m); its columns are generalized sections.
    Returns Br with Br[..., :, A, B] = [s_A, s_B] (one Jacobian of S in total).
    """
    n = chart.dim
    Sx = S(x)
    DS = fd_jacobian(S, x, chart.h, chart.order)  # (..., 2n, m, n)
    X, xi = Sx[..., :n, :], Sx[..., n:, :]
    DX, Dxi = DS[..., :n, :, :], DS[..., n:, :, :]
    vec = np.einsum("...kA,...iBk->...iAB", X, DX) - np.einsum("...kB,...iAk->...iAB", X, DX)
    form = (np.einsum("...kA,...jBk->...jAB", X, Dxi)
            + np.einsum("...kB,...kAj->...jAB", xi, DX)
            - np.einsum("...kB,...jAk->...jAB", X, Dxi)
            + np.einsum("...kB,...kAj->...jAB", X, Dxi))
    if H is not None:
        form = form + np.einsum("...aA,...bB,...abj->...jAB", X, X, H(x))
    return np.concatenate([vec, form], axis=-3)
