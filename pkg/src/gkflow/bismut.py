"""Generalized metrics, the generalized Bismut connection and its torsion.

Everything here works in the metric splitting (b = 0).  A general (g, b)
is brought there by the B-field transform e^{-b}, which requires db = 0.

The connection is built two ways:

* ``gen_bismut_matrix``: D_X = [[nabla_X, 1/2 g^-1 (i_X H) g^-1],
  [1/2 i_X H, nabla*_X]] and D_xi = 0, with nabla Levi-Civita.
* ``gen_bismut_bracket``: D_Z W = [Z-, W+]+ + [Z+, W-]- + [C Z-, W-]- +
  [C Z+, W+]+ with the twisted Dorfman bracket, projections to C+- and
  C(X + xi) = X - xi.

Christoffel symbols are stored as Gamma[i, j, k] = Gamma^i_{jk} with
(nabla_X Y)^i = X^j (d_j Y^i + Gamma^i_{jk} Y^k).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import linalg as la
from .errors import SingularError, ValidationError
from .fields import (Chart, Field, constant, dorfman, ext_d, fd_jacobian, frame_dorfman, jac,
                     pairing_field)
from .gcs import eigenframe
from .linalg import maxnorm


def _samples(chart, x):
    return chart.samples() if x is None else np.asarray(x, float)


def _inv(g):
    if np.min(np.abs(np.linalg.det(g))) < 1e-14:
        raise SingularError("metric is singular")
    return np.linalg.inv(g)


@dataclass(frozen=True)
class GMetricField:
    """Metric g and closed twist H (may be None for H = 0) in the metric splitting."""

    g: Field
    H: Field | None = None

    @property
    def chart(self) -> Chart:
        return self.g.chart

    @property
    def dim(self) -> int:
        return self.chart.dim

    def H_at(self, x):
        n = self.dim
        if self.H is None:
            return np.zeros(np.shape(x)[:-1] + (n, n, n))
        return self.H(x)

    def validate(self, x=None):
        x = _samples(self.chart, x)
        lam = np.linalg.eigvalsh(la.sym(self.g(x)))
        if np.min(lam) <= 0:
            raise ValidationError(f"metric not positive: min eigenvalue {np.min(lam):.3e}", float(np.min(lam)))
        if self.H is not None:
            from .fields import ext_d_form3
            r = maxnorm(ext_d_form3(self.H)(x))
            if r > self.chart.tol(max(1.0, self.H.max_abs(x))):
                raise ValidationError(f"twist not closed: |dH| = {r:.3e}", r)
        return self

    def fiber(self, x) -> la.GMetricFiber:
        gx = self.g(x)
        return la.GMetricFiber(gx, np.zeros_like(gx))

    def projector_fields(self):
        P = Field("gendo", lambda x: self.fiber(x).projectors()[0], self.chart)
        M = Field("gendo", lambda x: self.fiber(x).projectors()[1], self.chart)
        return P, M

    def reflection(self) -> Field:
        return Field("gendo", lambda x: self.fiber(x).reflection(), self.chart)


def levi_civita(g: Field) -> Field:
    """Christoffel symbols by central differences of g."""
    def fn(x):
        gv = g(x)
        gi = _inv(gv)
        D = jac(g, x)  # D[l, k, j] = d_j g_lk
        A = D + np.swapaxes(D, -1, -2) - np.einsum("...jkl->...ljk", D)
        return 0.5 * np.einsum("...il,...ljk->...ijk", gi, A)
    return Field("christoffel", fn, g.chart)


def metricity_residual(g: Field, Gamma: Field, x) -> float:
    """max |d_k g_ij - Gamma^a_{ki} g_aj - Gamma^a_{kj} g_ia|."""
    gv, Gv = g(x), Gamma(x)
    D = jac(g, x)  # D[i, j, k]
    r = D - np.einsum("...aki,...aj->...ijk", Gv, gv) - np.einsum("...akj,...ia->...ijk", Gv, gv)
    return maxnorm(r)


def torsion_tensor(Gamma: Field, x):
    Gv = Gamma(x)
    return Gv - np.swapaxes(Gv, -1, -2)


def bismut_pm(m: GMetricField):
    """Gamma^{+-} = Gamma +- 1/2 g^il H_jkl."""
    lc = levi_civita(m.g)

    def make(sign):
        def fn(x):
            corr = 0.5 * np.einsum("...il,...jkl->...ijk", _inv(m.g(x)), m.H_at(x))
            return lc(x) + sign * corr
        return Field("christoffel", fn, m.chart)

    return make(1.0), make(-1.0)


@dataclass(frozen=True)
class GenConnection:
    fn: Callable
    label: str
    metric: GMetricField
    frames: Callable | None = None  # optional batched version of frames_apply

    def __call__(self, Z: Field, W: Field) -> Field:
        return self.fn(Z, W)

    def on_frames(self, x):
        """D[..., :, A, B] = D_{e_A} e_B for constant coordinate sections."""
        m = 2 * self.metric.dim
        return self.frames_apply(lambda p: np.broadcast_to(np.eye(m), np.shape(p)[:-1] + (m, m)), x)

    def frames_apply(self, S, x):
        """Out[..., :, A, B] = D_{e_A} s_B for the columns s_B of a matrix field S."""
        x = np.asarray(x, float)
        if self.frames is not None:
            return self.frames(S, x)
        m = 2 * self.metric.dim
        ch = self.metric.chart
        out = []
        for B in range(np.shape(S(x[:1]))[-1]):
            W = Field("gsection", lambda p, B=B: S(p)[..., :, B], ch)
            cols = [self(constant("gsection", np.eye(m)[A], ch), W)(x) for A in range(m)]
            out.append(np.stack(cols, -1))
        return np.stack(out, -1)


def gen_bismut_matrix(m: GMetricField) -> GenConnection:
    n = m.dim
    lc = levi_civita(m.g)

    def D(Z: Field, W: Field) -> Field:
        def fn(x):
            Zx, Wx = Z(x), W(x)
            DW = jac(W, x)
            gi = _inv(m.g(x))
            G = lc(x)
            X = Zx[..., :n]
            Y, eta = Wx[..., :n], Wx[..., n:]
            dY = np.einsum("...j,...ij->...i", X, DW[..., :n, :]) + np.einsum("...j,...ijk,...k->...i", X, G, Y)
            deta = np.einsum("...j,...kj->...k", X, DW[..., n:, :]) - np.einsum("...j,...ijk,...i->...k", X, G, eta)
            B = np.einsum("...i,...ijk->...kj", X, m.H_at(x))
            top = dY + 0.5 * np.einsum("...ij,...j->...i", gi @ B @ gi, eta)
            bot = deta + 0.5 * np.einsum("...ij,...j->...i", B, Y)
            return np.concatenate([top, bot], -1)
        return Field("gsection", fn, m.chart)

    def frames(S, x):
        ch = m.chart
        Sx = S(x)
        DS = fd_jacobian(S, x, ch.h, ch.order)  # [..., i, B, k] = d_k s_B^i
        gi = _inv(m.g(x))
        G = lc(x)
        Hx = m.H_at(x)
        Y, eta = Sx[..., :n, :], Sx[..., n:, :]
        dY = np.einsum("...iBA->...iAB", DS[..., :n, :, :]) + np.einsum("...iAk,...kB->...iAB", G, Y)
        deta = np.einsum("...kBA->...kAB", DS[..., n:, :, :]) - np.einsum("...iAk,...iB->...kAB", G, eta)
        BA = np.einsum("...Ajk->...Akj", Hx)  # BA[A] @ Y = H(e_A, Y, .)
        top = dY + 0.5 * np.einsum("...ij,...Ajk,...kl,...lB->...iAB", gi, BA, gi, eta)
        bot = deta + 0.5 * np.einsum("...Akj,...jB->...kAB", BA, Y)
        zero = np.zeros(Sx.shape[:-2] + (2 * n, n, Sx.shape[-1]))
        return np.concatenate([np.concatenate([top, bot], -3), zero], -2)

    return GenConnection(D, "matrix", m, frames)


def gen_bismut_bracket(m: GMetricField) -> GenConnection:
    n = m.dim
    Pp, Pm = m.projector_fields()
    C = la.c_matrix(n)

    def proj(P, a):
        return Field("gsection", lambda x: np.einsum("...ij,...j->...i", P(x), a(x)), a.chart)

    def flip(a):
        return Field("gsection", lambda x: a(x) @ C, a.chart)

    def D(Z: Field, W: Field) -> Field:
        Zp, Zm, Wp, Wm = proj(Pp, Z), proj(Pm, Z), proj(Pp, W), proj(Pm, W)
        br = lambda a, b: dorfman(a, b, m.H)
        t1 = proj(Pp, br(Zm, Wp))
        t2 = proj(Pm, br(Zp, Wm))
        t3 = proj(Pm, br(flip(Zm), Wm))
        t4 = proj(Pp, br(flip(Zp), Wp))
        return Field("gsection", lambda x: t1(x) + t2(x) + t3(x) + t4(x), m.chart)

    return GenConnection(D, "bracket", m)


def gen_torsion(D: GenConnection, x, pairing_scale: float | None = None):
    """T[..., A, B, C] on the constant frame:
    <D_a b - D_b a - [a, b]_sk, c> + 1/2 (<D_c a, b> - <D_c b, a>)."""
    m = D.metric
    x = np.asarray(x, float)
    n2 = 2 * m.dim
    P = la.pairing_matrix(m.dim, pairing_scale)
    Dab = D.on_frames(x)  # [..., i, A, B]
    eye = np.eye(n2)
    Br = frame_dorfman(lambda p: np.broadcast_to(eye, np.shape(p)[:-1] + (n2, n2)), x, m.chart, m.H)
    Sk = 0.5 * (Br - np.swapaxes(Br, -1, -2))
    V = Dab - np.swapaxes(Dab, -1, -2) - Sk  # [..., i, A, B]
    T1 = np.einsum("ci,...iab->...abc", P, V)
    PD = np.einsum("ji,...icA->...cAj", P, Dab)  # <D_c e_A, e_j>
    T2 = 0.5 * (np.einsum("...cab->...abc", PD) - np.einsum("...cba->...abc", PD))
    return T1 + T2


def torsion_expected(m: GMetricField, x, pairing_scale: float | None = None):
    """2 s (pi+^* H + pi-^* H) on the constant frame; equals pi+^*H + pi-^*H for s = 1/2."""
    s = la.PAIRING_SCALE if pairing_scale is None else pairing_scale
    fib = m.fiber(x)
    Lp, Lm = fib.anchors()
    Hx = m.H_at(x)
    T = (np.einsum("...ia,...jb,...kc,...ijk->...abc", Lp, Lp, Lp, Hx)
         + np.einsum("...ia,...jb,...kc,...ijk->...abc", Lm, Lm, Lm, Hx))
    return 2 * s * T


def mixed_torsion(T, m: GMetricField, x):
    """T restricted to C+ x C- x E."""
    up, um = m.fiber(x).lifts()
    return np.einsum("...abc,...ai,...bj->...ijc", T, up, um)


def skew_residual(T) -> float:
    return max(maxnorm(T + np.swapaxes(T, -2, -3)), maxnorm(T + np.swapaxes(T, -1, -2)))


def to_metric_splitting(J: Field, b: Field, x=None) -> Field:
    """e^{-b} J e^{b}; refuses non-closed b."""
    xs = _samples(J.chart, x)
    r = maxnorm(ext_d(b)(xs))
    if r > J.chart.tol(max(1.0, b.max_abs(xs))):
        raise ValidationError(f"b is not closed (|db| = {r:.3e}); twist shift is not supported", r)
    return Field("gendo", lambda p: la.b_transform(J(p), b(p)), J.chart)


def gk_characterization(J: Field, m: GMetricField, x=None, tol: float | None = None):
    """(max |(D_Z J) W| on frames, max |(3,0)+(0,3) part of T_D|) for the Bismut D.

    J must already be in the metric splitting (use ``to_metric_splitting``).
    """
    x = _samples(m.chart, x)
    Jx = J(x)
    G = m.reflection()(x)
    tol = m.chart.tol(max(1.0, maxnorm(Jx))) if tol is None else tol
    comm = maxnorm(Jx @ G - G @ Jx)
    if comm > tol:
        raise ValidationError(f"J is not G-orthogonal: |[J, G]| = {comm:.3e}", comm)
    D = gen_bismut_matrix(m)
    DJ = D.frames_apply(lambda p: J(p), x)  # D_{e_A}(J e_B)
    De = D.on_frames(x)
    dj = DJ - np.einsum("...ij,...jAB->...iAB", Jx, De)
    T = gen_torsion(D, x, 0.5)
    worst = 0.0
    for p in range(x.shape[0]):
        K = eigenframe(Jx[p], 1)
        T30 = np.einsum("abc,ai,bj,ck->ijk", T[p], K, K, K)
        worst = max(worst, maxnorm(T30))
    return maxnorm(dj), worst


def d_j_residual(J: Field, m: GMetricField, x=None) -> float:
    return gk_characterization(J, m, x)[0]


def pairing_compatibility(D: GenConnection, Z: Field, V: Field, W: Field, x) -> float:
    """pi(Z) <V, W> - <D_Z V, W> - <V, D_Z W>."""
    n = D.metric.dim
    VW = pairing_field(V, W)
    lhs = np.einsum("...k,...k->...", Z(x)[..., :n], jac(VW, x))
    rhs = pairing_field(D(Z, V), W)(x) + pairing_field(V, D(Z, W))(x)
    return maxnorm(lhs - rhs)


def pair_characterization(pair, x=None, tol: float | None = None):
    """Worst (D J residual, (3,0) torsion) over J_A and J_B of a generalized Kaehler pair.

    ``pair`` needs fields JA, JB, g, b (as produced by gk_build).
    """
    x = _samples(pair.g.chart, x)
    m = GMetricField(pair.g)
    worst = (0.0, 0.0)
    for J in (pair.JA, pair.JB):
        r = gk_characterization(to_metric_splitting(J, pair.b, x), m, x, tol)
        worst = (max(worst[0], r[0]), max(worst[1], r[1]))
    return worst
