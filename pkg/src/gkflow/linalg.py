"""Fiberwise linear algebra on V + V*.

A generalized vector is a length-2n array ``(v, xi)``.  Endomorphisms are
2n x 2n arrays in block form ``[[A, Q], [F, B]]`` acting on column vectors.
Two-forms and bivectors enter those blocks through their contraction maps
``X -> i_X F`` and ``xi -> i_xi Q``, so a two-form block is the transpose of
its component array.

The split pairing is ``<X + xi, Y + eta> = s * (eta(X) + xi(Y))`` with
``s = PAIRING_SCALE = 1``.  With this choice ``<a, a> = 2 xi(X)``.  Functions
that depend on the normalization take a ``pairing_scale`` argument.

Every function accepts leading batch axes unless stated otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PAIRING_SCALE = 1.0
MACHINE_TOL = 1e-12


def maxnorm(x) -> float:
    x = np.asarray(x)
    return float(np.max(np.abs(x))) if x.size else 0.0


def dim_of(a) -> int:
    m = np.shape(a)[-1]
    if m % 2:
        raise ValueError(f"generalized vector has odd length {m}")
    return m // 2


def gvec(v, xi) -> np.ndarray:
    v, xi = np.broadcast_arrays(np.asarray(v), np.asarray(xi))
    return np.concatenate([v, xi], axis=-1)


def split(a):
    n = dim_of(a)
    return a[..., :n], a[..., n:]


def pairing_matrix(n: int, pairing_scale: float | None = None) -> np.ndarray:
    s = PAIRING_SCALE if pairing_scale is None else pairing_scale
    z, e = np.zeros((n, n)), np.eye(n)
    return s * np.block([[z, e], [e, z]])


def pairing(a, b, pairing_scale: float | None = None):
    """<a, b> = s (eta(X) + xi(Y)); scalar or batch of scalars."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    s = PAIRING_SCALE if pairing_scale is None else pairing_scale
    X, xi = split(a)
    Y, eta = split(b)
    return s * (np.sum(X * eta, axis=-1) + np.sum(xi * Y, axis=-1))


def blocks(J):
    n = dim_of(J)
    return J[..., :n, :n], J[..., :n, n:], J[..., n:, :n], J[..., n:, n:]


def from_blocks(A, Q, F, B) -> np.ndarray:
    top = np.concatenate(np.broadcast_arrays(A, Q), axis=-1)
    bot = np.concatenate(np.broadcast_arrays(F, B), axis=-1)
    return np.concatenate(np.broadcast_arrays(top, bot), axis=-2)


def tr(M):
    return np.swapaxes(M, -1, -2)


def sym(M):
    return 0.5 * (M + tr(M))


def shear(F) -> np.ndarray:
    """e^F = [[1, 0], [F, 1]] for a two-form block F."""
    F = np.asarray(F)
    n = F.shape[-1]
    e = np.broadcast_to(np.eye(n), F.shape)
    return from_blocks(e, np.zeros_like(F), F, e)


def b_transform(J, F):
    """e^{-F} J e^{F}."""
    return shear(-np.asarray(F)) @ J @ shear(F)


def anti_involution(a):
    """C(X + xi) = X - xi."""
    X, xi = split(np.asarray(a))
    return gvec(X, -xi)


def c_matrix(n: int) -> np.ndarray:
    return np.diag(np.r_[np.ones(n), -np.ones(n)])


def upper_triangular(I, Q):
    """[[I, Q], [0, -I*]]; the complex structure dual I* is I transposed."""
    I = np.asarray(I)
    return from_blocks(I, Q, np.zeros_like(I), -tr(I))


def symplectic_endo(omega):
    """[[0, -omega^-1], [omega, 0]]."""
    omega = np.asarray(omega)
    z = np.zeros_like(omega)
    return from_blocks(z, -np.linalg.inv(omega), omega, z)


def check_gcs_fiber(J, pairing_scale: float | None = None):
    """(max |J^2 + 1|, max |J^T P J - P|) with P the pairing matrix."""
    J = np.asarray(J)
    n = dim_of(J)
    P = pairing_matrix(n, pairing_scale)
    e = np.eye(2 * n)
    return maxnorm(J @ J + e), maxnorm(tr(J) @ P @ J - P)


def is_pairing_orthogonal(M, tol: float = 1e-10) -> bool:
    return check_gcs_fiber(M)[1] < tol


@dataclass(frozen=True)
class GMetricFiber:
    """Generalized metric at a point (or a batch of points): g and b.

    C+ = {X + (b + g) X}, C- = {X + (b - g) X}.
    """

    g: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        g, b = np.asarray(self.g, float), np.asarray(self.b, float)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "b", b)
        if g.shape != b.shape or g.shape[-1] != g.shape[-2]:
            raise ValueError("g and b must be square with equal shapes")

    @classmethod
    def flat(cls, n: int):
        return cls(np.eye(n), np.zeros((n, n)))

    @property
    def n(self) -> int:
        return self.g.shape[-1]

    def validate(self, tol: float = MACHINE_TOL):
        if maxnorm(self.g - tr(self.g)) > tol:
            raise ValueError("g is not symmetric")
        if maxnorm(self.b + tr(self.b)) > tol:
            raise ValueError("b is not skew")
        lam = np.linalg.eigvalsh(sym(self.g))
        if np.min(lam) <= 0:
            raise ValueError(f"g is not positive definite (min eigenvalue {np.min(lam):.3e})")
        return self

    def lifts(self):
        """Columns spanning C+ and C-: [1; b + g] and [1; b - g]."""
        e = np.broadcast_to(np.eye(self.n), self.g.shape)
        up = np.concatenate([e, self.b + self.g], axis=-2)
        um = np.concatenate([e, self.b - self.g], axis=-2)
        return up, um

    def anchors(self):
        """Maps a -> pi(a+) and a -> pi(a-) as n x 2n matrices."""
        gi = np.linalg.inv(self.g)
        e = np.broadcast_to(np.eye(self.n), self.g.shape)
        gib = gi @ self.b
        Lp = 0.5 * np.concatenate([e - gib, gi], axis=-1)
        Lm = 0.5 * np.concatenate([e + gib, -gi], axis=-1)
        return Lp, Lm

    def projectors(self):
        up, um = self.lifts()
        Lp, Lm = self.anchors()
        return up @ Lp, um @ Lm

    def reflection(self):
        """G as an endomorphism: +1 on C+, -1 on C-."""
        Pp, Pm = self.projectors()
        return Pp - Pm

    def form(self, pairing_scale: float | None = None):
        """Matrix of G(a, b) = <a+, b+> - <a-, b->."""
        P = pairing_matrix(self.n, pairing_scale)
        return P @ self.reflection()


def project_pm(a, m: GMetricFiber):
    """Split a = a+ + a- with a+ in C+ and a- in C-."""
    a = np.asarray(a, float)
    Pp, Pm = m.projectors()
    ap = np.einsum("...ij,...j->...i", Pp, a)
    am = np.einsum("...ij,...j->...i", Pm, a)
    return ap, am


def generalized_metric_value(a, m: GMetricFiber, pairing_scale: float | None = None):
    ap, am = project_pm(a, m)
    return pairing(ap, ap, pairing_scale) - pairing(am, am, pairing_scale)


def membership_residual(a, m: GMetricFiber, sign: int = 1) -> float:
    """max |xi - (b +- g) X| for a claimed element of C+ (sign=1) or C- (sign=-1)."""
    X, xi = split(np.asarray(a))
    M = m.b + sign * m.g
    return maxnorm(xi - np.einsum("...ij,...j->...i", M, X))
