"""Generalized complex structures on charts.

Covers integrability checks, holomorphic Poisson input data, the groupoid of
closed 2-forms linking two complex structures with a shared Poisson tensor,
automorphisms, and the connection attached to a generalized holomorphic
section.

All tensors follow the storage conventions of :mod:`gkflow.fields`; in
particular a two-form F and a bivector Q are stored as contraction maps so
that the composite ``Q F`` is a plain matrix product.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from . import linalg as la
from .errors import SingularError, ValidationError
from .fields import (Chart, Diffeo, Field, act, cotangent, ext_d, fd_jacobian, frame_dorfman,
                     jac, lie_derivative, pointwise, pushforward_bivector, pushforward_endo,
                     schouten_square)
from .linalg import maxnorm


def _samples(chart: Chart, x):
    return chart.samples() if x is None else np.asarray(x, float)


def _tol(chart: Chart, scale: float = 1.0):
    return chart.tol(max(1.0, scale))


# --- complex structures ----------------------------------------------------

def nijenhuis_tensor(I: Field, x):
    """N[k, i, j] = N_I(e_i, e_j)^k on the coordinate frame."""
    Iv = I(x)
    DI = jac(I, x)  # DI[k, j, l] = d_l I^k_j
    t1 = np.einsum("...li,...kjl->...kij", Iv, DI)
    t3 = np.einsum("...kl,...lij->...kij", Iv, DI)  # I^k_l d_j I^l_i
    return t1 - np.swapaxes(t1, -1, -2) + t3 - np.swapaxes(t3, -1, -2)


def nijenhuis_residual(I: Field, x=None) -> float:
    return maxnorm(nijenhuis_tensor(I, _samples(I.chart, x)))


def type20_residual(I: Field, P: Field, Q: Field, x) -> float:
    """sigma(I* xi, eta) = i sigma(xi, eta) for sigma = P + iQ, as maps: N I^T = i N."""
    Iv, N = I(x), P(x) + 1j * Q(x)
    return maxnorm(N @ la.tr(Iv) - 1j * N)


@dataclass(frozen=True)
class HoloPoisson:
    """Complex structure I with sigma = P + iQ of type (2,0) and [sigma, sigma] = 0."""

    I: Field
    P: Field
    Q: Field

    @property
    def chart(self) -> Chart:
        return self.I.chart

    @property
    def sigma(self) -> Field:
        return Field("bivector", lambda x: self.P(x) + 1j * self.Q(x), self.chart)

    @classmethod
    def from_Q(cls, I: Field, Q: Field):
        """Fill in P = I Q (the real part determined by the imaginary part)."""
        return cls(I, pointwise("bivector", lambda a, b: a @ b, I, Q), Q)

    def residuals(self, x=None) -> dict:
        x = _samples(self.chart, x)
        Iv = self.I(x)
        return {
            "square": maxnorm(Iv @ Iv + np.eye(Iv.shape[-1])),
            "nijenhuis": nijenhuis_residual(self.I, x),
            "type20": type20_residual(self.I, self.P, self.Q, x),
            "schouten": maxnorm(schouten_square(self.sigma)(x)),
        }

    def validate(self, x=None, tol: float | None = None):
        x = _samples(self.chart, x)
        scale = max(self.I.max_abs(x), self.Q.max_abs(x), self.P.max_abs(x))
        tol = _tol(self.chart, scale) if tol is None else tol
        res = self.residuals(x)
        for k, v in res.items():
            if v > tol:
                raise ValidationError(f"holomorphic Poisson check '{k}' fails: {v:.3e} > {tol:.3e}", v)
        return res


# --- generalized complex structures ----------------------------------------

@dataclass(frozen=True)
class GCStructure:
    J: Field
    H: Field | None = None

    @property
    def chart(self) -> Chart:
        return self.J.chart

    def fiber_residuals(self, x=None):
        Jx = self.J(_samples(self.chart, x))
        return la.check_gcs_fiber(Jx)

    def validate(self, x=None, tol: float = 1e-10):
        sq, orth = self.fiber_residuals(x)
        if max(sq, orth) > tol:
            raise ValidationError(f"not an orthogonal complex structure: {sq:.3e}, {orth:.3e}", max(sq, orth))
        return self


def from_holo_poisson(hp: HoloPoisson, x=None, validate: bool = True) -> GCStructure:
    """J = [[I, Q], [0, -I*]] with zero twist."""
    if validate:
        hp.validate(x)
    return GCStructure(pointwise("gendo", la.upper_triangular, hp.I, hp.Q))


def from_symplectic(omega: Field, x=None) -> GCStructure:
    """J = [[0, -omega^-1], [omega, 0]]."""
    xs = _samples(omega.chart, x)
    det = np.linalg.det(omega(xs))
    if np.min(np.abs(det)) < 1e-12:
        i = int(np.argmin(np.abs(det)))
        raise SingularError(f"degenerate symplectic form at {xs[i].tolist()}")
    return GCStructure(pointwise("gendo", la.symplectic_endo, omega))


def poisson_from_gcs(g: GCStructure) -> Field:
    n = g.chart.dim
    return Field("bivector", lambda x: g.J(x)[..., :n, n:], g.chart)


def b_transform_field(g: GCStructure, F: Field) -> GCStructure:
    return GCStructure(pointwise("gendo", la.b_transform, g.J, F), g.H)


def gen_nijenhuis(g: GCStructure, x=None) -> float:
    """Max over frame pairs and points of the Nijenhuis tensor of J for the skew bracket."""
    x = _samples(g.chart, x)
    m = 2 * g.chart.dim
    eye = np.eye(m)

    def S(p):
        Jp = g.J(p)
        return np.concatenate([np.broadcast_to(eye, Jp.shape), Jp], axis=-1)

    Br = frame_dorfman(S, x, g.chart, g.H)
    sk = 0.5 * (Br - np.swapaxes(Br, -1, -2))
    Jx = g.J(x)
    E, JJ = slice(0, m), slice(m, 2 * m)
    N = (sk[..., JJ, JJ] - np.einsum("...ij,...jAB->...iAB", Jx, sk[..., JJ, E])
         - np.einsum("...ij,...jAB->...iAB", Jx, sk[..., E, JJ]) - sk[..., E, E])
    return maxnorm(N)


# --- groupoid of brane solutions -------------------------------------------

def groupoid_residual(Ii: Field, Ij: Field, Q: Field, F: Field, x=None):
    """(max |Ij - Ii - Q F|, max |F Ij + Ii* F|)."""
    x = _samples(Ii.chart, x)
    Iiv, Ijv, Qv, Fv = Ii(x), Ij(x), Q(x), F(x)
    return maxnorm(Ijv - Iiv - Qv @ Fv), maxnorm(Fv @ Ijv + la.tr(Iiv) @ Fv)


def nlin_residual(F: Field, I: Field, Q: Field, x=None) -> float:
    """max |F I + I* F + F Q F|."""
    x = _samples(I.chart, x)
    Fv, Iv, Qv = F(x), I(x), Q(x)
    return maxnorm(Fv @ Iv + la.tr(Iv) @ Fv + Fv @ Qv @ Fv)


@dataclass(frozen=True)
class GroupoidMorphism:
    F: Field
    source: str
    target: str

    def residuals(self, structures: dict, Q: Field, x=None):
        return groupoid_residual(structures[self.source], structures[self.target], Q, self.F, x)

    def closedness(self, x=None) -> float:
        return maxnorm(ext_d(self.F)(_samples(self.F.chart, x)))

    def inverse(self) -> "GroupoidMorphism":
        return GroupoidMorphism(-self.F, self.target, self.source)


def compose_morphisms(f: GroupoidMorphism, g: GroupoidMorphism) -> GroupoidMorphism:
    if f.target != g.source:
        raise ValueError(f"cannot compose {f.source}->{f.target} with {g.source}->{g.target}")
    return GroupoidMorphism(f.F + g.F, f.source, g.target)


def automorphism_residual(phi: Diffeo, B: Field, I: Field, Q: Field, x=None):
    """Residuals of phi_* Q = Q, phi_* I - I = Q B and B phi_* I + I* B = 0."""
    x = _samples(I.chart, x)
    Qp = pushforward_bivector(Q, phi)(x)
    Ip = pushforward_endo(I, phi)(x)
    Iv, Qv, Bv = I(x), Q(x), B(x)
    return (maxnorm(Qp - Qv), maxnorm(Ip - Iv - Qv @ Bv), maxnorm(Bv @ Ip + la.tr(Iv) @ Bv))


# --- generalized holomorphic line bundles -----------------------------------

@dataclass(frozen=True)
class LineConnection:
    """A = J (0, d log|s|): vector part X and form part A."""

    section: Field  # gsection
    X: Field
    A: Field

    def lie_q_residual(self, Q: Field, x=None) -> float:
        return maxnorm(lie_derivative(self.X, Q)(_samples(Q.chart, x)))

    def curvature(self) -> Field:
        return ext_d(self.A)


def poincare_lelong(g: GCStructure, s_abs: Field, x=None) -> LineConnection:
    xs = _samples(g.chart, x)
    vals = s_abs(xs)
    if np.any(vals <= 0):
        i = int(np.argmin(vals))
        raise ValidationError(f"|s| is not positive at {xs[i].tolist()}", float(vals[i]))
    logs = Field("scalar", lambda p: np.log(s_abs(p)), s_abs.chart)
    sec = act(g.J, cotangent(ext_d(logs)))
    n = g.chart.dim
    X = Field("vector", lambda p: sec(p)[..., :n], g.chart)
    A = Field("form1", lambda p: sec(p)[..., n:], g.chart)
    return LineConnection(sec, X, A)


def module_transport(A: Field, X: Field, F: Field) -> Field:
    """A' = A + i_X F."""
    return Field("form1", lambda p: A(p) + np.einsum("...ij,...j->...i", F(p), X(p)), A.chart)


def poisson_module_residual(hp: HoloPoisson, X: Field, x=None, F0: Field | None = None):
    """Compatibility of a real vector field X with (I, sigma).

    First entry: |L_X I - Q F0| (|L_X I| without F0), the real form of the
    d-bar equation for X^{1,0}.  Second entry: |L_X Q| + |L_X P - Q F0 Q|,
    using P = I Q, so L_X P = (L_X I) Q + I L_X Q.
    """
    x = _samples(hp.chart, x)
    LI = lie_derivative(X, hp.I)(x)
    LQ = lie_derivative(X, hp.Q)(x)
    LP = lie_derivative(X, hp.P)(x)
    Qv = hp.Q(x)
    if F0 is None:
        return maxnorm(LI), maxnorm(LQ) + maxnorm(LP)
    QF = Qv @ F0(x)
    return maxnorm(LI - QF), maxnorm(LQ) + maxnorm(LP - QF @ Qv)


def eigenframe(J, sign: int = 1, rcond: float = 1e-8):
    """Orthonormal basis of ker(J - sign*i) at a single point."""
    J = np.asarray(J)
    K = null_space(J - sign * 1j * np.eye(J.shape[-1]), rcond=rcond)
    if K.shape[1] != J.shape[-1] // 2:
        raise ValidationError(f"eigenspace of J has dimension {K.shape[1]}, expected {J.shape[-1] // 2}")
    return K
