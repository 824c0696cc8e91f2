"""Generalized Kaehler pairs from brane solutions and back.

A brane solution is (I, J, Q, F) with J - I = Q F and F J + I* F = 0, F
closed.  When g = -1/2 F (I + J) is positive it defines a generalized Kaehler
pair

    J_{A/B} = 1/2 e^{b} [[J -+ I, -(w_J^-1 -+ w_I^-1)],
                         [w_J -+ w_I, -(J* -+ I*)]] e^{-b}

with w_I = g I, w_J = g J and b = -1/2 F (J - I).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg as la
from .errors import PositivityError, SingularError, ValidationError
from .fields import Chart, Field, ext_d, pointwise
from .gcs import groupoid_residual
from .linalg import maxnorm


def _samples(chart, x):
    return chart.samples() if x is None else np.asarray(x, float)


# --- fiber level -----------------------------------------------------------

def metric_and_b(I, J, F):
    g = -0.5 * F @ (I + J)
    b = -0.5 * F @ (J - I)
    return g, b


def gk_fiber(I, J, F):
    """(J_A, J_B, g, b) from pointwise (batched) brane data."""
    g, b = metric_and_b(I, J, F)
    wI, wJ = g @ I, g @ J
    iI, iJ = np.linalg.inv(wI), np.linalg.inv(wJ)
    eb, emb = la.shear(b), la.shear(-b)
    MA = la.from_blocks(J - I, -(iJ + iI), wJ + wI, -(la.tr(J) - la.tr(I)))
    MB = la.from_blocks(J + I, -(iJ - iI), wJ - wI, -(la.tr(J) + la.tr(I)))
    return 0.5 * eb @ MA @ emb, 0.5 * eb @ MB @ emb, g, b


def gk_invariants(JA, JB, g, pairing_scale: float | None = None) -> dict:
    n = g.shape[-1]
    P = la.pairing_matrix(n, pairing_scale)
    e = np.eye(2 * n)
    Gf = la.tr(JA) @ P @ JB
    lam = np.linalg.eigvalsh(la.sym(Gf))
    return {
        "JA_square": maxnorm(JA @ JA + e),
        "JB_square": maxnorm(JB @ JB + e),
        "commute": maxnorm(JA @ JB - JB @ JA),
        "JA_orthogonal": maxnorm(la.tr(JA) @ P @ JA - P),
        "JB_orthogonal": maxnorm(la.tr(JB) @ P @ JB - P),
        "G_symmetric": maxnorm(Gf - la.tr(Gf)),
        "G_min_eigenvalue": float(np.min(lam)),
    }


# --- field level -----------------------------------------------------------

@dataclass(frozen=True)
class BraneSolution:
    I: Field
    J: Field
    Q: Field
    F: Field

    @property
    def chart(self) -> Chart:
        return self.I.chart

    def residuals(self, x=None) -> dict:
        x = _samples(self.chart, x)
        r1, r2 = groupoid_residual(self.I, self.J, self.Q, self.F, x)
        e = np.eye(self.chart.dim)
        Iv, Jv = self.I(x), self.J(x)
        return {"groupoid_first": r1, "groupoid_second": r2,
                "I_square": maxnorm(Iv @ Iv + e), "J_square": maxnorm(Jv @ Jv + e)}

    def closedness(self, x=None) -> float:
        return maxnorm(ext_d(self.F)(_samples(self.chart, x)))


@dataclass(frozen=True)
class GKPair:
    JA: Field
    JB: Field
    g: Field
    b: Field

    @property
    def chart(self) -> Chart:
        return self.g.chart

    def invariants(self, x=None) -> dict:
        x = _samples(self.chart, x)
        return gk_invariants(self.JA(x), self.JB(x), self.g(x))

    def passes(self, x=None, tol: float = 1e-10) -> bool:
        inv = self.invariants(x)
        return all(v < tol for k, v in inv.items() if k != "G_min_eigenvalue") and inv["G_min_eigenvalue"] > 0


def positivity_margin(I, J, F):
    """Smallest eigenvalue of sym(-1/2 F (I + J)) per point."""
    g = -0.5 * F @ (I + J)
    return np.linalg.eigvalsh(la.sym(g))[..., 0]


def check_positive(s: BraneSolution, x=None):
    x = _samples(s.chart, x)
    lam = positivity_margin(s.I(x), s.J(x), s.F(x))
    i = int(np.argmin(lam))
    if lam[i] <= 0:
        raise PositivityError(f"F is not positive: eigenvalue {lam[i]:.3e} at {x[i].tolist()}",
                              x[i], float(lam[i]))
    return float(lam[i])


def gk_from_solution(s: BraneSolution, x=None, tol: float = 1e-8) -> GKPair:
    """Assemble the generalized Kaehler pair and verify it at sample points."""
    x = _samples(s.chart, x)
    check_positive(s, x)
    Iv, Jv, Fv = s.I(x), s.J(x), s.F(x)
    g, _ = metric_and_b(Iv, Jv, Fv)
    asym = maxnorm(g - la.tr(g))
    if asym > tol * max(1.0, maxnorm(g)):
        raise ValidationError(f"F(I + J) is not symmetric: {asym:.3e}", asym)
    JA, JB, g, b = gk_fiber(Iv, Jv, Fv)
    inv = gk_invariants(JA, JB, la.sym(g))
    bad = {k: v for k, v in inv.items() if k != "G_min_eigenvalue" and v > tol}
    if bad:
        raise ValidationError(f"generalized Kaehler invariants fail: {bad}", max(bad.values()))
    sympl = maxnorm(JA - la.symplectic_endo(Fv))
    if sympl > tol:
        raise ValidationError(f"J_A differs from the symplectic structure of F: {sympl:.3e}", sympl)

    def part(k):
        def fn(p):
            out = gk_fiber(s.I(p), s.J(p), s.F(p))[k]
            return la.sym(out) if k == 2 else out
        return fn

    ch = s.chart
    return GKPair(Field("gendo", part(0), ch), Field("gendo", part(1), ch),
                  Field("metric", part(2), ch), Field("form2", part(3), ch))


def solution_from_gk(g: Field, I: Field, J: Field, x=None) -> BraneSolution:
    """F = -2 g (I + J)^-1, Q = (J - I) F^-1."""
    x = _samples(g.chart, x)
    S = I(x) + J(x)
    det = np.abs(np.linalg.det(S))
    if np.min(det) < 1e-12:
        i = int(np.argmin(det))
        raise SingularError(f"I + J is singular at {x[i].tolist()}")

    def F_fn(p):
        return -2.0 * g(p) @ np.linalg.inv(I(p) + J(p))

    def Q_fn(p):
        return (J(p) - I(p)) @ np.linalg.inv(F_fn(p))

    ch = g.chart
    return BraneSolution(I, J, Field("bivector", Q_fn, ch), Field("form2", F_fn, ch))


def commutator_poisson(g: Field, I: Field, J: Field) -> Field:
    """Q = 1/2 [I, J] g^-1."""
    return pointwise("bivector", lambda gv, a, b: 0.5 * (a @ b - b @ a) @ np.linalg.inv(gv), g, I, J)


def round_trip_residual(s: BraneSolution, x=None) -> float:
    """max deviation of (g, b) after gk_from_solution . solution_from_gk . gk_from_solution."""
    x = _samples(s.chart, x)
    pair = gk_from_solution(s, x)
    s2 = solution_from_gk(pair.g, s.I, s.J, x)
    g1, b1 = metric_and_b(s.I(x), s.J(x), s.F(x))
    g2, b2 = metric_and_b(s2.I(x), s2.J(x), s2.F(x))
    return max(maxnorm(g1 - g2), maxnorm(b1 - b2))


def eigenbundle_residual(s: BraneSolution, x=None) -> float:
    """L+ = {X - i F X : X in T^{1,0}_J} is annihilated by (J_A - i) and (J_B - i)."""
    from .gcs import eigenframe
    x = _samples(s.chart, x)
    JA, JB, _, _ = gk_fiber(s.I(x), s.J(x), s.F(x))
    Jv, Fv = s.J(x), s.F(x)
    worst = 0.0
    for p in range(x.shape[0]):
        K = eigenframe(Jv[p], 1)
        L = np.concatenate([K, -1j * Fv[p] @ K], 0)
        e = np.eye(L.shape[0])
        worst = max(worst, maxnorm((JA[p] - 1j * e) @ L), maxnorm((JB[p] - 1j * e) @ L))
    return worst
