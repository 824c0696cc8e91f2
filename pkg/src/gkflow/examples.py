"""Registry of concrete geometries used by the tests and the command line.

Each entry is built on demand, validated, and carries its own tolerance
table.  Names:

kahler_torus_T4       flat T^4, standard I, omega = dx1^dx2 + dx3^dx4, Q = 0, H = 0
kahler_torus_T4_badH  same with a non-closed twist (negative control)
bismut_torus_T3       flat T^3 with H = k dx1^dx2^dx3
elliptic_Ec           the elliptic-curve family (I_c, sigma_c, F_c), parameter c
synthetic_flow_R4     constant-coefficient flow input (I0, sigma, F0, X = A x)
cp2_chart             affine chart of CP^2 with sigma = cubic d_z1 ^ d_z2
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np
from scipy.optimize import minimize

from . import linalg as la
from .errors import ValidationError
from .fields import Chart, Field, act, constant, random_field, pointwise
from .flow import FlowInput, validate_flow_input
from .gcs import GCStructure, HoloPoisson, from_holo_poisson, poincare_lelong
from .linalg import maxnorm
from .spinor import TENSOR_FACTOR, bivector_to_real_map, elliptic_chart, elliptic_tensors

I_STD = np.kron(np.eye(2), np.array([[0.0, -1.0], [1.0, 0.0]]))


def volume_form3(k: float = 1.0) -> np.ndarray:
    H = np.zeros((3, 3, 3))
    for p in permutations(range(3)):
        H[p] = k * np.linalg.det(np.eye(3)[list(p)])
    return H


def dz1_dz2_tensor() -> np.ndarray:
    """P + iQ for sigma = d_z1 ^ d_z2 in the tensor normalization."""
    B = np.zeros((4, 4), complex)
    B[0, 2], B[2, 0] = 1, -1
    return TENSOR_FACTOR * bivector_to_real_map(B)


@dataclass
class ExampleGeometry:
    name: str
    chart: Chart
    I: Field | None = None
    P: Field | None = None
    Q: Field | None = None
    F: Field | None = None
    H: Field | None = None
    g: Field | None = None
    X: Field | None = None
    extra: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    notes: str = ""
    residuals: dict = field(default_factory=dict)

    def samples(self, count: int = 64, seed: int = 0):
        return self.chart.samples(count, seed)

    def holo_poisson(self) -> HoloPoisson:
        return HoloPoisson(self.I, self.P, self.Q)

    def gcs(self) -> GCStructure:
        if self.Q is None:
            return GCStructure(pointwise("gendo", lambda I: la.upper_triangular(I, np.zeros_like(I)), self.I), self.H)
        return GCStructure(pointwise("gendo", la.upper_triangular, self.I, self.Q), self.H)

    def flow_input(self) -> FlowInput:
        if self.X is None:
            raise ValidationError(f"example {self.name} has no flow vector field")
        I0 = self.extra.get("I0_field", self.I)
        Q = self.extra.get("Q0_field", self.Q)
        return FlowInput(I0, Q, self.F, self.X)

    def axiom_sections(self, seed: int = 0, x=None):
        """Three generalized sections and a function, each scaled to unit size on the samples.

        On examples with a nonzero Poisson tensor one section is twisted by
        the example's generalized complex structure.
        """
        x = self.samples() if x is None else x
        ch = self.chart
        raw = [random_field("gsection", ch, seed + k) for k in range(3)]
        if self.Q is not None and self.I is not None:
            J = self.gcs().J
            raw[0] = act(J, raw[0])
            raw[2] = act(J, raw[2])
        out = [s * (1.0 / maxnorm(s(x))) for s in raw]
        f = random_field("scalar", ch, seed + 3)
        f = f * (1.0 / maxnorm(f(x)))
        return out[0], out[1], out[2], f


def _kahler_torus(h: float = 1e-3) -> ExampleGeometry:
    ch = Chart.torus(4, h=h)
    ex = ExampleGeometry(
        "kahler_torus_T4", ch,
        I=constant("endo", I_STD, ch),
        P=constant("bivector", np.zeros((4, 4)), ch),
        Q=None,
        F=constant("form2", I_STD.copy(), ch),
        g=constant("metric", np.eye(4), ch),
        tolerances={"h": h, "axioms": 100 * h**2, "two_path": 1e-8, "dj": 1e-8},
        notes="omega = g I is the map of dx1^dx2 + dx3^dx4",
    )
    return ex


def _kahler_torus_bad(h: float = 1e-3, eps: float = 1.0) -> ExampleGeometry:
    ex = _kahler_torus(h)
    ex.name = "kahler_torus_T4_badH"
    ch = ex.chart
    H3 = np.zeros((4, 4, 4))
    H3[:3, :3, :3] = volume_form3(1.0)
    ex.H = Field("form3", lambda x: eps * np.sin(x[..., 3])[..., None, None, None] * H3, ch)
    ex.notes = "H = eps sin(x4) dx1^dx2^dx3 is not closed; the Jacobi identity must fail"
    ex.extra["expect_fail"] = ["jacobi"]
    return ex


def _bismut_torus(h: float = 1e-3, k: float = 0.7) -> ExampleGeometry:
    ch = Chart.torus(3, h=h)
    return ExampleGeometry(
        "bismut_torus_T3", ch,
        g=constant("metric", np.eye(3), ch),
        H=constant("form3", volume_form3(k), ch),
        extra={"k": k},
        tolerances={"h": h, "two_path": 1e-8, "torsion": 1e-8},
    )


def _elliptic(c: float = 1.0, h: float = 1e-3, alpha: float = 1.0) -> ExampleGeometry:
    ch = elliptic_chart(h)
    et, e0 = elliptic_tensors(c, ch), elliptic_tensors(0.0, ch)
    X = Field("vector", lambda x: alpha * np.stack([0 * x[..., 0], 0 * x[..., 0], -x[..., 3], x[..., 2]], -1), ch)
    return ExampleGeometry(
        "elliptic_Ec", ch, I=et.I, P=et.P, Q=et.Q, F=et.F, X=X,
        extra={"c": c, "alpha": alpha, "I0_field": e0.I, "Q0_field": e0.Q, "P0_field": e0.P},
        tolerances={"h": h, "axioms": 100 * h**2, "spinor": 1e-13, "bridge": 100 * h**2, "im_sigma": 1e-12},
        notes="candidate flow field alpha (x3 d4 - x4 d3) = alpha i (w d_w - wb d_wb)",
    )


def synthetic_parameters(kappa: float = 0.125):
    """Frozen constant-coefficient flow data.

    I0 standard, sigma = d_z1 ^ d_z2 (tensor normalization), F0 = kappa I0 (the
    Kaehler form of g0 = kappa), A = -1/2 I0 Q F0.  Then L_X Q = -AQ - QA^T = 0
    and L_X I0 = [I0, A] = Q F0 exactly.  The flow is a rotation with angular
    speed kappa / 2 and g_t = kappa sin(kappa t) / (kappa t), so the
    positivity threshold is t* = pi / kappa.
    """
    S = dz1_dz2_tensor()
    P, Q = S.real, S.imag
    F0 = kappa * I_STD
    A = -0.5 * I_STD @ Q @ F0
    return {"I0": I_STD, "P": P, "Q": Q, "F0": F0, "A": A, "kappa": kappa,
            "t_star": np.pi / kappa}


def _synthetic(h: float = 1e-3, kappa: float = 0.125) -> ExampleGeometry:
    p = synthetic_parameters(kappa)
    ch = Chart.box([-3.0] * 4, [3.0] * 4, h=h, sample_box=([-1.0] * 4, [1.0] * 4))
    A = p["A"]
    return ExampleGeometry(
        "synthetic_flow_R4", ch,
        I=constant("endo", p["I0"], ch),
        P=constant("bivector", p["P"], ch),
        Q=constant("bivector", p["Q"], ch),
        F=constant("form2", p["F0"], ch),
        X=Field("vector", lambda x: x @ A.T, ch),
        extra=p,
        tolerances={"h": h, "dt": 1e-2, "input": 1e-10, "r": 1e-6, "gk": 1e-5, "t_scan": 30.0},
    )


def cubic_from_coeffs(sigma_coeffs):
    """Complex polynomial sum c_ab z1^a z2^b from {(a, b): c} or a 10-vector."""
    if not isinstance(sigma_coeffs, dict):
        mons = [(a, b) for d in range(4) for a in range(d, -1, -1) for b in [d - a]]
        sigma_coeffs = dict(zip(mons, sigma_coeffs))
    items = [(int(a), int(b), complex(c)) for (a, b), c in sigma_coeffs.items()]
    if any(a + b > 3 for a, b, _ in items):
        raise ValueError("a cubic has total degree at most 3")

    def p(z1, z2):
        return sum(c * z1**a * z2**b for a, b, c in items) + 0 * z1

    return p


def _min_abs_on_box(f, ch: Chart, count: int = 4096, starts: int = 8) -> float:
    """Sobol sampling followed by bounded local refinement from the lowest samples."""
    xs = ch.samples(count, seed=1)
    v = f(xs)
    bounds = list(zip(ch.lo, ch.hi))
    best = float(np.min(v))
    for i in np.argsort(v)[:starts]:
        r = minimize(lambda y: float(f(y[None])[0] ** 2), xs[i], bounds=bounds, method="L-BFGS-B")
        best = min(best, float(np.sqrt(max(r.fun, 0.0))))
    return best


def cp2_chart(sigma_coeffs=None, h: float = 1e-3, name: str = "cp2_chart") -> ExampleGeometry:
    """Affine chart of CP^2 with sigma = cubic(z1, z2) d_z1 ^ d_z2.

    The generalized holomorphic section is sigma itself with the Fubini-Study
    type norm |s| = |cubic| (1 + |z|^2)^(-3/2); X and the curvature F0 come
    from the connection J d log|s|.  Flows may leave the chart ("stretch").
    """
    sigma_coeffs = {(0, 0): 1.0} if sigma_coeffs is None else sigma_coeffs
    p = cubic_from_coeffs(sigma_coeffs)
    ch = Chart.box([-1.0] * 4, [1.0] * 4, h=h)
    S0 = dz1_dz2_tensor()

    def zs(x):
        return x[..., 0] + 1j * x[..., 1], x[..., 2] + 1j * x[..., 3]

    def sig(x):
        v = p(*zs(x))
        return v[..., None, None] * S0

    pmin = _min_abs_on_box(lambda y: np.abs(p(*zs(y))), ch)
    if pmin < 1e-3:
        raise ValidationError(f"cubic vanishes in the chart (min |p| = {pmin:.2e})", pmin)
    I = constant("endo", I_STD, ch)
    P = Field("bivector", lambda x: np.real(sig(x)), ch)
    Q = Field("bivector", lambda x: np.imag(sig(x)), ch)
    s_abs = Field("scalar", lambda x: np.abs(p(*zs(x))) * (1 + np.sum(x**2, -1)) ** -1.5, ch)
    g = GCStructure(pointwise("gendo", la.upper_triangular, I, Q))
    conn = poincare_lelong(g, s_abs)
    F0 = -1.0 * conn.curvature()
    ex = ExampleGeometry(
        name, ch, I=I, P=P, Q=Q, F=F0, X=conn.X,
        extra={"sigma_coeffs": dict(sigma_coeffs) if isinstance(sigma_coeffs, dict) else list(sigma_coeffs),
               "s_abs": s_abs, "connection": conn, "stretch": True},
        tolerances={"h": h, "holo": None},
        notes="F0 = -dA with A the form part of J d log|s|; sign chosen so F0 is positive",
    )
    ex.residuals = validate(ex)
    _check_registration(ex)
    return ex


GENERIC_CUBIC = {(0, 0): 1.0, (1, 0): 0.3, (0, 2): 0.2j, (3, 0): 0.1, (1, 2): -0.15}

_BUILDERS = {
    "kahler_torus_T4": _kahler_torus,
    "kahler_torus_T4_badH": _kahler_torus_bad,
    "bismut_torus_T3": _bismut_torus,
    "elliptic_Ec": _elliptic,
    "synthetic_flow_R4": _synthetic,
    "cp2_chart": cp2_chart,
    "cp2_cubic": lambda h=1e-3: cp2_chart(GENERIC_CUBIC, h, "cp2_cubic"),
}


def names():
    return list(_BUILDERS)


def validate(ex: ExampleGeometry) -> dict:
    """Re-run the invariant suites that apply to an example; returns residuals."""
    x = ex.samples()
    res = {}
    if ex.I is not None and ex.P is not None:
        Q = ex.Q if ex.Q is not None else constant("bivector", np.zeros((ex.chart.dim,) * 2), ex.chart)
        res.update({f"holo_{k}": v for k, v in HoloPoisson(ex.I, ex.P, Q).residuals(x).items()})
    if ex.g is not None:
        lam = np.linalg.eigvalsh(ex.g(x))
        res["metric_min_eigenvalue"] = float(np.min(lam))
    if ex.X is not None and ex.F is not None:
        lq, li = validate_flow_input(ex.flow_input(), x)
        res["flow_lie_Q"], res["flow_lie_I"] = lq, li
    return res


def get(name: str, validate_on_build: bool = True, **params) -> ExampleGeometry:
    if name not in _BUILDERS:
        raise KeyError(f"unknown example {name!r}; known: {', '.join(_BUILDERS)}")
    ex = _BUILDERS[name](**params)
    if validate_on_build:
        ex.residuals = validate(ex)
        _check_registration(ex)
    return ex


def _check_registration(ex: ExampleGeometry):
    r = ex.residuals
    x = ex.samples()
    scale = 1.0
    for f in (ex.I, ex.P, ex.Q):
        if f is not None:
            scale = max(scale, f.max_abs(x))
    tol = ex.chart.tol(scale)
    for k, v in r.items():
        if k.startswith("holo_") and v > tol:
            raise ValidationError(f"example {ex.name}: {k} = {v:.3e} exceeds {tol:.3e}", v)
    if "metric_min_eigenvalue" in r and r["metric_min_eigenvalue"] <= 0:
        raise ValidationError(f"example {ex.name}: metric not positive")
    if ex.name == "synthetic_flow_R4":
        bad = max(r["flow_lie_Q"], r["flow_lie_I"])
        if bad > ex.tolerances["input"]:
            raise ValidationError(f"synthetic flow input drifted: {bad:.3e}", bad)


# --- elliptic scans --------------------------------------------------------

def elliptic_positivity_scan(cs=(0.0, 0.01, 0.1, 0.5, 1.0), lambdas=(0.0, 0.01, 0.1, 1.0),
                             samples: int = 256, tol: float = 1e-8):
    """Eigenvalue scan of g = -1/2 F (I0 + J) for F = F_c + lam omega0, J = I0 + Q0 F.

    omega0 is the flat Kaehler form of I0.  A row counts as positive only if
    the margin is positive and F still solves F I0 + I0* F + F Q0 F = 0 (so
    that J is a genuine brane partner).  Returns (rows, positive c values).
    """
    ch = elliptic_chart()
    x = ch.samples(samples)
    e0 = elliptic_tensors(0.0, ch)
    I0, Q0 = e0.I(x), e0.Q(x)
    omega0 = la.tr(I_STD)
    rows = []
    for lam in lambdas:
        for c in cs:
            F = elliptic_tensors(c, ch).F(x) + lam * omega0
            J = I0 + Q0 @ F
            g = -0.5 * F @ (I0 + J)
            margin = float(np.min(np.linalg.eigvalsh(la.sym(g))[..., 0]))
            nlin = maxnorm(F @ I0 + la.tr(I0) @ F + F @ Q0 @ F)
            rows.append({"c": c, "lambda": lam, "margin": margin, "nlin": nlin,
                         "positive": margin > tol and nlin < tol})
    good = sorted({r["c"] for r in rows if r["positive"]})
    return rows, good


def elliptic_flow_scan(alphas=(0.0, 0.5, 1.0, 2.0), c: float = 1.0, samples: int = 64):
    """validate_flow_input for X = alpha (x3 d4 - x4 d3) with F0 = F_c on (I0, Q0).

    Returns rows {alpha, lie_Q, lie_I} and the list of alphas passing at
    the chart tolerance.
    """
    rows, passing = [], []
    for a in alphas:
        ex = _elliptic(c=c, alpha=a)
        x = ex.samples(samples)
        lq, li = validate_flow_input(ex.flow_input(), x)
        tol = ex.chart.tol(max(1.0, ex.Q.max_abs(x)))
        rows.append({"alpha": a, "lie_Q": lq, "lie_I": li, "tol": tol})
        if max(lq, li) < tol:
            passing.append(a)
    return rows, passing
