"""Exterior algebra in two complex dimensions and the elliptic-curve family.

Forms are stored as 16 complex coefficients on monomials of the generators
``dz, dzb, dw, dwb`` (indices 0..3); monomial ``m`` is a bitmask with
generators wedged in increasing index order.  Bivectors are 4 x 4 skew
complex arrays ``B`` meaning ``sum_{k<l} B[k, l] d_k ^ d_l``.

Contraction convention: ``(d_k ^ d_l) -| a = i_{d_l} i_{d_k} a`` so that
``(dz_vec ^ dw_vec) -| (dz ^ dw) = +1``.

Coordinates on the real chart: ``z = x1 + i x2``, ``w = x3 + i x4``.

The real tensor attached to a holomorphic bivector ``sigma`` is
``P + iQ = 4 sigma``: with that normalization the upper-triangular structure
``[[I, Q], [0, -I*]]`` has ``exp(sigma) Omega`` as its pure spinor.  The
factor is two factors of 2 from ``d/dz = (d/dx - i d/dy) / 2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .fields import Chart, Field, pointwise
from .gcs import HoloPoisson
from .errors import ValidationError

TENSOR_FACTOR = 4.0
NGEN = 4
DZ, DZB, DW, DWB = 0, 1, 2, 3


def _bits(m: int):
    return [k for k in range(NGEN) if m >> k & 1]


def _wedge_sign(a: int, b: int) -> int:
    s = 0
    for j in _bits(b):
        s += sum(1 for i in _bits(a) if i > j)
    return -1 if s % 2 else 1


_DEG = np.array([bin(m).count("1") for m in range(16)])


@dataclass(frozen=True)
class ExtForm:
    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=complex)
        if c.shape != (16,):
            raise ValueError("an ExtForm has 16 coefficients")
        object.__setattr__(self, "c", c)

    @classmethod
    def zero(cls):
        return cls(np.zeros(16))

    @classmethod
    def scalar(cls, s):
        c = np.zeros(16, complex)
        c[0] = s
        return cls(c)

    @classmethod
    def gen(cls, k: int, coeff=1.0):
        c = np.zeros(16, complex)
        c[1 << k] = coeff
        return cls(c)

    @classmethod
    def monomial(cls, *gens, coeff=1.0):
        out = cls.scalar(coeff)
        for k in gens:
            out = out.wedge(cls.gen(k))
        return out

    def wedge(self, other: "ExtForm") -> "ExtForm":
        out = np.zeros(16, complex)
        for a in np.nonzero(self.c)[0]:
            for b in np.nonzero(other.c)[0]:
                if a & b:
                    continue
                out[a | b] += _wedge_sign(int(a), int(b)) * self.c[a] * other.c[b]
        return ExtForm(out)

    __xor__ = wedge

    def __add__(self, other):
        return ExtForm(self.c + other.c)

    def __sub__(self, other):
        return ExtForm(self.c - other.c)

    def __neg__(self):
        return ExtForm(-self.c)

    def __mul__(self, s):
        return ExtForm(s * self.c)

    __rmul__ = __mul__

    def degree_part(self, k: int) -> "ExtForm":
        return ExtForm(np.where(_DEG == k, self.c, 0))

    def is_zero(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.c) <= tol))

    def as_dict(self, tol: float = 0.0) -> dict:
        names = ("dz", "dzb", "dw", "dwb")
        out = {}
        for m in range(16):
            if abs(self.c[m]) > tol:
                out["^".join(names[k] for k in _bits(m)) or "1"] = self.c[m]
        return out


def interior_vector(v, a: ExtForm) -> ExtForm:
    """i_v a for v given by 4 complex coefficients on (d_z, d_zb, d_w, d_wb)."""
    v = np.asarray(v, complex)
    out = np.zeros(16, complex)
    for m in np.nonzero(a.c)[0]:
        bits = _bits(int(m))
        for pos, k in enumerate(bits):
            if v[k] != 0:
                out[m & ~(1 << k)] += (-1) ** pos * v[k] * a.c[m]
    return ExtForm(out)


@dataclass(frozen=True)
class ExtBivector:
    B: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.B, dtype=complex)
        if B.shape != (4, 4):
            raise ValueError("an ExtBivector is a 4 x 4 array")
        if not np.allclose(B, -B.T):
            raise ValueError("bivector array must be skew")
        object.__setattr__(self, "B", B)

    @classmethod
    def from_upper(cls, U):
        """Build from the coefficients B[k, l], k < l (the strict upper triangle)."""
        U = np.triu(np.asarray(U, complex), 1)
        return cls(U - U.T)

    @classmethod
    def wedge_of(cls, u, v):
        """u ^ v for vectors u, v in the complex basis."""
        u, v = np.asarray(u, complex), np.asarray(v, complex)
        return cls(np.outer(u, v) - np.outer(v, u))

    def __add__(self, other):
        return ExtBivector(self.B + other.B)

    def __mul__(self, s):
        return ExtBivector(s * self.B)

    __rmul__ = __mul__


def contract(B: ExtBivector, a: ExtForm) -> ExtForm:
    out = ExtForm.zero()
    e = np.eye(NGEN)
    for k in range(NGEN):
        for l in range(k + 1, NGEN):
            if B.B[k, l] != 0:
                out = out + B.B[k, l] * interior_vector(e[l], interior_vector(e[k], a))
    return out


def exp_act(B, a: ExtForm) -> ExtForm:
    """exp of wedge by a 2-form or contraction by a bivector, applied to a."""
    if isinstance(B, ExtBivector):
        step = lambda f: contract(B, f)
    elif isinstance(B, ExtForm):
        step = lambda f: B.wedge(f)
    elif np.isscalar(B) and B == 0:
        return a
    else:
        raise TypeError("exp_act needs an ExtForm or an ExtBivector")
    out, term = a, a
    for k in range(1, 3):
        term = step(term)
        out = out + term * (1.0 / factorial(k))
    return out


def clifford(v, xi, a: ExtForm) -> ExtForm:
    """(v + xi) . a = i_v a + xi ^ a, both in the complex basis."""
    return interior_vector(v, a) + _one_form(xi).wedge(a)


def _one_form(xi) -> ExtForm:
    c = np.zeros(16, complex)
    for k in range(NGEN):
        c[1 << k] = xi[k]
    return ExtForm(c)


# real (x1..x4) <-> complex (z, zb, w, wb) bases
# columns: real components of d_z, d_zb, d_w, d_wb
VEC_C2R = np.array([[0.5, 0.5, 0, 0], [-0.5j, 0.5j, 0, 0],
                    [0, 0, 0.5, 0.5], [0, 0, -0.5j, 0.5j]])
# rows: dz, dzb, dw, dwb in the real coframe
FORM_C2R = np.array([[1, 1j, 0, 0], [1, -1j, 0, 0], [0, 0, 1, 1j], [0, 0, 1, -1j]])


def vector_to_complex(X):
    """Real components X^i -> coefficients on (d_z, d_zb, d_w, d_wb)."""
    return np.linalg.solve(VEC_C2R, np.asarray(X, complex))


def form_to_complex(xi):
    """Real components xi_i -> coefficients on (dz, dzb, dw, dwb)."""
    return np.linalg.solve(FORM_C2R.T, np.asarray(xi, complex))


def bivector_to_real_map(B):
    """Complex-basis bivector array -> real contraction map (complex valued)."""
    comps = VEC_C2R @ np.asarray(B) @ VEC_C2R.T
    return np.swapaxes(comps, -1, -2)


# --- the elliptic family ----------------------------------------------------

def _check_z(z):
    if np.any(np.abs(z) == 0):
        raise ValueError("z = 0 is excluded")


def omega_c(c, z, w) -> ExtForm:
    """dz/z ^ (dw + i c w dzb / zb)."""
    _check_z(z)
    theta = ExtForm.gen(DW) + ExtForm.gen(DZB, 1j * c * w / np.conj(z))
    return ExtForm.gen(DZ, 1 / z).wedge(theta)


def sigma_c(c, z, w) -> ExtBivector:
    """(z d_z + i c wb d_wb) ^ w d_w."""
    u = np.array([z, 0, 0, 1j * c * np.conj(w)])
    v = np.array([0, 0, w, 0])
    return ExtBivector.wedge_of(u, v)


def f_c(c, z) -> ExtForm:
    """i c dz ^ dzb / (z zb)."""
    _check_z(z)
    return ExtForm.monomial(DZ, DZB, coeff=1j * c / (z * np.conj(z)))


def verify_elliptic(c, z, w) -> float:
    """max |exp(F_c) exp(sigma_0) Omega_0 - exp(sigma_c) Omega_c| coefficientwise."""
    _check_z(z)
    lhs = exp_act(f_c(c, z), exp_act(sigma_c(0, z, w), omega_c(0, z, w)))
    rhs = exp_act(sigma_c(c, z, w), omega_c(c, z, w))
    return float(np.max(np.abs(lhs.c - rhs.c)))


def pure_spinor(c, z, w) -> ExtForm:
    return exp_act(sigma_c(c, z, w), omega_c(c, z, w))


def annihilation_residual(Jmat, rho: ExtForm, sign: int = -1) -> float:
    """max |(v + xi) . rho| over an orthonormal basis of ker(J - sign*i)."""
    from .gcs import eigenframe
    K = eigenframe(Jmat, sign)
    worst = 0.0
    for col in K.T:
        v, xi = vector_to_complex(col[:4]), form_to_complex(col[4:])
        worst = max(worst, float(np.max(np.abs(clifford(v, xi, rho).c))))
    return worst


def elliptic_chart(h: float = 1e-3) -> Chart:
    """Annulus-type box away from z = 0: Re z in [0.5, 2], other axes in [-1, 1]."""
    return Chart.box([0.5, -1.0, -1.0, -1.0], [2.0, 1.0, 1.0, 1.0], h=h)


def _zw(x):
    return x[..., 0] + 1j * x[..., 1], x[..., 2] + 1j * x[..., 3]


def complex_structure_c(c: float, x):
    """I_c at points x from the holomorphic coframe {dz, dw + i c w dzb / zb}."""
    z, w = _zw(x)
    if np.any(np.abs(z) < 1e-12):
        raise ValueError("z = 0 is excluded")
    a = 1j * c * w / np.conj(z)
    shp = x.shape[:-1]
    Th = np.zeros(shp + (4, 4), complex)
    Th[..., 0, :] = [1, 1j, 0, 0]
    Th[..., 1, 0] = a
    Th[..., 1, 1] = -1j * a
    Th[..., 1, 2] = 1
    Th[..., 1, 3] = 1j
    Th[..., 2, :] = np.conj(Th[..., 0, :])
    Th[..., 3, :] = np.conj(Th[..., 1, :])
    D = np.diag([1j, 1j, -1j, -1j])
    I = np.linalg.solve(Th, D @ Th)
    return np.real(I)


def sigma_tensor_c(c: float, x):
    """P + iQ = 4 sigma_c as a complex contraction map at points x."""
    z, w = _zw(x)
    B = np.zeros(x.shape[:-1] + (4, 4), complex)
    B[..., 0, 2] = z * w
    B[..., 3, 2] = 1j * c * np.conj(w) * w
    B = B - np.swapaxes(B, -1, -2)
    comps = VEC_C2R @ B @ VEC_C2R.T
    return TENSOR_FACTOR * np.swapaxes(comps, -1, -2)


def f_c_real(c: float, x):
    """F_c = 2c dx1 ^ dx2 / |z|^2 as a contraction map."""
    r2 = x[..., 0] ** 2 + x[..., 1] ** 2
    M = np.zeros(x.shape[:-1] + (4, 4))
    M[..., 1, 0] = 2 * c / r2
    M[..., 0, 1] = -2 * c / r2
    return M


@dataclass(frozen=True)
class EllipticTensors:
    c: float
    I: Field
    P: Field
    Q: Field
    F: Field

    @property
    def holo_poisson(self) -> HoloPoisson:
        return HoloPoisson(self.I, self.P, self.Q)


def elliptic_tensors(c: float, chart: Chart | None = None) -> EllipticTensors:
    chart = chart or elliptic_chart()
    lo, hi = np.array(chart.lo), np.array(chart.hi)
    if lo[0] <= 0 < hi[0] and lo[1] <= 0 < hi[1]:
        raise ValueError("chart touches z = 0")
    I = Field("endo", lambda x: complex_structure_c(c, x), chart)
    P = Field("bivector", lambda x: np.real(sigma_tensor_c(c, x)), chart)
    Q = Field("bivector", lambda x: np.imag(sigma_tensor_c(c, x)), chart)
    F = Field("form2", lambda x: f_c_real(c, x), chart)
    return EllipticTensors(c, I, P, Q, F)
