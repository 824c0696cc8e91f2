"""Dimension counts for the twisted homogeneous coordinate ring of a genus-1 curve.

Line bundles are tracked by degree only.  A translation of the curve
preserves degree, so Hom(i, j) is a bundle of degree d (j - i).
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb


def h0_genus1(degree: int, trivial_if_degree_zero: bool = False) -> int:
    """Riemann-Roch on an elliptic curve: h0 = deg for deg > 0."""
    if degree > 0:
        return int(degree)
    if degree < 0:
        return 0
    return 1 if trivial_if_degree_zero else 0


def hom_dim(i: int, j: int, d: int) -> int:
    if j < i:
        raise ValueError(f"Hom({i}, {j}) needs j >= i")
    # empty tensor product is the trivial bundle; otherwise degree 0 is taken generic
    return h0_genus1(d * (j - i), trivial_if_degree_zero=(i == j))


def cocycle_defect(i: int, p: int, j: int, d: int) -> int:
    """Degree additivity through an intermediate object; 0 when consistent."""
    if not i <= p <= j:
        raise ValueError("need i <= p <= j")
    return d * (j - i) - (d * (p - i) + d * (j - p))


@dataclass(frozen=True)
class GradedDims:
    dims: tuple
    degree: int
    degree_zero_flags: tuple = ()

    def __post_init__(self):
        if not self.dims or self.dims[0] != 1:
            raise ValueError("dim A^0 must be 1")
        if any(v < 0 for v in self.dims):
            raise ValueError("dimensions are nonnegative")

    def __getitem__(self, k):
        return self.dims[k]

    def __len__(self):
        return len(self.dims)


def ring_dims(k_max: int, d: int = 3) -> GradedDims:
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    dims = tuple(hom_dim(0, k, d) for k in range(k_max + 1))
    # the product Hom(0,p) x Hom(p,p+q) -> Hom(0,p+q) must land in the right degree
    for p in range(k_max + 1):
        for q in range(k_max + 1 - p):
            if cocycle_defect(0, p, p + q, d) != 0:
                raise AssertionError("degree bookkeeping broken")
    flags = tuple(k for k in range(1, k_max + 1) if d * k == 0)
    return GradedDims(dims, d, flags)


def plane_dim(k: int) -> int:
    """dim H0(CP^2, O(k)) = number of degree-k monomials in three variables."""
    return comb(k + 2, 2)


def growth_compare(k_max: int = 6, d: int = 3):
    """Rows (k, dim A^k, dim H0(CP^2, O(k)), deficit) for k = 0..k_max."""
    if k_max < 3:
        raise ValueError("k_max must be at least 3")
    A = ring_dims(k_max, d)
    rows = [(k, A[k], plane_dim(k), plane_dim(k) - A[k]) for k in range(k_max + 1)]
    first = next((r for r in rows if r[3] != 0), None)
    if d == 3 and (first is None or first[0] != 3 or first[3] != 1):
        raise AssertionError(f"unexpected deficit pattern: {rows}")
    return rows


def first_deficit(rows):
    for k, _, _, deficit in rows:
        if deficit != 0:
            return k, deficit
    return None
