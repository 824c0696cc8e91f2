import pytest
from hypothesis import given, strategies as st

from gkflow import zalg


def test_h0_genus1():
    assert zalg.h0_genus1(3) == 3
    assert zalg.h0_genus1(-1) == 0
    assert zalg.h0_genus1(0, True) == 1
    assert zalg.h0_genus1(0) == 0


def test_hom_dim():
    assert zalg.hom_dim(0, 0, 3) == 1
    assert zalg.hom_dim(0, 1, 3) == 3
    assert [zalg.hom_dim(0, k, 3) for k in range(1, 6)] == [3, 6, 9, 12, 15]
    with pytest.raises(ValueError):
        zalg.hom_dim(2, 1, 3)


@given(st.integers(0, 20), st.integers(0, 20), st.integers(0, 20), st.integers(-5, 5))
def test_degree_cocycle(a, b, c, d):
    i, p, j = sorted((a, b, c))
    assert zalg.cocycle_defect(i, p, j, d) == 0
    assert zalg.hom_dim(i, j, d) == zalg.h0_genus1(d * (p - i) + d * (j - p), i == j)


def test_ring_dims():
    assert list(zalg.ring_dims(4, 3).dims) == [1, 3, 6, 9, 12]
    assert list(zalg.ring_dims(6, 3).dims) == [1, 3, 6, 9, 12, 15, 18]
    deg = zalg.ring_dims(3, 0)
    assert list(deg.dims) == [1, 0, 0, 0] and deg.degree_zero_flags == (1, 2, 3)
    with pytest.raises(ValueError):
        zalg.ring_dims(-1)


@given(st.integers(1, 30), st.integers(1, 6))
def test_linear_growth(k_max, d):
    dims = zalg.ring_dims(k_max, d).dims
    assert all(dims[k + 1] - dims[k] == d for k in range(1, k_max))


def test_growth_compare():
    rows = zalg.growth_compare(6)
    assert rows[1] == (1, 3, 3, 0) and rows[2] == (2, 6, 6, 0) and rows[3] == (3, 9, 10, 1)
    assert zalg.first_deficit(rows) == (3, 1)
    assert all(r[3] > 0 for r in rows[3:])
    assert all(r[3] == (r[0] + 1) * (r[0] + 2) // 2 - 3 * r[0] for r in rows[1:])
    with pytest.raises(ValueError):
        zalg.growth_compare(2)


def test_graded_dims_validation():
    with pytest.raises(ValueError):
        zalg.GradedDims((2, 3), 3)
    with pytest.raises(ValueError):
        zalg.GradedDims((1, -3), 3)
