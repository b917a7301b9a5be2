import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qsphere import lattice
from qsphere.lattice import LatticePoint, Truncation, add_epsilon, count_ball, weighted_degree

import oracles


def test_point_validation():
    assert LatticePoint((0, 0, -3)).ell == 2
    with pytest.raises(ValueError):
        LatticePoint((-1, 2))
    with pytest.raises(ValueError):
        LatticePoint((3,))


def test_add_epsilon_and_degree():
    g = LatticePoint((1, 0, -2))
    assert add_epsilon(g, 3) == (1, 0, -1)
    assert add_epsilon(g, 1, times=2) == (3, 0, -2)
    assert weighted_degree(g) == 3
    assert weighted_degree(lattice.origin(4)) == 0
    with pytest.raises(ValueError):
        add_epsilon(g, 4)
    with pytest.raises(ValueError):
        add_epsilon(g, 2, times=-1)


@pytest.mark.parametrize(
    "ell,n,expected",
    [(1, 0, 1), (1, 1, 4), (1, 2, 9), (1, 5, 36), (2, 1, 5), (2, 2, 14), (3, 2, 20)],
)
def test_count_ball_frozen(ell, n, expected):
    assert count_ball(ell, n) == expected
    assert count_ball(ell, n, method="enumerate") == expected


@given(st.integers(1, 3), st.integers(0, 8))
def test_count_ball_matches_enumeration(ell, n):
    assert count_ball(ell, n) == oracles.ball_count(ell, n)
    assert count_ball(ell, n, method="enumerate") == count_ball(ell, n)


def test_count_ball_errors():
    assert count_ball(2, -1) == 0
    with pytest.raises(ValueError):
        count_ball(0, 3)
    with pytest.raises(ValueError):
        count_ball(1, 3, method="guess")


def test_window_order_is_lexicographic():
    t = Truncation(1, 1, 1)
    assert [tuple(p) for p in lattice.enumerate(t)] == [
        (0, -1), (0, 0), (0, 1), (1, -1), (1, 0), (1, 1)
    ]
    assert t.size == len(t.coords) == 6


@given(st.integers(1, 3), st.integers(0, 3), st.integers(0, 3))
def test_index_roundtrip(ell, n, m):
    t = Truncation(ell, n, m, interior_margin=0)
    idx = t.indices(t.coords)
    assert np.array_equal(idx, np.arange(t.size))
    for i in (0, t.size - 1):
        assert t.index(t.point(i)) == i


def test_outside_points():
    t = Truncation(2, 2, 2)
    assert not t.contains((3, 0, 0))
    assert not t.contains((0, 0, -3))
    assert not t.contains((0, 0))
    with pytest.raises(KeyError):
        t.index((0, 0, 5))
    assert t.indices(np.array([[0, 0, 3], [0, 0, 2]])).tolist() == [-1, t.index((0, 0, 2))]


def test_masks_and_levels():
    t = Truncation(1, 3, 2)
    interior = t.interior_mask()
    assert interior.sum() == 3 * 3
    assert np.array_equal(t.boundary_mask(), ~t.interior_mask(1))
    assert t.levels()[t.index((2, -1))] == 2
    assert t.padded(2) == Truncation(1, 5, 4)
    assert t.to_dict() == {"ell": 1, "n_max": 3, "m_max": 2, "interior_margin": 1}


def test_truncation_validation():
    with pytest.raises(ValueError):
        Truncation(0, 2, 2)
    with pytest.raises(ValueError):
        Truncation(1, -1, 2)
    with pytest.raises(ValueError):
        Truncation(1, 1, 1, interior_margin=2)


def test_coords_read_only():
    t = Truncation(1, 2, 2)
    with pytest.raises(ValueError):
        t.coords[0, 0] = 5
