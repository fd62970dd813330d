import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphop_mf.torus import (PHASE_PERIOD, TorusGrid, TorusPoint, arc_overlap, circle_dist, nested_partition,
                              overlap_matrix, wrap)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def test_wrap_examples():
    assert wrap(1.25, 1.0) == 0.25
    assert wrap(-0.25, 1.0) == 0.75
    # oracle: 7 - 2π in 40-digit arithmetic
    assert wrap(7.0, PHASE_PERIOD) == pytest.approx(0.7168146928204135, abs=1e-15)


def test_wrap_rejects_bad_input():
    with pytest.raises(ValueError):
        wrap(float("nan"))
    with pytest.raises(ValueError):
        wrap(0.3, 0.0)


def test_wrap_tiny_negative_stays_in_range():
    assert 0.0 <= wrap(-1e-18, 1.0) < 1.0


@given(finite, st.sampled_from([1.0, PHASE_PERIOD]))
def test_wrap_range_and_congruence(x, period):
    w = wrap(x, period)
    assert 0.0 <= w < period
    k = (x - w) / period
    assert abs(k - round(k)) < 1e-6


def test_circle_dist_examples():
    assert circle_dist(0.1, 0.9) == pytest.approx(0.2)
    assert circle_dist(0.37, 0.37) == 0.0
    assert circle_dist(0.0, math.pi, PHASE_PERIOD) == pytest.approx(math.pi)


def test_torus_point():
    p = TorusPoint(1.25)
    assert p.value == 0.25 and not p.is_phase
    q = TorusPoint(-1.0, PHASE_PERIOD)
    assert q.is_phase and q.value == pytest.approx(PHASE_PERIOD - 1.0)
    assert circle_dist(TorusPoint(0.1), TorusPoint(0.9)) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        circle_dist(TorusPoint(0.1), TorusPoint(0.1, PHASE_PERIOD))


@given(st.floats(0, 1), st.floats(0, 1), st.floats(-5, 5))
def test_circle_dist_translation_invariant(x, y, t):
    assert abs(circle_dist(x + t, y + t) - circle_dist(x, y)) <= 1e-12
    assert 0.0 <= circle_dist(x, y) <= 0.5


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_circle_dist_triangle(x, y, z):
    assert circle_dist(x, z) <= circle_dist(x, y) + circle_dist(y, z) + 1e-12


def test_nested_partition_examples():
    _, _, parent = nested_partition(2, 3)
    assert parent.tolist() == [0, 0, 0, 1, 1, 1]
    coarse, fine, parent = nested_partition(1, 1)
    assert parent.tolist() == [0] and coarse.resolution == fine.resolution == 1
    # 1-indexed fine cell 5 = [0.5, 0.625) lies in 1-indexed coarse cell 3 = [0.5, 0.75)
    coarse, fine, parent = nested_partition(4, 2)
    assert fine.edges[4] == 0.5 and fine.edges[5] == 0.625
    assert parent[4] + 1 == 3
    with pytest.raises(ValueError):
        nested_partition(0, 3)


def test_nested_partition_exhaustive_small():
    for n in range(1, 13):
        for M in range(1, 13):
            coarse, fine, parent = nested_partition(n, M)
            lo, hi = fine.edges[:-1], fine.edges[1:]
            assert np.all(coarse.edges[parent] <= lo + 1e-15)
            assert np.all(hi <= coarse.edges[parent + 1] + 1e-15)


@given(st.integers(1, 100), st.integers(1, 100))
def test_nested_partition_up_to_1e4_cells(n, M):
    coarse, fine, parent = nested_partition(n, M)
    assert np.array_equal(parent, coarse.cell_of(fine.midpoints))


def test_grid_basics():
    g = TorusGrid(8)
    assert g.cell_measure * g.resolution == 1.0
    assert g.edges[0] == 0.0 and g.edges[-1] == 1.0
    assert g.cell_of(0.999999).item() == 7 and g.cell_of(1.0).item() == 0
    assert g.integrate(g.sample(lambda x: np.cos(2 * np.pi * x))) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        TorusGrid(0)
    with pytest.raises(ValueError):
        g.sample(np.zeros(3))


def test_overlap_matrix_rows_and_columns():
    O = overlap_matrix(7, 3)
    assert np.allclose(O.sum(axis=1), 1 / 7)
    assert np.allclose(O.sum(axis=0), 1 / 3)
    assert arc_overlap(0.9, 1.1, 0.0, 0.05) == pytest.approx(0.05)
