import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from udset.geometry import (BoxGrid, Wedge, box_dimension_estimate, hausdorff_distance, point_wedge_distance,
                            points_wedge_distance, sample_wedge, wedge_distance, wedge_in_ball)

coord = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
points = st.tuples(coord, coord)
wedges = st.builds(Wedge, points, points, points)


def test_wedge_distance_examples():
    a = Wedge((0, 0), (1, 0), (1, 1))
    b = Wedge((0, 0.3), (1, 0), (1.4, 1))
    assert wedge_distance(a, b) == pytest.approx(0.4, abs=1e-15)
    assert wedge_distance(a, a) == 0.0


@given(wedges, points)
def test_shift_moves_every_vertex_by_the_same_amount(w, v):
    assert wedge_distance(w, w.shifted(v)) == pytest.approx(math.hypot(*v), rel=1e-12, abs=1e-12)


@given(wedges, wedges, wedges)
def test_wedge_distance_is_a_metric(a, b, c):
    assert wedge_distance(a, b) == wedge_distance(b, a)
    assert wedge_distance(a, c) <= wedge_distance(a, b) + wedge_distance(b, c) + 1e-9


def test_point_distance_examples():
    w = Wedge((-1, 0), (0, 0), (1, 0))
    assert point_wedge_distance((0, 1), w) == 1.0
    assert point_wedge_distance((2, 1), w) == pytest.approx(math.sqrt(2))
    assert point_wedge_distance((-0.5, 0), w) == 0.0


@given(wedges, st.floats(0, 1))
def test_points_on_the_wedge_have_distance_zero(w, s):
    a = w.array
    p = a[0] + s * (a[1] - a[0])
    assert point_wedge_distance(p, w) <= 1e-9


def test_hausdorff_examples():
    w = Wedge((0, 0), (1, 0), (2, 0))
    assert hausdorff_distance(w, w, 1e-3) <= 1e-3
    seg_a = Wedge((0, 0), (1, 0), (0, 0))
    seg_b = Wedge((0, 0.25), (1, 0.25), (0, 0.25))
    assert hausdorff_distance(seg_a, seg_b, 1e-3) == pytest.approx(0.25, abs=1e-3)


def test_hausdorff_against_dense_brute_force():
    a = Wedge((0, 0), (1, 0), (2, 0))
    b = Wedge((0, 0), (1, 1), (2, 0))
    sa, sb = sample_wedge(a, 2 / 10_000), sample_wedge(b, 2.9 / 10_000)
    brute = max(points_wedge_distance(sa, b).max(), points_wedge_distance(sb, a).max())
    assert hausdorff_distance(a, b, 1e-3) == pytest.approx(brute, abs=1e-3)


def test_hausdorff_rejects_nonpositive_tol():
    w = Wedge((0, 0), (1, 0), (2, 0))
    with pytest.raises(ValueError):
        hausdorff_distance(w, w, 0.0)


def test_wedge_in_ball_examples():
    assert wedge_in_ball(Wedge((1, 1), (1, 1), (1, 1)), (1, 1), 0.0)
    w = Wedge((0, 0), (1, 0), (0, 1))
    assert wedge_in_ball(w, (0, 0), 1.0)
    assert not wedge_in_ball(w, (0, 0), 0.999)


@given(wedges, points, st.floats(0, 30))
def test_ball_containment_matches_sampled_distance(w, c, r):
    inside = wedge_in_ball(w, c, r)
    far = np.linalg.norm(sample_wedge(w, 0.05) - np.asarray(c), axis=1).max()
    assert inside == (far <= r + 1e-9) or abs(far - r) < 1e-6


def test_wedge_validation():
    with pytest.raises(ValueError):
        Wedge((0, 0), (1, 0, 0), (1, 1))
    with pytest.raises(ValueError):
        Wedge((0, float("nan")), (1, 0), (1, 1))
    assert Wedge((0, 0), (0, 0), (1, 1)).degenerate


def test_box_dimension_segment_point_square():
    hs = [2.0 ** -k for k in range(3, 10)]
    seg = np.stack([np.linspace(0, 1, 10_000), np.full(10_000, 0.3)], axis=1)
    assert 0.95 <= box_dimension_estimate(seg, hs).slope <= 1.05
    assert abs(box_dimension_estimate(np.array([[0.3, 0.3]]), hs).slope) <= 0.05
    g = (np.arange(1024) + 0.5) / 1024
    sq = np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
    assert 1.9 <= box_dimension_estimate(sq, hs).slope <= 2.1


def test_box_grid_counts_distinct_cells():
    cloud = np.array([[0.1, 0.1], [0.2, 0.2], [0.6, 0.1]])
    assert len(BoxGrid.from_points(cloud, 0.5)) == 2
    with pytest.raises(ValueError):
        BoxGrid.from_points(cloud, 0.0)
