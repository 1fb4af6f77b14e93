import math
import random

from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import clearance, polygon, sampled_overlap
from scenariogen.geometry import bounding_radius, rect_corners, rect_distance, sat_overlap


def random_pair(rng):
    a = (0.0, 0.0, rng.uniform(-math.pi, math.pi), rng.uniform(2, 9), rng.uniform(1, 3))
    b = (rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(-math.pi, math.pi), rng.uniform(2, 9), rng.uniform(1, 3))
    return a, b


def test_sat_matches_point_sampling_oracle():
    rng = random.Random(11)
    checked = 0
    for _ in range(300):
        a, b = random_pair(rng)
        if clearance(a, b) < 1e-3:
            continue
        checked += 1
        assert sat_overlap(rect_corners(*a), rect_corners(*b)) == sampled_overlap(a, b), (a, b)
    assert checked > 250


def test_touching_counts_as_overlap():
    a = (0.0, 0.0, 0.0, 4.0, 2.0)
    b = (4.0, 0.0, 0.0, 4.0, 2.0)
    assert sat_overlap(rect_corners(*a), rect_corners(*b))
    assert rect_distance(a, b) == 0.0


def test_axis_aligned_gap():
    assert rect_distance((0, 0, 0, 4, 2), (10, 0, 0, 4, 2)) == 6.0
    assert rect_distance((0, 0, 0, 4, 2), (5, 5, 0, 4, 2)) == math.hypot(1, 3)


box = st.tuples(st.floats(-10, 10), st.floats(-10, 10), st.floats(-math.pi, math.pi),
                st.floats(1, 9), st.floats(0.5, 3))


@given(box, box)
@settings(max_examples=400, deadline=None)
def test_rect_distance_matches_shapely(a, b):
    assert math.isclose(rect_distance(a, b), polygon(a).distance(polygon(b)), abs_tol=1e-9)
    assert rect_distance(a, b) == rect_distance(b, a) or math.isclose(rect_distance(a, b), rect_distance(b, a),
                                                                       abs_tol=1e-12)


@given(box)
def test_bounding_radius_covers_corners(a):
    r = bounding_radius(a[3], a[4])
    for x, y in rect_corners(*a):
        assert math.hypot(x - a[0], y - a[1]) <= r + 1e-9
