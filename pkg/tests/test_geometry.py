import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microcarla import geometry as geo

SQUARE = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]


def test_shoelace_signs():
    assert geo.polygon_area(SQUARE) == pytest.approx(1.0)
    assert geo.polygon_area(SQUARE[::-1]) == pytest.approx(-1.0)


def test_point_in_convex_boundary_inclusive():
    assert geo.point_in_convex((0.0, 0.5), SQUARE)
    assert geo.point_in_convex((0.5, 0.5), SQUARE)
    assert not geo.point_in_convex((1.0001, 0.5), SQUARE)


def test_clip_bisected_rectangle():
    # a rectangle cut exactly in half by the clip edge
    rect = geo.oriented_rect((0.0, 0.0), 0.0, 4.0, 1.8)
    half_plane = [(0.0, -10.0), (10.0, -10.0), (10.0, 10.0), (0.0, 10.0)]
    frac = geo.clip_area(half_plane, rect) / (4.0 * 1.8)
    assert frac == pytest.approx(0.5, abs=1e-9)


def test_clip_disjoint_is_zero():
    far = [(10.0, 10.0), (11.0, 10.0), (11.0, 11.0), (10.0, 11.0)]
    assert geo.clip_area(far, SQUARE) == 0.0


def test_clip_nonconvex_subject():
    lshape = [(0, 0), (3, 0), (3, 1), (1, 1), (1, 3), (0, 3)]
    window = [(0.5, 0.5), (2.5, 0.5), (2.5, 2.5), (0.5, 2.5)]
    # exact: [0.5,2.5]x[0.5,1] plus [0.5,1]x[1,2.5]
    assert geo.clip_area(lshape, window) == pytest.approx(1.75, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0, math.tau),
       st.integers(0, 10 ** 6))
def test_clip_area_matches_point_sampling(cx, cy, heading, seed):
    """Clipping a random oriented rectangle against a random convex quad
    agrees with stratified point sampling."""
    rng = random.Random(seed)
    quad = geo.oriented_rect((rng.uniform(-4, 4), rng.uniform(-4, 4)),
                             rng.uniform(0, math.tau),
                             rng.uniform(1, 6), rng.uniform(1, 6))
    rect = geo.oriented_rect((cx, cy), heading, 4.0, 1.8)
    exact = geo.clip_area(quad, rect) / 7.2
    n = 60
    hits = 0
    ax, ay = rect[0]
    ux, uy = rect[1][0] - ax, rect[1][1] - ay
    vx, vy = rect[3][0] - ax, rect[3][1] - ay
    for i in range(n):
        for j in range(n):
            s = (i + rng.random()) / n
            t = (j + rng.random()) / n
            p = (ax + s * ux + t * vx, ay + s * uy + t * vy)
            if geo.point_in_convex(p, quad):
                hits += 1
    assert exact == pytest.approx(hits / (n * n), abs=0.02)


def test_oriented_rect_is_ccw_with_correct_extent():
    rect = geo.oriented_rect((2.0, 3.0), 0.3, 4.0, 1.8)
    assert geo.polygon_area(rect) == pytest.approx(7.2)
    cx = sum(p[0] for p in rect) / 4.0
    cy = sum(p[1] for p in rect) / 4.0
    assert (cx, cy) == pytest.approx((2.0, 3.0))


def test_ray_segment_hit():
    assert geo.ray_segment_hit((0, 0), (1, 0), (5, -1), (5, 1)) == pytest.approx(5.0)
    assert geo.ray_segment_hit((0, 0), (1, 0), (5, 1), (5, 3)) is None
    assert geo.ray_segment_hit((0, 0), (-1, 0), (5, -1), (5, 1)) is None


def test_ray_circle_hit():
    assert geo.ray_circle_hit((0, 0), (1, 0), (5, 0), 1.0) == pytest.approx(4.0)
    assert geo.ray_circle_hit((0, 0), (1, 0), (5, 2), 1.0) is None
    # origin inside the circle: the exit point is the hit
    assert geo.ray_circle_hit((5, 0), (1, 0), (5, 0), 1.0) == pytest.approx(1.0)


def test_convex_overlap_matches_clip():
    rng = random.Random(5)
    for _ in range(300):
        a = geo.oriented_rect((rng.uniform(-3, 3), rng.uniform(-3, 3)),
                              rng.uniform(0, math.tau), rng.uniform(0.5, 4),
                              rng.uniform(0.5, 4))
        b = geo.oriented_rect((rng.uniform(-3, 3), rng.uniform(-3, 3)),
                              rng.uniform(0, math.tau), rng.uniform(0.5, 4),
                              rng.uniform(0.5, 4))
        overlap = geo.convex_overlap(a, b)
        area = geo.clip_area(a, b)
        if area > 1e-9:
            assert overlap
        if not overlap:
            assert area < 1e-9


def test_polyline_helpers():
    pts = [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0)]
    cum = geo.polyline_lengths(pts)
    assert cum == [0.0, 10.0, 20.0]
    assert geo.point_along_polyline(pts, cum, 15.0) == pytest.approx((10.0, 5.0))
    assert geo.tangent_along_polyline(pts, cum, 5.0) == pytest.approx((1.0, 0.0))
    assert geo.tangent_along_polyline(pts, cum, 15.0) == pytest.approx((0.0, 1.0))
    s, d = geo.project_to_polyline((5.0, 2.0), pts, cum)
    assert (s, d) == pytest.approx((5.0, 2.0))
    part = geo.polyline_slice(pts, cum, 5.0, 15.0)
    assert part[0] == pytest.approx((5.0, 0.0))
    assert part[-1] == pytest.approx((10.0, 5.0))
    assert geo.polyline_length(part) == pytest.approx(10.0)


def test_offset_band_tiles_without_overlap():
    pts = [(0.0, 0.0), (10.0, 0.0), (20.0, 5.0), (30.0, 5.0)]
    quads = geo.offset_band(pts, 0.0, 3.5)
    assert len(quads) == 3
    for q in quads:
        assert geo.polygon_area(q) > 0.0
        assert geo.is_convex(q)
    for i in range(len(quads)):
        for j in range(i + 1, len(quads)):
            assert geo.clip_area(quads[i], quads[j]) < 1e-9


@given(st.floats(-math.pi, math.pi), st.floats(-50, 50))
def test_wrap_angle_range_and_identity(a, k):
    wrapped = geo.wrap_angle(a + round(k) * geo.TWO_PI)
    assert -math.pi < wrapped <= math.pi + 1e-12
    assert math.isclose(math.sin(wrapped), math.sin(a), abs_tol=1e-6)
    assert math.isclose(math.cos(wrapped), math.cos(a), abs_tol=1e-6)


def test_signed_angle_orientation():
    assert geo.signed_angle((1, 0), (0, 1)) == pytest.approx(math.pi / 2)
    assert geo.signed_angle((1, 0), (0, -1)) == pytest.approx(-math.pi / 2)
    assert geo.signed_angle((1, 0), (1, 0)) == 0.0
