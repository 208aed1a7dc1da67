"""Planar geometry primitives shared by the town model, kernel and sensors.

Everything works on plain ``(x, y)`` float tuples; polygons are lists of
vertices in counter-clockwise order. Areas use the shoelace formula, so a
negative signed area means clockwise winding.
"""

from __future__ import annotations

import math

Point = tuple[float, float]
Polygon = list[Point]

TWO_PI = 2.0 * math.pi


def add(a: Point, b: Point) -> Point:
    return (a[0] + b[0], a[1] + b[1])


def sub(a: Point, b: Point) -> Point:
    return (a[0] - b[0], a[1] - b[1])


def scale(a: Point, k: float) -> Point:
    return (a[0] * k, a[1] * k)


def dot(a: Point, b: Point) -> float:
    return a[0] * b[0] + a[1] * b[1]


def cross(a: Point, b: Point) -> float:
    return a[0] * b[1] - a[1] * b[0]


def norm(a: Point) -> float:
    return math.hypot(a[0], a[1])


def dist(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def unit(a: Point) -> Point:
    n = norm(a)
    if n == 0.0:
        return (0.0, 0.0)
    return (a[0] / n, a[1] / n)


def perp_right(a: Point) -> Point:
    """Rotate by -90 degrees: the right-hand normal of a travel direction."""
    return (a[1], -a[0])


def heading_vec(heading: float) -> Point:
    return (math.cos(heading), math.sin(heading))


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, TWO_PI)
    if a <= 0.0:
        a += TWO_PI
    return a - math.pi


def signed_angle(u: Point, v: Point) -> float:
    """Signed angle from u to v, positive counter-clockwise (a left turn)."""
    return math.atan2(cross(u, v), dot(u, v))


def polygon_area(poly: Polygon) -> float:
    """Signed shoelace area; positive for counter-clockwise winding."""
    total = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        total += x0 * y1 - x1 * y0
    return 0.5 * total


def polygon_bounds(poly: Polygon) -> tuple[float, float, float, float]:
    xs = [p[0] for p in poly]
    ys = [p[1] for p in poly]
    return (min(xs), min(ys), max(xs), max(ys))


def bounds_overlap(a: tuple[float, float, float, float],
                   b: tuple[float, float, float, float]) -> bool:
    return a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]


def point_in_polygon(p: Point, poly: Polygon) -> bool:
    """Even-odd rule for arbitrary simple polygons. Boundary points may land
    on either side; callers that care use region precedence, not this test."""
    x, y = p
    inside = False
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        if (y0 > y) != (y1 > y):
            t = (y - y0) / (y1 - y0)
            if x < x0 + t * (x1 - x0):
                inside = not inside
    return inside


def point_in_convex(p: Point, poly: Polygon) -> bool:
    """Membership in a convex CCW polygon, boundary inclusive."""
    x, y = p
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        if (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0) < 0.0:
            return False
    return True


def is_convex(poly: Polygon) -> bool:
    n = len(poly)
    for i in range(n):
        a, b, c = poly[i], poly[(i + 1) % n], poly[(i + 2) % n]
        if cross(sub(b, a), sub(c, b)) < -1e-9:
            return False
    return True


def clip_polygon(subject: Polygon, clip: Polygon) -> Polygon:
    """Sutherland-Hodgman clip of ``subject`` against a convex CCW ``clip``.

    The subject may be any simple polygon; for disconnected intersections the
    output contains degenerate bridging edges along the clip boundary, which
    contribute zero area, so ``polygon_area`` of the result is still exact.
    """
    output = subject
    n = len(clip)
    for i in range(n):
        if not output:
            return []
        cx0, cy0 = clip[i]
        cx1, cy1 = clip[(i + 1) % n]
        ex, ey = cx1 - cx0, cy1 - cy0
        inp = output
        output = []
        sx, sy = inp[-1]
        s_in = ex * (sy - cy0) - ey * (sx - cx0) >= 0.0
        for px, py in inp:
            p_in = ex * (py - cy0) - ey * (px - cx0) >= 0.0
            if p_in != s_in:
                # segment crosses the clip edge line
                dx, dy = px - sx, py - sy
                denom = ex * dy - ey * dx
                if denom != 0.0:
                    t = (ex * (cy0 - sy) - ey * (cx0 - sx)) / denom
                    output.append((sx + t * dx, sy + t * dy))
            if p_in:
                output.append((px, py))
            sx, sy, s_in = px, py, p_in
    return output


def clip_area(subject: Polygon, clip: Polygon) -> float:
    """Unsigned area of the intersection of a simple CCW subject polygon with
    a convex CCW clip polygon."""
    out = clip_polygon(subject, clip)
    if len(out) < 3:
        return 0.0
    return abs(polygon_area(out))


def oriented_rect(center: Point, heading: float, length: float, width: float) -> Polygon:
    """Corners of a rectangle centred at ``center``, long axis along
    ``heading``, in CCW order."""
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = 0.5 * length, 0.5 * width
    ax, ay = c * hl, s * hl
    bx, by = -s * hw, c * hw
    cx, cy = center
    return [
        (cx + ax + bx, cy + ay + by),
        (cx - ax + bx, cy - ay + by),
        (cx - ax - bx, cy - ay - by),
        (cx + ax - bx, cy + ay - by),
    ]


def convex_overlap(a: Polygon, b: Polygon) -> bool:
    """Separating-axis test for two convex CCW polygons (touching counts)."""
    for poly, other in ((a, b), (b, a)):
        n = len(poly)
        for i in range(n):
            x0, y0 = poly[i]
            x1, y1 = poly[(i + 1) % n]
            nx, ny = y1 - y0, x0 - x1  # outward normal for CCW winding
            if min(nx * (px - x0) + ny * (py - y0) for px, py in other) > 0.0:
                return False
    return True


def circle_convex_overlap(center: Point, radius: float, poly: Polygon) -> bool:
    if point_in_convex(center, poly):
        return True
    n = len(poly)
    r2 = radius * radius
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        if point_segment_dist2(center, a, b) <= r2:
            return True
    return False


def point_segment_dist2(p: Point, a: Point, b: Point) -> float:
    abx, aby = b[0] - a[0], b[1] - a[1]
    apx, apy = p[0] - a[0], p[1] - a[1]
    denom = abx * abx + aby * aby
    if denom == 0.0:
        return apx * apx + apy * apy
    t = (apx * abx + apy * aby) / denom
    t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
    dx, dy = apx - t * abx, apy - t * aby
    return dx * dx + dy * dy


def project_point_to_segment(p: Point, a: Point, b: Point) -> tuple[float, float]:
    """Return (t, squared distance) of the closest point a + t*(b-a), with t
    clamped to [0, 1]."""
    abx, aby = b[0] - a[0], b[1] - a[1]
    denom = abx * abx + aby * aby
    if denom == 0.0:
        return 0.0, point_segment_dist2(p, a, b)
    t = ((p[0] - a[0]) * abx + (p[1] - a[1]) * aby) / denom
    t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
    dx = p[0] - (a[0] + t * abx)
    dy = p[1] - (a[1] + t * aby)
    return t, dx * dx + dy * dy


def ray_segment_hit(origin: Point, direction: Point, a: Point, b: Point) -> float | None:
    """Distance along a unit-direction ray to segment ab, or None if missed."""
    vx, vy = b[0] - a[0], b[1] - a[1]
    denom = direction[0] * vy - direction[1] * vx
    if denom == 0.0:
        return None
    wx, wy = a[0] - origin[0], a[1] - origin[1]
    t = (wx * vy - wy * vx) / denom
    u = (wx * direction[1] - wy * direction[0]) / denom
    if t >= 0.0 and 0.0 <= u <= 1.0:
        return t
    return None


def ray_circle_hit(origin: Point, direction: Point, center: Point, radius: float) -> float | None:
    ox, oy = center[0] - origin[0], center[1] - origin[1]
    proj = ox * direction[0] + oy * direction[1]
    d2 = ox * ox + oy * oy - proj * proj
    r2 = radius * radius
    if d2 > r2:
        return None
    off = math.sqrt(r2 - d2)
    t = proj - off
    if t >= 0.0:
        return t
    t = proj + off
    return t if t >= 0.0 else None


def polyline_lengths(points: list[Point]) -> list[float]:
    """Cumulative arc length at each vertex, starting at 0."""
    acc = [0.0]
    for i in range(1, len(points)):
        acc.append(acc[-1] + dist(points[i - 1], points[i]))
    return acc


def polyline_length(points: list[Point]) -> float:
    return polyline_lengths(points)[-1]


def point_along_polyline(points: list[Point], cumlen: list[float], s: float) -> Point:
    """Point at arc length ``s`` (clamped to the polyline extent)."""
    if s <= 0.0:
        return points[0]
    if s >= cumlen[-1]:
        return points[-1]
    lo, hi = 0, len(cumlen) - 1
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if cumlen[mid] <= s:
            lo = mid
        else:
            hi = mid
    seg = cumlen[hi] - cumlen[lo]
    t = 0.0 if seg == 0.0 else (s - cumlen[lo]) / seg
    ax, ay = points[lo]
    bx, by = points[hi]
    return (ax + t * (bx - ax), ay + t * (by - ay))


def tangent_along_polyline(points: list[Point], cumlen: list[float], s: float) -> Point:
    """Unit tangent of the segment containing arc length ``s``."""
    if len(points) == 2:
        return unit(sub(points[1], points[0]))
    idx = 0
    for i in range(1, len(cumlen)):
        if cumlen[i] >= s or i == len(cumlen) - 1:
            idx = i - 1
            break
    return unit(sub(points[idx + 1], points[idx]))


def polyline_slice(points: list[Point], cumlen: list[float],
                   s0: float, s1: float) -> list[Point]:
    """Sub-polyline between two arc lengths (clamped; s1 <= s0 collapses to
    a single point)."""
    if s1 <= s0:
        return [point_along_polyline(points, cumlen, s0)]
    out = [point_along_polyline(points, cumlen, s0)]
    for i, s in enumerate(cumlen):
        if s0 < s < s1:
            out.append(points[i])
    out.append(point_along_polyline(points, cumlen, s1))
    return out


def project_to_polyline(p: Point, points: list[Point], cumlen: list[float]) -> tuple[float, float]:
    """Project onto a polyline; return (arc length of projection, distance)."""
    best_s = 0.0
    best_d2 = math.inf
    for i in range(len(points) - 1):
        t, d2 = project_point_to_segment(p, points[i], points[i + 1])
        if d2 < best_d2:
            best_d2 = d2
            best_s = cumlen[i] + t * (cumlen[i + 1] - cumlen[i])
    return best_s, math.sqrt(best_d2)


def offset_polyline(points: list[Point], offset: float) -> list[Point]:
    """Polyline shifted laterally by ``offset`` along the right-hand normal
    of the travel direction, with mitred joints."""
    n = len(points)
    tangents = [unit(sub(points[i + 1], points[i])) for i in range(n - 1)]
    normals = [perp_right(t) for t in tangents]
    out: list[Point] = []
    for i in range(n):
        if i == 0:
            m = normals[0]
        elif i == n - 1:
            m = normals[-1]
        else:
            m = unit(add(normals[i - 1], normals[i]))
            m = scale(m, 1.0 / dot(m, normals[i]))
        out.append(add(points[i], scale(m, offset)))
    return out


def offset_band(points: list[Point], off_near: float, off_far: float) -> list[Polygon]:
    """Quads tiling the band between two lateral offsets of a polyline.

    Offsets are signed along the right-hand normal of the travel direction
    (positive = right of travel). Joints are mitre-cut along the half-angle
    bisector so the quads tile the band without overlapping each other.
    """
    n = len(points)
    if n < 2:
        raise ValueError("polyline needs at least 2 points")
    tangents = [unit(sub(points[i + 1], points[i])) for i in range(n - 1)]
    normals = [perp_right(t) for t in tangents]
    # per-vertex cut direction with mitre scaling
    cuts: list[Point] = []
    for i in range(n):
        if i == 0:
            m = normals[0]
        elif i == n - 1:
            m = normals[-1]
        else:
            m = unit(add(normals[i - 1], normals[i]))
            d = dot(m, normals[i])
            if abs(d) < 0.1:
                raise ValueError("polyline bend too sharp for mitre offset")
            m = scale(m, 1.0 / d)
        cuts.append(m)
    quads: list[Polygon] = []
    for i in range(n - 1):
        a, b = points[i], points[i + 1]
        ca, cb = cuts[i], cuts[i + 1]
        quad = [
            add(a, scale(ca, off_near)),
            add(b, scale(cb, off_near)),
            add(b, scale(cb, off_far)),
            add(a, scale(ca, off_far)),
        ]
        if polygon_area(quad) < 0.0:
            quad.reverse()
        quads.append(quad)
    return quads
