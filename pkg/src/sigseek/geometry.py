"""Axis-aligned rectangle, segment and polyline primitives used across the simulator."""

from __future__ import annotations

import math

import numpy as np

Rect = tuple[float, float, float, float]  # (x0, y0, x1, y1) with x0 < x1, y0 < y1
Point = tuple[float, float]

EPS = 1e-9


def rect_width(r: Rect) -> float:
    return r[2] - r[0]


def rect_height(r: Rect) -> float:
    return r[3] - r[1]


def rect_area(r: Rect) -> float:
    return max(0.0, rect_width(r)) * max(0.0, rect_height(r))


def rect_center(r: Rect) -> Point:
    return (0.5 * (r[0] + r[2]), 0.5 * (r[1] + r[3]))


def rect_contains(r: Rect, x: float, y: float, tol: float = 0.0) -> bool:
    """Point-in-rectangle test. Positive tol grows the rectangle, negative shrinks it."""
    return (r[0] - tol <= x <= r[2] + tol) and (r[1] - tol <= y <= r[3] + tol)


def rect_inside(inner: Rect, outer: Rect, tol: float = EPS) -> bool:
    return (inner[0] >= outer[0] - tol and inner[1] >= outer[1] - tol
            and inner[2] <= outer[2] + tol and inner[3] <= outer[3] + tol)


def rect_overlap_area(a: Rect, b: Rect) -> float:
    w = min(a[2], b[2]) - max(a[0], b[0])
    h = min(a[3], b[3]) - max(a[1], b[1])
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def rect_edges(r: Rect) -> np.ndarray:
    """The four boundary segments as an array of rows (x1, y1, x2, y2)."""
    x0, y0, x1, y1 = r
    return np.array([
        (x0, y0, x1, y0),
        (x1, y0, x1, y1),
        (x1, y1, x0, y1),
        (x0, y1, x0, y0),
    ], dtype=float)


def clamp_to_rect(r: Rect, x: float, y: float) -> Point:
    return (min(max(x, r[0]), r[2]), min(max(y, r[1]), r[3]))


def clamp_rect(inner: Rect, outer: Rect) -> Rect:
    """Intersect two rectangles; degenerate results collapse onto the outer boundary."""
    x0 = min(max(inner[0], outer[0]), outer[2])
    y0 = min(max(inner[1], outer[1]), outer[3])
    x1 = min(max(inner[2], outer[0]), outer[2])
    y1 = min(max(inner[3], outer[1]), outer[3])
    return (x0, y0, max(x1, x0), max(y1, y0))


def dist(a: Point, b: Point) -> float:
    return math.hypot(b[0] - a[0], b[1] - a[1])


def angle_wrap(theta: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    out = math.fmod(theta + math.pi, 2.0 * math.pi)
    if out < 0.0:
        out += 2.0 * math.pi
    return out - math.pi


def bearing_to(src: Point, dst: Point) -> float:
    return math.atan2(dst[1] - src[1], dst[0] - src[0])


def polyline_length(pts: list[Point]) -> float:
    return sum(dist(pts[i], pts[i + 1]) for i in range(len(pts) - 1))


def polyline_point_at(pts: list[Point], s: float) -> tuple[float, float, float]:
    """Position and tangent heading at arc length s along the polyline.

    s must lie in [0, length] up to a small tolerance; raises ValueError outside.
    """
    if len(pts) < 2:
        raise ValueError("polyline needs at least 2 points")
    total = polyline_length(pts)
    if s < -EPS or s > total + EPS:
        raise ValueError(f"arc length {s} outside [0, {total}]")
    s = min(max(s, 0.0), total)
    acc = 0.0
    for i in range(len(pts) - 1):
        seg = dist(pts[i], pts[i + 1])
        if seg <= EPS:
            continue
        if s <= acc + seg or i == len(pts) - 2:
            t = (s - acc) / seg
            t = min(max(t, 0.0), 1.0)
            x = pts[i][0] + t * (pts[i + 1][0] - pts[i][0])
            y = pts[i][1] + t * (pts[i + 1][1] - pts[i][1])
            heading = math.atan2(pts[i + 1][1] - pts[i][1], pts[i + 1][0] - pts[i][0])
            return (x, y, heading)
        acc += seg
    # only reachable when every segment is degenerate
    return (pts[-1][0], pts[-1][1], 0.0)


def nearest_point_on_segment(p: Point, a: Point, b: Point) -> tuple[Point, float]:
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    den = dx * dx + dy * dy
    if den <= EPS:
        return (a, dist(p, a))
    t = ((p[0] - ax) * dx + (p[1] - ay) * dy) / den
    t = min(max(t, 0.0), 1.0)
    q = (ax + t * dx, ay + t * dy)
    return (q, dist(p, q))


def nearest_point_on_polyline(pts: list[Point], p: Point) -> tuple[Point, float]:
    best: tuple[Point, float] | None = None
    for i in range(len(pts) - 1):
        q, d = nearest_point_on_segment(p, pts[i], pts[i + 1])
        if best is None or d < best[1]:
            best = (q, d)
    if best is None:
        raise ValueError("polyline needs at least 2 points")
    return best


def segment_edge_crossings(p0: Point, p1: Point, edges: np.ndarray) -> np.ndarray:
    """Parameters t in (0, 1) where the open segment p0->p1 crosses any edge.

    edges is an (n, 4) array of segments (x1, y1, x2, y2). Endpoint grazes and
    parallel overlaps do not count as crossings.
    """
    if edges.size == 0:
        return np.empty(0)
    d1x = p1[0] - p0[0]
    d1y = p1[1] - p0[1]
    d2x = edges[:, 2] - edges[:, 0]
    d2y = edges[:, 3] - edges[:, 1]
    qpx = edges[:, 0] - p0[0]
    qpy = edges[:, 1] - p0[1]
    den = d1x * d2y - d1y * d2x
    ok = np.abs(den) > 1e-12
    safe = np.where(ok, den, 1.0)
    t = (qpx * d2y - qpy * d2x) / safe
    u = (qpx * d1y - qpy * d1x) / safe
    hit = ok & (t > EPS) & (t < 1.0 - EPS) & (u >= -EPS) & (u <= 1.0 + EPS)
    return t[hit]


def clip_segment_to_rect(a: Point, b: Point, r: Rect) -> tuple[Point, Point] | None:
    """Liang-Barsky clip of segment ab against a rectangle; None when fully outside."""
    dx, dy = b[0] - a[0], b[1] - a[1]
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, a[0] - r[0]), (dx, r[2] - a[0]),
                 (-dy, a[1] - r[1]), (dy, r[3] - a[1])):
        if abs(p) < EPS:
            if q < 0.0:
                return None
            continue
        t = q / p
        if p < 0.0:
            if t > t1:
                return None
            t0 = max(t0, t)
        else:
            if t < t0:
                return None
            t1 = min(t1, t)
    if t1 - t0 <= EPS:
        return None
    return ((a[0] + t0 * dx, a[1] + t0 * dy), (a[0] + t1 * dx, a[1] + t1 * dy))


def segment_rect_interval(p0: Point, p1: Point, r: Rect) -> tuple[float, float] | None:
    """Parameter interval [t0, t1] of the segment p0->p1 inside the rectangle,
    clipped to [0, 1]. None when the segment stays outside."""
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    tmin, tmax = 0.0, 1.0
    for o, d, lo, hi in ((p0[0], dx, r[0], r[2]), (p0[1], dy, r[1], r[3])):
        if abs(d) < EPS:
            if o < lo or o > hi:
                return None
            continue
        ta = (lo - o) / d
        tb = (hi - o) / d
        if ta > tb:
            ta, tb = tb, ta
        tmin = max(tmin, ta)
        tmax = min(tmax, tb)
    if tmax < tmin:
        return None
    return (tmin, tmax)


def ray_rect_span(origin: Point, theta: float, r: Rect) -> tuple[float, float] | None:
    """Parameter interval [t0, t1] over which the ray from origin at angle theta
    lies inside the rectangle, clipped to t >= 0. None when the ray misses."""
    dx, dy = math.cos(theta), math.sin(theta)
    tmin, tmax = -math.inf, math.inf
    for o, d, lo, hi in ((origin[0], dx, r[0], r[2]), (origin[1], dy, r[1], r[3])):
        if abs(d) < EPS:
            if o < lo or o > hi:
                return None
            continue
        ta = (lo - o) / d
        tb = (hi - o) / d
        if ta > tb:
            ta, tb = tb, ta
        tmin = max(tmin, ta)
        tmax = min(tmax, tb)
    if tmax < max(tmin, 0.0):
        return None
    return (max(tmin, 0.0), tmax)


def ray_rect_entry(origin: Point, theta: float, r: Rect) -> float | None:
    """Distance along the ray from origin at angle theta to the first rectangle hit.

    Returns 0.0 when the origin is already inside, None when the ray misses.
    """
    span = ray_rect_span(origin, theta, r)
    return None if span is None else span[0]
