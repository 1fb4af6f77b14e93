"""Oriented-rectangle geometry: corners, separating-axis overlap, distance."""

from __future__ import annotations

import math
from typing import Sequence

Point = tuple[float, float]


def rect_corners(x: float, y: float, heading: float, length: float, width: float) -> list[Point]:
    """Corners of a footprint centred at (x, y), counter-clockwise from rear-right."""
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = length / 2.0, width / 2.0
    out = []
    for lx, ly in ((-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)):
        out.append((x + lx * c - ly * s, y + lx * s + ly * c))
    return out


def _axes(corners: Sequence[Point]) -> list[Point]:
    # rectangles only need two edge normals each
    axes = []
    for i in (0, 1):
        x0, y0 = corners[i]
        x1, y1 = corners[i + 1]
        ex, ey = x1 - x0, y1 - y0
        n = math.hypot(ex, ey)
        axes.append((-ey / n, ex / n))
    return axes


def sat_overlap(a: Sequence[Point], b: Sequence[Point]) -> bool:
    """True when two convex rectangles (corner lists) intersect, touching included."""
    for ax, ay in _axes(a) + _axes(b):
        pa = [px * ax + py * ay for px, py in a]
        pb = [px * ax + py * ay for px, py in b]
        if max(pa) < min(pb) or max(pb) < min(pa):
            return False
    return True


def _local_box_distance(px: float, py: float, hl: float, hw: float) -> float:
    dx = max(abs(px) - hl, 0.0)
    dy = max(abs(py) - hw, 0.0)
    return math.hypot(dx, dy)


def rect_distance(
    a: tuple[float, float, float, float, float],
    b: tuple[float, float, float, float, float],
) -> float:
    """Minimum Euclidean distance between two oriented rectangles.

    Each argument is ``(x, y, heading, length, width)``. Returns 0.0 when the
    rectangles overlap. For disjoint convex polygons the closest pair always
    involves a vertex of one of them, so each rectangle's corners are moved into
    the other's body frame and clamped against the axis-aligned box there.
    """
    ca = rect_corners(*a)
    cb = rect_corners(*b)
    if sat_overlap(ca, cb):
        return 0.0
    best = math.inf
    for (ox, oy, oh, ol, ow), corners in ((a, cb), (b, ca)):
        c, s = math.cos(oh), math.sin(oh)
        hl, hw = ol / 2.0, ow / 2.0
        for px, py in corners:
            rx, ry = px - ox, py - oy
            lx = rx * c + ry * s
            ly = -rx * s + ry * c
            d = _local_box_distance(lx, ly, hl, hw)
            if d < best:
                best = d
    return best


def bounding_radius(length: float, width: float) -> float:
    return 0.5 * math.hypot(length, width)
