"""Convex hull construction and point-in-polygon tests.

Coordinates are plain (x, y) pixel positions. Hull vertices are returned
in counter-clockwise order under the right-handed convention (positive
cross product between consecutive edges); on screen, where y grows
downward, that winding appears clockwise.
"""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateHull

_EPS = 1e-9


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Convex hull vertices in counter-clockwise order (monotone chain).

    Collinear input points are absorbed into edges, never emitted as
    vertices. Raises DegenerateHull when all points are collinear.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected (N, 2) points, got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    uniq = np.unique(pts, axis=0)
    if uniq.shape[0] < 3:
        raise DegenerateHull("need at least 3 distinct points")
    order = np.lexsort((uniq[:, 1], uniq[:, 0]))
    ordered = [tuple(p) for p in uniq[order]]

    def half(points_iter):
        chain = []
        for p in points_iter:
            while len(chain) >= 2 and _cross(chain[-2], chain[-1], p) <= _EPS:
                chain.pop()
            chain.append(p)
        return chain

    lower = half(ordered)
    upper = half(reversed(ordered))
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateHull("points are collinear")
    return np.asarray(hull, dtype=float)


def is_convex_ccw(vertices) -> bool:
    """True iff consecutive edge cross products are all positive."""
    verts = np.asarray(vertices, dtype=float)
    n = verts.shape[0]
    if n < 3:
        return False
    for i in range(n):
        if _cross(verts[i], verts[(i + 1) % n], verts[(i + 2) % n]) <= _EPS:
            return False
    return True


def point_location(point, vertices, eps: float = 1e-7) -> str:
    """'inside', 'boundary' or 'outside' relative to a CCW convex polygon."""
    x, y = float(point[0]), float(point[1])
    verts = np.asarray(vertices, dtype=float)
    n = verts.shape[0]
    on_edge = False
    for i in range(n):
        ax, ay = verts[i]
        bx, by = verts[(i + 1) % n]
        cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax)
        if cross < -eps:
            return "outside"
        if abs(cross) <= eps:
            on_edge = True
    return "boundary" if on_edge else "inside"


def contains_points(vertices, xs, ys, include_boundary: bool = True) -> np.ndarray:
    """Vectorized membership test for arrays of points against a CCW polygon."""
    verts = np.asarray(vertices, dtype=float)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    inside = np.ones(xs.shape, dtype=bool)
    n = verts.shape[0]
    for i in range(n):
        ax, ay = verts[i]
        bx, by = verts[(i + 1) % n]
        cross = (bx - ax) * (ys - ay) - (by - ay) * (xs - ax)
        inside &= (cross >= -_EPS) if include_boundary else (cross > _EPS)
    return inside
