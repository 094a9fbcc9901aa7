"""Convex polygon primitives in the plane.

Polygons are ``(k, 2)`` float arrays with counterclockwise vertices and no
repeated vertex. Lines are given as ``a . t = c``.
"""
from __future__ import annotations

import numpy as np

SNAP_TOL = 1e-10
DEDUP_TOL = 1e-12


def box(center, r: float) -> np.ndarray:
    cx, cy = float(center[0]), float(center[1])
    return np.array([[cx - r, cy - r], [cx + r, cy - r], [cx + r, cy + r], [cx - r, cy + r]])


def area(poly) -> float:
    # shift to the first vertex: small cells far from the origin cancel badly otherwise
    x, y = poly[:, 0] - poly[0, 0], poly[:, 1] - poly[0, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def centroid(poly) -> np.ndarray:
    o = poly[0]
    x, y = poly[:, 0] - o[0], poly[:, 1] - o[1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = cross.sum() / 2
    if abs(a) < 1e-300:
        return poly.mean(axis=0)
    return o + np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6 * a)


def interior_points(poly, n: int, rng) -> np.ndarray:
    """``n`` random points strictly inside a convex polygon (Dirichlet weights on a fan)."""
    c = centroid(poly)
    k = poly.shape[0]
    tri = rng.integers(0, k, size=n)
    w = rng.dirichlet([1.0, 1.0, 1.0], size=n) * 0.98 + 0.02 / 3
    a, b = poly[tri], poly[(tri + 1) % k]
    return w[:, :1] * c + w[:, 1:2] * a + w[:, 2:3] * b


def _dedup(pts) -> np.ndarray:
    out = []
    for p in pts:
        if not out or abs(p[0] - out[-1][0]) > DEDUP_TOL or abs(p[1] - out[-1][1]) > DEDUP_TOL:
            out.append(p)
    while len(out) > 1 and abs(out[0][0] - out[-1][0]) <= DEDUP_TOL and abs(out[0][1] - out[-1][1]) <= DEDUP_TOL:
        out.pop()
    return np.array(out) if out else np.zeros((0, 2))


def _snapped_values(poly, a, c, snap):
    s = poly @ a - c
    norm = float(np.hypot(a[0], a[1]))
    if norm > 0:
        s[np.abs(s) <= snap * norm] = 0.0
    return s


def split(poly, a, c, snap: float = SNAP_TOL):
    """Split by the line ``a . t = c``; returns ``(below, above)`` or ``None`` if not cut.

    Vertices within ``snap`` (Euclidean) of the line are placed on it, so a
    line that only grazes the polygon does not split it.
    """
    s = _snapped_values(poly, a, c, snap)
    if s.max() <= 0 or s.min() >= 0:
        return None
    lo, hi = [], []
    k = poly.shape[0]
    for i in range(k):
        p, sp = poly[i], s[i]
        j = (i + 1) % k
        sq = s[j]
        if sp <= 0:
            lo.append(p)
        if sp >= 0:
            hi.append(p)
        if (sp < 0 < sq) or (sq < 0 < sp):
            t = sp / (sp - sq)
            x = p + t * (poly[j] - p)
            lo.append(x)
            hi.append(x)
    return _dedup(lo), _dedup(hi)


def clip(poly, a, c, snap: float = SNAP_TOL):
    """Part of the polygon with ``a . t <= c``; ``None`` when that part has no interior."""
    s = _snapped_values(poly, a, c, snap)
    if s.max() <= 0:
        return poly
    if s.min() >= 0:
        return None
    return split(poly, a, c, snap)[0]


def clip_halfplanes(poly, A, c, snap: float = SNAP_TOL):
    """Intersect with ``{t : A t <= c}`` one row at a time."""
    for a, ci in zip(np.atleast_2d(A), np.atleast_1d(c)):
        poly = clip(poly, a, ci, snap)
        if poly is None or poly.shape[0] < 3:
            return None
    return poly


def canonical(poly) -> np.ndarray:
    """Rotate so the lexicographically smallest vertex comes first."""
    i = min(range(poly.shape[0]), key=lambda k: (poly[k, 0], poly[k, 1]))
    return np.roll(poly, -i, axis=0)


def is_convex(poly, tol: float = 1e-9) -> bool:
    d = np.roll(poly, -1, axis=0) - poly
    cross = d[:, 0] * np.roll(d[:, 1], -1) - d[:, 1] * np.roll(d[:, 0], -1)
    return bool(np.all(cross >= -tol))


def contains(poly, pts, tol: float = 0.0) -> np.ndarray:
    """Boolean mask of points inside (or within ``tol`` of) a CCW convex polygon."""
    pts = np.atleast_2d(pts)
    d = np.roll(poly, -1, axis=0) - poly
    rel = pts[:, None, :] - poly[None, :, :]
    cross = d[None, :, 0] * rel[:, :, 1] - d[None, :, 1] * rel[:, :, 0]
    return np.all(cross >= -tol, axis=1)
