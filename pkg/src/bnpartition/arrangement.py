"""Region-count formulas for simple and parallel-family arrangements, plus fixture generation.

Lines in 2D are ``(a, c)`` pairs meaning ``a . t = c``; a family is a list of
lines. Counts use Python integers throughout, so they never overflow.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .hyperplanes import Window

VALIDITY_TOL = 1e-9
MAX_ATTEMPTS = 1000


class GenerationFailed(RuntimeError):
    pass


def region_count_simple(m: int, d: int) -> int:
    """Regions of ``m`` hyperplanes in general position in a convex window of R^d."""
    if m < 0 or d < 0:
        raise ValueError("m and d must be nonnegative")
    return sum(comb(m, k) for k in range(min(m, d) + 1))


def region_count_parallel(m_vec, d: int) -> int:
    """Sum over family subsets of size <= d of the product of their sizes.

    Elementary symmetric polynomials ``e_0..e_d`` of ``m_vec`` via the usual
    one-pass recurrence, in exact integer arithmetic.
    """
    if d < 0:
        raise ValueError("d must be nonnegative")
    e = [1] + [0] * d
    for m in m_vec:
        m = int(m)
        if m < 0:
            raise ValueError("family sizes must be nonnegative")
        for k in range(d, 0, -1):
            e[k] += m * e[k - 1]
    return sum(e)


@dataclass(frozen=True)
class ArrangementValidityReport:
    family_parallel_ok: bool
    distinct_ok: bool
    transverse_ok: bool
    no_common_point: bool
    eta: float
    overall_valid: bool


def _unit(a):
    a = np.asarray(a, float)
    return a / np.hypot(a[0], a[1])


def _cross(u, v) -> float:
    return float(u[0] * v[1] - u[1] * v[0])


def _intersection(l1, l2):
    A = np.array([l1[0], l2[0]], float)
    return np.linalg.solve(A, np.array([l1[1], l2[1]], float))


def check_validity(families, window: Window, tol: float = VALIDITY_TOL) -> ArrangementValidityReport:
    """Window-stability clauses of a 2D multi-family arrangement.

    ``families`` is a list of lists of lines. Every clause is judged on unit
    normals, so the tolerances are scale free. ``eta`` is ``r`` minus the
    largest l-infinity distance from the window center to a cross-family
    intersection (``r`` when there is none).
    """
    if window.dim != 2:
        raise ValueError("validity checks are implemented for 2D windows")
    norm = [[(_unit(a), float(c) / np.hypot(*np.asarray(a, float))) for a, c in fam] for fam in families]
    parallel_ok = distinct_ok = True
    for fam in norm:
        for (u1, c1), (u2, c2) in combinations(fam, 2):
            if abs(_cross(u1, u2)) > tol:
                parallel_ok = False
                continue
            # same direction up to sign: compare offsets along a common normal
            s = 1.0 if u1 @ u2 > 0 else -1.0
            if abs(c1 - s * c2) <= tol:
                distinct_ok = False
    lines = [(fi, u, c) for fi, fam in enumerate(norm) for u, c in fam]
    for (_, u1, c1), (_, u2, c2) in combinations(lines, 2):
        if abs(_cross(u1, u2)) <= tol and abs(c1 - (1.0 if u1 @ u2 > 0 else -1.0) * c2) <= tol:
            distinct_ok = False
    transverse_ok = True
    points = []
    for (f1, u1, c1), (f2, u2, c2) in combinations(lines, 2):
        if f1 == f2:
            continue
        if abs(_cross(u1, u2)) <= tol:
            transverse_ok = False
            continue
        points.append(_intersection((u1, c1), (u2, c2)))
    no_common = True
    for p in points:
        on = sum(abs(u @ p - c) < tol * (1 + np.abs(p).max()) for _, u, c in lines)
        if on > 2:
            no_common = False
            break
    if points:
        far = max(float(np.abs(p - window.center).max()) for p in points)
        eta = window.r - far
    else:
        eta = window.r
    ok = parallel_ok and distinct_ok and transverse_ok and no_common and eta > 0
    return ArrangementValidityReport(parallel_ok, distinct_ok, transverse_ok, no_common, float(eta), ok)


def _family_line(theta, offset, center):
    a = np.array([np.cos(theta), np.sin(theta)])
    return a, float(a @ center + offset)


def generate_valid_arrangement(kind, window: Window, seed: int, min_eta_frac: float = 0.01,
                               max_attempts: int = MAX_ATTEMPTS):
    """Random valid arrangement in a 2D window: ``(families, report)``.

    ``kind`` is ``("simple", m)`` or ``("parallel", m_vec)``. Simple
    arrangements are parallel families of size one. Family directions are
    jittered around equally spaced angles; offsets are small enough that every
    cross-family intersection stays well inside the window, and the sample is
    rejected until the validity report passes with ``eta > min_eta_frac * r``.
    """
    name, size_arg = kind
    if name == "simple":
        sizes = [1] * int(size_arg)
    elif name == "parallel":
        sizes = [int(m) for m in size_arg]
    else:
        raise ValueError(f"unknown arrangement kind {name!r}")
    if any(m < 1 for m in sizes):
        raise ValueError("family sizes must be positive")
    rng = np.random.default_rng(seed)
    n = len(sizes)
    r = window.r
    for _ in range(max_attempts):
        thetas = (np.arange(n) + rng.uniform(0.2, 0.8, size=n)) * np.pi / max(n, 1)
        # intersections of lines at offsets |o| <= s with angle gap >= 0.4 pi / n lie within
        # about 2 s / sin(gap) of the center
        gap = np.sin(min(0.4 * np.pi / max(n, 1), np.pi / 2))
        spread = 0.4 * r * gap
        families = []
        for th, m in zip(thetas, sizes):
            offs = np.sort(rng.uniform(-spread, spread, size=m))
            families.append([_family_line(th, o, window.center) for o in offs])
        rep = check_validity(families, window)
        if rep.overall_valid and rep.eta > min_eta_frac * r:
            return families, rep
    raise GenerationFailed(f"no valid {name} arrangement after {max_attempts} attempts")


def formula_count(families, d: int = 2) -> int:
    return region_count_parallel([len(f) for f in families], d)
