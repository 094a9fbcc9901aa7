"""Exact enumeration of affine regions on 2D windows and 2D affine slices.

Cells are refined breadth-first, one hidden layer at a time. Inside a cell every
pre-activation of the current layer is an affine function of the slice
coordinates, so the cell is cut by straight lines ``G_j t + g_j = tau_q``; the
resulting pieces carry the updated affine map of the layer output.
"""
from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import polygon as pg
from .cpa import BREAKPOINT_TOL, AffineMap, Network, activation_pattern, effective_layers, forward, \
    region_affine_map
from .hyperplanes import Window, layer_hyperplanes

log = logging.getLogger(__name__)

AREA_FLOOR_REL = 1e-14
CONST_TOL = 1e-12
RANK_TOL = 1e-8


class DegenerateCell(RuntimeError):
    pass


class RankDeficient(ValueError):
    pass


class WindowNotContained(ValueError):
    pass


@dataclass(frozen=True)
class SliceMap:
    """Affine embedding ``t -> P t + o`` of the plane into input space."""

    P: np.ndarray
    o: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        o = np.asarray(self.o, dtype=float).reshape(-1)
        if P.ndim != 2 or P.shape[1] != 2 or P.shape[0] != o.shape[0]:
            raise ValueError("slice needs P of shape (D, 2) and o of length D")
        if sigma_min(P) <= 0:
            raise ValueError("slice directions must be linearly independent")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "o", o)

    def __call__(self, t):
        return np.asarray(t, dtype=float) @ self.P.T + self.o


def identity_slice(dim: int = 2) -> SliceMap:
    if dim != 2:
        raise ValueError("identity slice only exists for 2D inputs")
    return SliceMap(np.eye(2), np.zeros(2))


def random_orthonormal_slice(dim: int, seed: int, origin=None) -> SliceMap:
    """Seeded random 2-plane through ``origin`` with orthonormal directions."""
    rng = np.random.default_rng(seed)
    Qm, _ = np.linalg.qr(rng.standard_normal((dim, 2)))
    return SliceMap(Qm, np.zeros(dim) if origin is None else origin)


def sigma_min(A) -> float:
    """Smallest singular value of a ``(d, 2)`` matrix from its 2x2 Gram matrix."""
    A = np.asarray(A, dtype=float)
    a = float(A[:, 0] @ A[:, 0])
    c = float(A[:, 1] @ A[:, 1])
    b = float(A[:, 0] @ A[:, 1])
    mean = (a + c) / 2
    rad = np.hypot((a - c) / 2, b)
    lam = mean - rad
    if lam < 1e-12 * max(mean, 1e-300):
        # cancellation; det / lam_max is accurate here
        lam = max(a * c - b * b, 0.0) / (mean + rad) if mean + rad > 0 else 0.0
    return float(np.sqrt(max(lam, 0.0)))


@dataclass(frozen=True)
class RegionCell:
    polygon: np.ndarray
    pattern: np.ndarray
    affine: AffineMap
    slice: SliceMap
    on_boundary: bool = False

    @property
    def area(self) -> float:
        return pg.area(self.polygon)

    @property
    def centroid(self) -> np.ndarray:
        return pg.centroid(self.polygon)

    @property
    def pattern_hash(self) -> str:
        return hashlib.sha1(np.asarray(self.pattern, dtype=np.int16).tobytes()).hexdigest()[:12]


class RegionList(list):
    """Cells of one enumeration plus bookkeeping about degenerate splits."""

    window: Window
    degenerate_splits: int = 0
    on_boundary: int = 0


def _lines_split(poly, a, c, floor, snap=pg.SNAP_TOL):
    """Split a convex polygon by every line ``a_i . t = c_i`` that crosses it.

    Returns ``(pieces, n_degenerate)``. Splits that would leave a piece below
    ``floor`` are skipped: the sliver stays merged with the piece across the
    line.
    """
    out = []
    degenerate = 0
    norms = np.hypot(a[:, 0], a[:, 1]) if len(a) else np.zeros(0)
    stack = [(poly, np.arange(len(c)))]
    while stack:
        p, idx = stack.pop()
        if idx.size:
            vals = p @ a[idx].T - c[idx]
            tol = snap * norms[idx]
            crossing = (vals.min(axis=0) < -tol) & (vals.max(axis=0) > tol)
            idx = idx[crossing]
        while idx.size:
            i = idx[0]
            idx = idx[1:]
            parts = pg.split(p, a[i], c[i], snap)
            if parts is None:
                continue
            lo, hi = parts
            if lo.shape[0] < 3 or hi.shape[0] < 3 or pg.area(lo) < floor or pg.area(hi) < floor:
                degenerate += 1
                continue
            # process hi later, keep splitting lo here
            stack.append((hi, idx))
            p = lo
            if idx.size:
                vals = p @ a[idx].T - c[idx]
                tol = snap * norms[idx]
                idx = idx[(vals.min(axis=0) < -tol) & (vals.max(axis=0) > tol)]
        out.append(p)
    return out, degenerate


def _layer_pieces(poly, G, g, taus):
    """1-based pieces of each neuron on a cell that no breakpoint line crosses.

    Also reports whether some neuron is constant and equal to a breakpoint on
    the cell (measure-zero switching set covering the whole cell).
    """
    V = poly @ G.T + g
    pieces = np.ones(G.shape[0], dtype=int)
    boundary = False
    for tau in taus:
        D = V - tau
        pick = np.abs(D).argmax(axis=0)
        extreme = D[pick, np.arange(D.shape[1])]
        pieces += extreme > 0
        if np.any(np.abs(extreme) <= CONST_TOL):
            boundary = True
    return pieces, boundary


def _refine(cells, W, b, act, floor, order):
    taus = np.asarray(act.breakpoints)
    slopes = np.asarray(act.slopes)
    icepts = np.asarray(act.intercepts)
    out = []
    degenerate = 0
    for poly, A, c, pats, flag in cells:
        G = W @ A
        g = W @ c + b
        Gs, gs = G[order], g[order]
        nz = np.hypot(Gs[:, 0], Gs[:, 1]) > 0
        a = np.repeat(Gs[nz], len(taus), axis=0)
        rhs = (taus[None, :] - gs[nz][:, None]).reshape(-1)
        pieces, deg = _lines_split(poly, a, rhs, floor)
        degenerate += deg
        for p in pieces:
            pat, on_b = _layer_pieces(p, G, g, taus)
            D = slopes[pat - 1]
            out.append((p, D[:, None] * G, D * g + icepts[pat - 1], pats + [pat], flag or on_b))
    return out, degenerate


def enumerate_on_slice(net: Network, mode, slice_map: SliceMap, window: Window, threads: int = 1,
                       neuron_order: Optional[Sequence] = None) -> RegionList:
    """All affine regions of ``t -> f(P t + o)`` meeting the open 2D window.

    ``neuron_order`` optionally gives a per-layer permutation in which the
    breakpoint lines are inserted; the partition does not depend on it.
    """
    if window.dim != 2:
        raise ValueError("enumeration windows live in 2D slice coordinates")
    if slice_map.P.shape[0] != net.input_dim:
        raise ValueError(f"slice maps into dimension {slice_map.P.shape[0]}, network expects {net.input_dim}")
    layers = effective_layers(net, mode)
    floor = AREA_FLOOR_REL * window.volume
    cells = [(pg.box(window.center, window.r), slice_map.P, slice_map.o, [], False)]
    degenerate = 0
    for l, (W, b) in enumerate(layers):
        order = np.arange(W.shape[0]) if neuron_order is None else np.asarray(neuron_order[l])
        if threads > 1 and len(cells) > 1:
            # map keeps input order, so the merged list equals the serial one
            with ThreadPoolExecutor(max_workers=threads) as ex:
                results = list(ex.map(lambda cell: _refine([cell], W, b, net.activation, floor, order), cells))
            cells = [child for res in results for child in res[0]]
            degenerate += sum(res[1] for res in results)
        else:
            cells, deg = _refine(cells, W, b, net.activation, floor, order)
            degenerate += deg
    Wo, bo = net.output.W, net.output.b
    result = RegionList()
    for poly, A, c, pats, flag in cells:
        poly = pg.canonical(poly)
        result.append(RegionCell(poly, np.concatenate(pats).astype(int), AffineMap(Wo @ A, Wo @ c + bo),
                                 slice_map, flag))
    result.sort(key=_cell_key)
    result.window = window
    result.degenerate_splits = degenerate
    result.on_boundary = sum(c.on_boundary for c in result)
    if degenerate:
        log.info("merged %d sliver splits below the area floor", degenerate)
    return result


def _cell_key(cell: RegionCell):
    v = cell.polygon[0]
    cx, cy = cell.centroid
    return (float(v[0]), float(v[1]), float(cx), float(cy), tuple(cell.pattern))


def enumerate_regions(net: Network, mode, window: Window, threads: int = 1,
                      neuron_order: Optional[Sequence] = None) -> RegionList:
    if net.input_dim != 2:
        raise ValueError("enumerate_regions needs 2D inputs; use enumerate_on_slice")
    return enumerate_on_slice(net, mode, identity_slice(2), window, threads, neuron_order)


def enumerate_arrangement(lines, window: Window):
    """Cells of the open 2D window cut by a list of ``(a, c)`` lines ``a . t = c``."""
    a = np.array([np.asarray(l[0], float) for l in lines]).reshape(-1, 2)
    c = np.array([float(l[1]) for l in lines])
    cells, _ = _lines_split(pg.box(window.center, window.r), a, c, AREA_FLOOR_REL * window.volume)
    return sorted((pg.canonical(p) for p in cells), key=lambda p: (p[0, 0], p[0, 1]))


def local_region_density(count: int, r: float, dim: int) -> float:
    if not r > 0:
        raise ValueError("radius must be positive")
    return count / (2 * r) ** dim


# --- self-consistency ----------------------------------------------------------

@dataclass(frozen=True)
class EnumerationCheck:
    count: int
    area_rel_error: float
    pattern_mismatches: int
    pattern_skipped: int
    affine_max_error: float

    def ok(self, area_tol: float = 1e-6, affine_tol: float = 1e-8) -> bool:
        return (self.area_rel_error <= area_tol and self.pattern_mismatches == 0
                and self.affine_max_error <= affine_tol)


def verify_enumeration(cells: RegionList, net: Network, mode, seed: int = 0, n_pattern: int = 5,
                       n_affine: int = 3) -> EnumerationCheck:
    """Area conservation, pattern purity and affine/forward agreement of every cell.

    Points whose pre-activation sits within the breakpoint tolerance are
    counted as skipped rather than mismatched.
    """
    rng = np.random.default_rng(seed)
    window = cells.window
    total = sum(c.area for c in cells)
    area_err = abs(total - window.volume) / window.volume
    if not len(cells):
        return EnumerationCheck(0, area_err, 0, 0, 0.0)
    k = max(n_pattern, n_affine)
    ts = np.stack([pg.interior_points(c.polygon, k, rng) for c in cells])          # (cells, k, 2)
    xs = np.stack([c.slice(t) for c, t in zip(cells, ts)]).reshape(-1, net.input_dim)
    out, trace = forward(net, xs, mode)
    # patterns of all sample points at once, with the breakpoint check of activation_pattern
    zh = np.concatenate([z for _, z, _ in trace], axis=1)
    taus = np.asarray(net.activation.breakpoints)
    on_bp = np.any(np.abs(zh[:, :, None] - taus) <= BREAKPOINT_TOL, axis=(1, 2)).reshape(len(cells), k)
    pats = net.activation.pieces(zh).reshape(len(cells), k, -1)
    want = np.stack([c.pattern for c in cells])[:, None, :]
    bad = np.any(pats != want, axis=2)
    sel = np.zeros(k, dtype=bool)
    sel[:n_pattern] = True
    skipped = int(np.sum(on_bp[:, sel]))
    mismatches = int(np.sum(bad[:, sel] & ~on_bp[:, sel]))
    out = out.reshape(len(cells), k, -1)[:, :n_affine]
    ref = np.stack([c.affine(t[:n_affine]) for c, t in zip(cells, ts)])
    scale = 1.0 + np.abs(out).max(axis=(1, 2))
    worst = float(np.max(np.abs(out - ref).max(axis=(1, 2)) / scale))
    return EnumerationCheck(len(cells), area_err, mismatches, skipped, worst)


# --- density profiles ----------------------------------------------------------

def density_profile(net: Network, mode, center, radii, class_centers=None, weights=None, threads: int = 1):
    """Counts and densities over a radius grid, for one center or a weighted set of centers.

    Returns a dict with ``radii``, ``centers``, ``counts`` and ``density``
    (``len(centers) x len(radii)``) and ``aggregate`` (weighted over centers).
    """
    radii = np.asarray(radii, dtype=float)
    if np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be positive and strictly increasing")
    centers = [np.asarray(center, float)] if class_centers is None else [np.asarray(c, float) for c in class_centers]
    if weights is None:
        weights = np.full(len(centers), 1.0 / len(centers))
    weights = np.asarray(weights, float)
    if np.any(weights < 0) or abs(weights.sum() - 1) > 1e-12 or len(weights) != len(centers):
        raise ValueError("weights must be nonnegative, sum to one and match the centers")
    counts = np.array([[len(enumerate_regions(net, mode, Window(c, r), threads)) for r in radii]
                       for c in centers])
    dens = counts / (2 * radii[None, :]) ** 2
    return {"radii": radii, "centers": np.array(centers), "counts": counts, "density": dens,
            "aggregate": weights @ dens}


# --- pullback through a parent region -----------------------------------------

@dataclass(frozen=True)
class PullbackReport:
    layer: int
    parent_pattern: str
    rank: int
    sigma_min: float
    input_count: int
    intrinsic_count: int
    counts_equal: bool
    jacobian: float
    support: float
    support_threshold: float
    jaccard_min: float
    area_input: float
    area_intrinsic: float
    radius: float


def parent_region(net: Network, mode, x, depth: int, bound: float):
    """Prefix pattern, prefix affine map and the polygon of the parent region of ``x``.

    The polygon is the set of inputs sharing ``x``'s activation pattern on the
    first ``depth`` hidden layers, clipped to ``B_inf(x, bound)``.
    """
    x = np.asarray(x, dtype=float)
    full = activation_pattern(net, x, mode)
    n_prefix = sum(net.widths[:depth])
    taus = np.concatenate([[-np.inf], net.activation.breakpoints, [np.inf]])
    rows, rhs = [], []
    layers = effective_layers(net, mode)
    offset = 0
    for l in range(depth):
        pref = region_affine_map(net, full, mode, depth=l)
        W, b = layers[l]
        Z_A, Z_c = W @ pref.A, W @ pref.b + b
        p = full[offset:offset + W.shape[0]]
        offset += W.shape[0]
        lo, hi = taus[p - 1], taus[p]
        for j in range(W.shape[0]):
            if np.isfinite(hi[j]):
                rows.append(Z_A[j])
                rhs.append(hi[j] - Z_c[j])
            if np.isfinite(lo[j]):
                rows.append(-Z_A[j])
                rhs.append(Z_c[j] - lo[j])
    poly = pg.box(x, bound)
    if rows:
        poly = pg.clip_halfplanes(poly, np.array(rows), np.array(rhs))
    prefix = region_affine_map(net, full, mode, depth=depth)
    return full[:n_prefix], prefix, poly, (np.array(rows).reshape(-1, 2), np.array(rhs))


def _halfplanes_of(poly):
    d = np.roll(poly, -1, axis=0) - poly
    a = np.stack([d[:, 1], -d[:, 0]], axis=1)
    return a, np.einsum("ij,ij->i", a, poly)


def _intersect(p1, p2):
    a, c = _halfplanes_of(p2)
    return pg.clip_halfplanes(p1, a, c, snap=0.0)


def pullback_check(net: Network, mode, layer: int, anchor, r: float, support_threshold: float = 0.95,
                   grid: int = 64) -> PullbackReport:
    """Compare component counts of layer ``layer``'s arrangement in input space and on ``S_R``.

    The parent region R is the cell of the prefix map ``h^(layer-1)`` containing
    ``anchor``. The input-space side pulls the layer's switching lines back
    through the prefix affine map; the intrinsic side restricts the layer's
    representation-space hyperplanes to ``S_R`` in orthonormal coordinates.
    """
    if net.input_dim != 2:
        raise ValueError("pullback_check needs 2D inputs")
    if not 1 <= layer <= len(net.blocks):
        raise ValueError(f"layer must be in 1..{len(net.blocks)}, got {layer}")
    anchor = np.asarray(anchor, dtype=float)
    depth = layer - 1
    # generous bound: Omega_R lies within r sqrt(d) / sigma_min of the anchor
    probe = region_affine_map(net, activation_pattern(net, anchor, mode), mode, depth=depth)
    smin = sigma_min(probe.A)
    rank = int(np.sum(np.linalg.svd(probe.A, compute_uv=False) > RANK_TOL))
    if smin <= RANK_TOL:
        raise RankDeficient(f"prefix map has sigma_min {smin:.3g}; rank {rank} < 2")
    d = probe.A.shape[0]
    reach = 1.01 * r * np.sqrt(d) / smin
    prefix_pattern, prefix, R_poly, (R_a, R_c) = parent_region(net, mode, anchor, depth, 2 * reach)
    A_t, d_t = prefix.A, prefix.b
    ubar = A_t @ anchor + d_t

    # input-space preimage of the window: |A_i (x - anchor)| <= r
    rows = A_t[np.hypot(A_t[:, 0], A_t[:, 1]) > 0]
    omega = pg.clip_halfplanes(pg.box(anchor, reach), np.vstack([rows, -rows]),
                               np.concatenate([r + rows @ anchor, r - rows @ anchor]))
    if omega is None:
        raise WindowNotContained("window preimage is empty")
    lo, hi = omega.min(axis=0), omega.max(axis=0)
    gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], grid), np.linspace(lo[1], hi[1], grid))
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    pts = pts[pg.contains(omega, pts)]
    inside = np.ones(len(pts), dtype=bool) if len(R_c) == 0 else np.all(pts @ R_a.T <= R_c + 1e-12, axis=1)
    support = float(inside.mean()) if len(pts) else 0.0
    if support < support_threshold:
        raise WindowNotContained(f"in-region support {support:.3f} below {support_threshold}")
    win_in = omega if R_poly is None else _intersect(omega, R_poly)
    if win_in is None:
        raise WindowNotContained("window does not meet the parent region")

    floor = AREA_FLOOR_REL * pg.area(win_in)
    taus = np.asarray(net.activation.breakpoints)

    # input side: layer pre-activations through the prefix affine map
    W, b = effective_layers(net, mode)[layer - 1]
    G, g = W @ A_t, W @ d_t + b
    nz = np.hypot(G[:, 0], G[:, 1]) > 0
    a_in = np.repeat(G[nz], len(taus), axis=0)
    c_in = (taus[None, :] - g[nz][:, None]).reshape(-1)
    cells_in, _ = _lines_split(win_in, a_in, c_in, floor)

    # intrinsic side: orthonormal coordinates s on S_R, u = ubar + Qm s
    U, _, _ = np.linalg.svd(A_t, full_matrices=False)
    Qm = U[:, :2]
    box_s = pg.box(np.zeros(2), 1.01 * r * np.sqrt(d))
    win_s = pg.clip_halfplanes(box_s, np.vstack([Qm, -Qm]), np.full(2 * d, r))
    # parent region in s-coordinates: x = anchor + M s with M = pinv(A_t) Qm
    M = np.linalg.pinv(A_t) @ Qm
    if len(R_c):
        win_s = pg.clip_halfplanes(win_s, R_a @ M, R_c - R_a @ anchor, snap=0.0)
    a_s, c_s = [], []
    for _, h in layer_hyperplanes(net, layer, mode):
        n_s = Qm.T @ h.w
        if np.hypot(n_s[0], n_s[1]) == 0:
            continue
        a_s.append(n_s)
        c_s.append(h.c - float(h.w @ ubar))
    floor_s = AREA_FLOOR_REL * pg.area(win_s)
    cells_s, _ = _lines_split(win_s, np.array(a_s).reshape(-1, 2), np.array(c_s), floor_s)

    # match cells by their layer pattern and compare the mapped polygons
    to_s = Qm.T @ A_t
    jac = float(np.sqrt(max(np.linalg.det(A_t.T @ A_t), 0.0)))
    key_s = {}
    for p in cells_s:
        u = ubar + Qm @ pg.centroid(p)
        key_s[tuple(net.activation.pieces(_layer_preact(net, layer, mode, u)))] = p
    jmin = 1.0
    for p in cells_in:
        ps = (p - anchor) @ to_s.T
        if pg.area(ps) < 0:
            ps = ps[::-1]
        key = tuple(net.activation.pieces(G @ pg.centroid(p) + g))
        q = key_s.get(key)
        if q is None:
            jmin = 0.0
            continue
        inter = _intersect(ps, q)
        ai = 0.0 if inter is None else pg.area(inter)
        union = pg.area(ps) + pg.area(q) - ai
        jmin = min(jmin, ai / union if union > 0 else 0.0)
    return PullbackReport(layer, hashlib.sha1(np.asarray(prefix_pattern, np.int16).tobytes()).hexdigest()[:12],
                          rank, smin, len(cells_in), len(cells_s), len(cells_in) == len(cells_s), jac,
                          support, support_threshold, jmin, pg.area(win_in), pg.area(win_s), r)


def _layer_preact(net: Network, layer: int, mode, u):
    """Post-BN pre-activation of ``layer`` at representation point ``u``."""
    W, b = effective_layers(net, mode)[layer - 1]
    return W @ u + b


# --- decision regions ----------------------------------------------------------

@dataclass(frozen=True)
class DecisionMap:
    subcells: list          # (polygon, label, cell index)
    boundary: list          # (p, q, class_a, class_b) segments with class_a < class_b
    cell_labels: np.ndarray  # argmax at each cell centroid


def decision_regions(cells: Sequence[RegionCell], edge_tol: float = 1e-9) -> DecisionMap:
    """Split cells by the argmax of their affine logits; ties go to the lowest class."""
    subcells, boundary, labels = [], [], []
    for ci, cell in enumerate(cells):
        A, b = cell.affine.A, cell.affine.b
        C = b.shape[0]
        if C < 2:
            raise ValueError("decision regions need at least two logits")
        labels.append(int(np.argmax(cell.affine(cell.centroid))))
        floor = AREA_FLOOR_REL * max(cell.area, 1e-300)
        for k in range(C):
            poly = cell.polygon
            feasible = True
            for m in range(C):
                if m == k:
                    continue
                # logit_m - logit_k <= 0 (strict against lower classes)
                a, c = A[m] - A[k], b[k] - b[m]
                if np.hypot(a[0], a[1]) == 0:
                    if c < 0 or (c == 0 and m < k):
                        feasible = False
                        break
                    continue
                poly = pg.clip(poly, a, c)
                if poly is None or poly.shape[0] < 3:
                    feasible = False
                    break
            if not feasible or pg.area(poly) <= floor:
                continue
            subcells.append((poly, k, ci))
            for i in range(poly.shape[0]):
                p, q = poly[i], poly[(i + 1) % poly.shape[0]]
                for m in range(k + 1, C):
                    a, c = A[m] - A[k], b[k] - b[m]
                    nrm = np.hypot(a[0], a[1])
                    if nrm > 0 and abs(p @ a - c) <= edge_tol * nrm and abs(q @ a - c) <= edge_tol * nrm:
                        boundary.append((p.copy(), q.copy(), k, m))
    return DecisionMap(subcells, boundary, np.array(labels, dtype=int))


def label_points(dmap: DecisionMap, pts) -> np.ndarray:
    """Label of the subcell containing each point (``-1`` when none does)."""
    pts = np.atleast_2d(pts)
    out = np.full(len(pts), -1, dtype=int)
    for poly, lab, _ in dmap.subcells:
        lo, hi = poly.min(axis=0), poly.max(axis=0)
        cand = np.where((out < 0) & np.all(pts >= lo - 1e-12, axis=1) & np.all(pts <= hi + 1e-12, axis=1))[0]
        if cand.size:
            inside = pg.contains(poly, pts[cand], tol=1e-12)
            out[cand[inside]] = lab
    return out
