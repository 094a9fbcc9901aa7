"""Offset distributions, ECDF comparisons and parent-region conditioning.

ECDFs are right-continuous step functions ``F(r) = #{x <= r} / n``. The signed
supremum ``D+ = sup_r (F_a - F_b)`` is attained at a sample point, so it is
evaluated exactly on the union of both samples.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .batchnorm import FrozenBatch, freeze_batch
from .cpa import NOBN, BreakpointHit, Network, activation_pattern, region_affine_map
from .hyperplanes import (bn_delta, centroid_distance_l2, layer_hyperplanes, layer_offsets,
                          representation_centroid)
from .regions import RANK_TOL, sigma_min
from .trainer import with_bias_shift

QUANTILES = (0.10, 0.25, 0.50)


class EmptySample(ValueError):
    pass


def _sample(x) -> np.ndarray:
    x = np.sort(np.asarray(x, dtype=float).reshape(-1))
    if x.size == 0:
        raise EmptySample("empty sample")
    return x


def ecdf(sample, r) -> np.ndarray:
    s = _sample(sample)
    return np.searchsorted(s, np.asarray(r, dtype=float), side="right") / s.size


@dataclass(frozen=True)
class EcdfSummary:
    sample_a: np.ndarray
    sample_b: np.ndarray
    grid: np.ndarray
    d_plus: float
    w1: float
    area: float


def wasserstein1(a, b) -> float:
    """``integral |F_a - F_b|`` over the merged breakpoints (exact for step functions)."""
    a, b = _sample(a), _sample(b)
    pts = np.union1d(a, b)
    diff = np.abs(ecdf(a, pts[:-1]) - ecdf(b, pts[:-1]))
    return float(np.sum(diff * np.diff(pts)))


def ecdf_compare(sample_a, sample_b, grid=None, n_grid: int = 512) -> EcdfSummary:
    """D+ of ``a`` over ``b``, W1, and the trapezoid area of ``F_a - F_b`` on ``grid``."""
    a, b = _sample(sample_a), _sample(sample_b)
    pts = np.union1d(a, b)
    d_plus = float(np.max(ecdf(a, pts) - ecdf(b, pts)))
    if grid is None:
        grid = np.linspace(pts[0], pts[-1], n_grid) if pts[-1] > pts[0] else pts
    grid = np.asarray(grid, dtype=float)
    vals = ecdf(a, grid) - ecdf(b, grid)
    area = float(np.sum((vals[1:] + vals[:-1]) * np.diff(grid)) / 2) if grid.size > 1 else 0.0
    return EcdfSummary(a, b, grid, d_plus, wasserstein1(a, b), area)


def cut_rate_at_quantile(offsets, q: float, reference) -> float:
    """Fraction of ``offsets`` below the ``q``-quantile of ``reference``."""
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    off, ref = _sample(offsets), _sample(reference)
    r = float(np.quantile(ref, q))
    return float(np.mean(off < r))


def pearson(x, y) -> Optional[float]:
    """Pearson correlation, or ``None`` when either series has zero variance."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.size < 2 or x.size != y.size:
        raise ValueError("need two equal-length series with at least two entries")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(dx @ dx), np.sqrt(dy @ dy)
    if sx == 0 or sy == 0:
        return None
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


# --- offsets on checkpoints ----------------------------------------------------

def offsets_cdf_dataset(net: Network, X, layers, variant: str, frozen: Optional[FrozenBatch] = None) -> dict:
    """Per-layer arrays of normalized offsets centred at the representation centroid of ``X``.

    ``baseline`` uses the non-BN forward pass; ``bn_frozen`` and
    ``through_centroid`` freeze ``X`` itself unless ``frozen`` is given;
    ``bn_running`` centres at the eval-mode centroid.
    """
    X = np.atleast_2d(np.asarray(X, float))
    out = {}
    if variant in ("bn_frozen", "through_centroid"):
        frozen = freeze_batch(net, X) if frozen is None else frozen
        for l in layers:
            center = representation_centroid(net, X, l, frozen)
            recs = layer_offsets(net, l, variant, center=center, frozen=frozen)
            out[l] = np.array([r.delta for r in recs])
    else:
        mode = NOBN if variant == "baseline" else "eval"
        for l in layers:
            center = representation_centroid(net, X, l, mode)
            out[l] = np.array([r.delta for r in layer_offsets(net, l, variant, center=center)])
    return out


@dataclass(frozen=True)
class BiasShiftResult:
    layer: int
    c: float
    baseline_change: np.ndarray      # |Delta(b + c) - Delta(b)| per (neuron, breakpoint)
    baseline_numerator_change: np.ndarray
    bn_change: Optional[np.ndarray]  # same for the BN offsets, None without BN
    sign_flip: np.ndarray            # baseline numerator changed sign


def _raw_offsets(net: Network, batch, layer: int):
    """Baseline and BN numerators straight from the definitions, without simplification.

    BN numerators use ``|<w, ubar> + b - mu - delta sqrt(v + eps)|`` with the
    batch statistics recomputed from scratch, so bias invariance is tested
    rather than assumed.
    """
    blk = net.blocks[layer - 1]
    W, b = blk.linear.W, blk.linear.b
    l1 = np.abs(W).sum(axis=1)
    taus = net.activation.breakpoints
    ubar_nobn = representation_centroid(net, batch, layer, NOBN)
    base = np.array([[tau - (W[j] @ ubar_nobn + b[j]) for tau in taus] for j in range(W.shape[0])])
    bn = None
    if blk.bn is not None:
        fz = freeze_batch(net, batch)
        ubar = fz.centroids[layer - 1]
        st = fz.stats[layer - 1]
        bn = np.array([[W[j] @ ubar + b[j] - st.mu[j]
                        - bn_delta(blk.bn.gamma[j], blk.bn.beta[j], tau) * np.sqrt(st.var[j] + blk.bn.eps)
                        for tau in taus] for j in range(W.shape[0])])
    return base, bn, l1


def bias_shift_test(net: Network, batch, layer: int, c: float) -> BiasShiftResult:
    """Shift layer ``layer``'s raw bias by ``c`` and compare offsets before and after."""
    base0, bn0, l1 = _raw_offsets(net, batch, layer)
    base1, bn1, _ = _raw_offsets(with_bias_shift(net, layer, c), batch, layer)
    bnc = None if bn0 is None else np.abs(np.abs(bn1) - np.abs(bn0)) / l1[:, None]
    num_change = np.abs(np.abs(base1) - np.abs(base0))
    return BiasShiftResult(layer, float(c), num_change / l1[:, None], num_change, bnc,
                           np.sign(base1) != np.sign(base0))


def bias_offset_correlation(net: Network, batch) -> dict:
    """``{layer: {variant: r}}`` between ``|b_j|`` and the offset of neuron ``j``.

    BN layers use the ``bn_frozen`` offsets of ``batch``; other layers use
    baseline offsets at the non-BN batch centroid. Multi-breakpoint neurons
    contribute their smallest offset. ``r`` is ``None`` when undefined.
    """
    batch = np.atleast_2d(np.asarray(batch, float))
    out = {}
    frozen = freeze_batch(net, batch) if net.has_bn else None
    for l, blk in enumerate(net.blocks, start=1):
        if blk.bn is not None:
            variant = "bn_frozen"
            recs = layer_offsets(net, l, variant, frozen=frozen)
        else:
            variant = "baseline"
            recs = layer_offsets(net, l, variant, center=representation_centroid(net, batch, l, NOBN))
        best = {}
        for r in recs:
            best[r.neuron] = min(best.get(r.neuron, np.inf), r.delta)
        js = sorted(best)
        out[l] = {variant: pearson(np.abs(blk.linear.b[js]), [best[j] for j in js]) if len(js) >= 2 else None}
    return out


def distance_histogram(net: Network, X, layers, mode=NOBN) -> dict:
    """Per-layer Euclidean distances from the representation centroid of ``X`` to each switching hyperplane.

    Pass ``mode="frozen"`` to freeze ``X`` as the reference batch.
    """
    X = np.atleast_2d(np.asarray(X, float))
    if isinstance(mode, str) and mode == "frozen":
        mode = freeze_batch(net, X)
    out = {}
    for l in layers:
        ubar = representation_centroid(net, X, l, mode)
        out[l] = np.array([centroid_distance_l2(h, ubar) for _, h in layer_hyperplanes(net, l, mode)])
    return out


@dataclass(frozen=True)
class ConditioningSummary:
    depth: int
    n_points: int
    n_skipped: int
    drop_rank_ratio: float
    sigma_min: np.ndarray
    ranks: np.ndarray


def parent_region_conditioning(net: Network, mode, points, depth: int) -> ConditioningSummary:
    """Rank and smallest singular value of the prefix map ``h^(depth)`` at each point's parent region.

    Rank counts singular values above the rank tolerance; points on the
    switching set are skipped.
    """
    if net.input_dim != 2:
        raise ValueError("conditioning statistics are defined for 2D inputs")
    smins, ranks, skipped = [], [], 0
    for x in np.atleast_2d(np.asarray(points, float)):
        try:
            pat = activation_pattern(net, x, mode)
        except BreakpointHit:
            skipped += 1
            continue
        A = region_affine_map(net, pat, mode, depth=depth).A
        s = sigma_min(A)
        smins.append(s)
        ranks.append(int(np.sum(np.linalg.svd(A, compute_uv=False) > RANK_TOL)))
    ranks = np.array(ranks, dtype=int)
    ratio = float(np.mean(ranks < 2)) if ranks.size else float("nan")
    return ConditioningSummary(depth, len(ranks), skipped, ratio, np.array(smins), ranks)
