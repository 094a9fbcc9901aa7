"""Switching hyperplanes, l-infinity window cuts and normalized offsets.

Layers are 1-based here (layer 1 is the first hidden block); the representation
feeding layer ``l`` is ``h^(l-1)``. Breakpoint indices ``q`` are 1-based too.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .batchnorm import FrozenBatch
from .cpa import EVAL, NOBN, Network, forward

log = logging.getLogger(__name__)

BOUNDARY_TOL = 1e-12
VARIANTS = ("baseline", "bn_frozen", "bn_running", "through_centroid")


class ZeroWeight(ValueError):
    pass


class ZeroGamma(ValueError):
    pass


@dataclass(frozen=True)
class Hyperplane:
    """The set ``{u : <w, u> = c}``."""

    w: np.ndarray
    c: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).reshape(-1)
        if not np.any(w != 0):
            raise ZeroWeight("hyperplane normal must be nonzero")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "c", float(self.c))

    def value(self, u):
        return np.asarray(u, dtype=float) @ self.w - self.c


@dataclass(frozen=True)
class Window:
    """Closed l-infinity ball ``B(center, r)``."""

    center: np.ndarray
    r: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))
        object.__setattr__(self, "r", float(self.r))
        if not self.r > 0:
            raise ValueError("window radius must be positive")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def volume(self) -> float:
        return (2 * self.r) ** self.dim


@dataclass(frozen=True)
class OffsetRecord:
    layer: int
    neuron: int
    breakpoint: int
    variant: str
    delta: float
    numerator: float
    l1_norm: float


@dataclass(frozen=True)
class FamilyCutCounts:
    M: np.ndarray
    C: int


def _nonzero(w):
    w = np.asarray(w, dtype=float)
    if not np.any(w != 0):
        raise ZeroWeight("neuron weight vector is zero")
    return w


def baseline_hyperplane(w, b: float, tau: float) -> Hyperplane:
    return Hyperplane(_nonzero(w), tau - b)


def bn_delta(gamma: float, beta: float, tau: float) -> float:
    if gamma == 0:
        raise ZeroGamma("BN gamma is exactly zero")
    return (tau - beta) / gamma


def bn_hyperplane(w, ubar, v: float, gamma: float, beta: float, tau: float, eps: float) -> Hyperplane:
    """Switching set of ``gamma (g(u) - mu)/sqrt(v + eps) + beta = tau`` given the batch centroid.

    The raw bias does not enter: ``mu = <w, ubar> + b`` cancels it.
    """
    w = _nonzero(w)
    if v < 0 or not eps > 0:
        raise ValueError("need v >= 0 and eps > 0")
    delta = bn_delta(gamma, beta, tau)
    return Hyperplane(w, float(w @ np.asarray(ubar, float)) + delta * np.sqrt(v + eps))


def bn_running_hyperplane(w, b: float, running_mean: float, running_var: float,
                          gamma: float, beta: float, tau: float, eps: float) -> Hyperplane:
    w = _nonzero(w)
    delta = bn_delta(gamma, beta, tau)
    return Hyperplane(w, running_mean - b + delta * np.sqrt(running_var + eps))


def through_centroid_hyperplane(w, ubar) -> Hyperplane:
    w = _nonzero(w)
    return Hyperplane(w, float(w @ np.asarray(ubar, float)))


def _gap(h: Hyperplane, window: Window):
    return abs(h.c - float(h.w @ window.center)), window.r * float(np.abs(h.w).sum())


def window_cut(h: Hyperplane, window: Window, boundary: str = "open") -> bool:
    """Does ``h`` meet the open (``"open"``) or closed (``"closed"``) window?"""
    gap, reach = _gap(h, window)
    if boundary == "open":
        return gap < reach
    if boundary == "closed":
        return gap <= reach
    raise ValueError("boundary must be 'open' or 'closed'")


def cut_status(h: Hyperplane, window: Window, tol: float = BOUNDARY_TOL) -> str:
    """``"interior"``, ``"miss"``, or ``"boundary"`` when the offset is within ``tol`` of ``r``."""
    delta = offset_to_center(h, window.center)
    if abs(delta - window.r) <= tol:
        return "boundary"
    return "interior" if delta < window.r else "miss"


def offset_to_center(h: Hyperplane, center) -> float:
    """Normalized offset ``|c - <w, center>| / ||w||_1``; a cut at radius r iff this is < r."""
    return abs(h.c - float(h.w @ np.asarray(center, float))) / float(np.abs(h.w).sum())


def centroid_distance_l2(h: Hyperplane, x0) -> float:
    return abs(h.c - float(h.w @ np.asarray(x0, float))) / float(np.linalg.norm(h.w))


# --- layer-level helpers -------------------------------------------------------

def _block(net: Network, layer: int):
    if not 1 <= layer <= len(net.blocks):
        raise ValueError(f"layer {layer} outside 1..{len(net.blocks)}")
    return net.blocks[layer - 1]


def representation(net: Network, X, layer: int, mode=NOBN):
    """Rows of ``h^(layer-1)`` for inputs ``X`` under ``mode``."""
    X = np.atleast_2d(np.asarray(X, float))
    if layer == 1:
        return X
    _, trace = forward(net, X, mode)
    return trace[layer - 2][2]


def representation_centroid(net: Network, X, layer: int, mode=NOBN):
    return representation(net, X, layer, mode).mean(axis=0)


def _variant_for_mode(block, mode) -> str:
    if block.bn is None or mode == NOBN:
        return "baseline"
    if isinstance(mode, FrozenBatch):
        return "bn_frozen"
    if mode == EVAL:
        return "bn_running"
    raise ValueError(f"unknown mode {mode!r}")


def layer_hyperplanes(net: Network, layer: int, mode=NOBN) -> list:
    """``[((j, q), Hyperplane)]`` for layer ``layer`` in representation coordinates.

    Neurons with a zero weight row are skipped with a warning. All hyperplanes
    of one neuron share the same normal vector object.
    """
    blk = _block(net, layer)
    variant = _variant_for_mode(blk, mode)
    W, b = blk.linear.W, blk.linear.b
    out = []
    for j in range(W.shape[0]):
        w = W[j]
        if not np.any(w != 0):
            log.warning("layer %d neuron %d has zero weights; excluded from the arrangement", layer, j)
            continue
        for q, tau in enumerate(net.activation.breakpoints, start=1):
            if variant == "baseline":
                h = baseline_hyperplane(w, b[j], tau)
            elif variant == "bn_frozen":
                st = mode.stats[layer - 1]
                h = bn_hyperplane(w, mode.centroids[layer - 1], st.var[j], blk.bn.gamma[j],
                                  blk.bn.beta[j], tau, blk.bn.eps)
            else:
                bn = blk.bn
                h = bn_running_hyperplane(w, b[j], bn.running_mean[j], bn.running_var[j],
                                          bn.gamma[j], bn.beta[j], tau, bn.eps)
            out.append(((j, q), h))
    return out


def layer_offsets(net: Network, layer: int, variant: str, center=None,
                  frozen: Optional[FrozenBatch] = None) -> list:
    """Normalized offsets of every switching hyperplane of ``layer``.

    ``center`` is the window center in the representation feeding ``layer``.
    It is required for ``baseline`` and ``bn_running``; for ``bn_frozen`` and
    ``through_centroid`` it defaults to the frozen batch centroid, which gives
    the bias-free form ``|delta| sqrt(v + eps) / ||w||_1``.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    blk = _block(net, layer)
    W, b = blk.linear.W, blk.linear.b
    if variant in ("bn_frozen", "through_centroid"):
        if frozen is None or blk.bn is None:
            raise ValueError(f"variant {variant} needs a BN layer and a frozen batch")
        ubar = np.asarray(frozen.centroids[layer - 1], float)
        var = frozen.stats[layer - 1].var
    elif variant == "bn_running" and blk.bn is None:
        raise ValueError("bn_running needs a BN layer")
    if center is None:
        if variant in ("baseline", "bn_running"):
            raise ValueError(f"variant {variant} needs an explicit center")
        center = ubar
    center = np.asarray(center, float)
    records = []
    for j in range(W.shape[0]):
        w = W[j]
        l1 = float(np.abs(w).sum())
        if l1 == 0:
            log.warning("layer %d neuron %d has zero weights; no offset", layer, j)
            continue
        for q, tau in enumerate(net.activation.breakpoints, start=1):
            if variant == "baseline":
                num = abs(tau - (float(w @ center) + b[j]))
            elif variant == "through_centroid":
                num = abs(float(w @ (ubar - center)))
            elif variant == "bn_frozen":
                delta = bn_delta(blk.bn.gamma[j], blk.bn.beta[j], tau)
                if np.array_equal(center, ubar):
                    num = abs(delta) * np.sqrt(var[j] + blk.bn.eps)
                else:
                    num = abs(float(w @ (ubar - center)) + delta * np.sqrt(var[j] + blk.bn.eps))
            else:
                bn = blk.bn
                delta = bn_delta(bn.gamma[j], bn.beta[j], tau)
                num = abs(float(w @ center) + b[j] - bn.running_mean[j]
                          - delta * np.sqrt(bn.running_var[j] + bn.eps))
            records.append(OffsetRecord(layer, j, q, variant, float(num) / l1, float(num), l1))
    return records


def family_cut_counts(net: Network, layer: int, mode, window: Window) -> FamilyCutCounts:
    """Per-neuron number of breakpoint hyperplanes cutting the open window."""
    n = _block(net, layer).linear.out_dim
    M = np.zeros(n, dtype=int)
    for (j, _), h in layer_hyperplanes(net, layer, mode):
        if window_cut(h, window, "open"):
            M[j] += 1
    return FamilyCutCounts(M, int(M.sum()))


def through_centroid_residual(net: Network, frozen: FrozenBatch) -> float:
    """Largest ``|<w_j, ubar> + b_j - mu_j| / (1 + |<w_j, ubar>|)`` over BN neurons.

    Zero in exact arithmetic: the batch mean of the pre-activation is the
    pre-activation of the batch centroid.
    """
    worst = 0.0
    for i, blk in enumerate(net.blocks):
        if blk.bn is None:
            continue
        proj = blk.linear.W @ frozen.centroids[i]
        res = np.abs(proj + blk.linear.b - frozen.stats[i].mu) / (1 + np.abs(proj))
        worst = max(worst, float(res.max()))
    return worst
