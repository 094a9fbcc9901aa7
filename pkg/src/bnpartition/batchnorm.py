"""Batch statistics, train/eval BN transforms and frozen reference batches.

BN always sits between a linear layer and the activation. All variances are the
biased (1/M) estimator, including the running variance.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

DEFAULT_EPS = 1e-5
DEFAULT_MOMENTUM = 0.1


@dataclass
class BatchNormSlot:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = DEFAULT_EPS
    momentum: float = DEFAULT_MOMENTUM

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        self.running_mean = np.asarray(self.running_mean, dtype=float)
        self.running_var = np.asarray(self.running_var, dtype=float)
        if not self.eps > 0:
            raise ValueError("BN eps must be positive")
        if not 0 < self.momentum <= 1:
            raise ValueError("BN momentum must lie in (0, 1]")
        if np.any(self.running_var < 0):
            raise ValueError("running variance must be nonnegative")
        width = self.gamma.shape[0]
        for name in ("beta", "running_mean", "running_var"):
            if getattr(self, name).shape != (width,):
                raise ValueError(f"BN field {name} does not match width {width}")

    @property
    def width(self) -> int:
        return self.gamma.shape[0]

    @classmethod
    def identity(cls, width: int, eps: float = DEFAULT_EPS, momentum: float = DEFAULT_MOMENTUM):
        """gamma = 1, beta = 0, running stats (0, 1): the usual initial state."""
        return cls(np.ones(width), np.zeros(width), np.zeros(width), np.ones(width), eps, momentum)


@dataclass(frozen=True)
class BatchStats:
    mu: np.ndarray
    var: np.ndarray
    batch_size: int


@dataclass(frozen=True)
class FrozenBatch:
    """Per-block statistics captured by pushing one reference batch through a net.

    ``stats[i]`` is ``None`` for blocks without BN. ``centroids[i]`` is the mean
    of the batch representation feeding block ``i`` (the input batch itself for
    ``i = 0``).
    """

    stats: tuple
    centroids: tuple
    batch_id: str
    batch_size: int


def batch_stats(Z) -> BatchStats:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[0] < 1:
        raise ValueError("batch_stats needs at least one row")
    mu = Z.mean(axis=0)
    var = ((Z - mu) ** 2).mean(axis=0)
    return BatchStats(mu, var, Z.shape[0])


def bn_train_transform(z, stats: BatchStats, gamma, beta, eps: float = DEFAULT_EPS):
    if not eps > 0:
        raise ValueError("eps must be positive")
    return gamma * (np.asarray(z, dtype=float) - stats.mu) / np.sqrt(stats.var + eps) + beta


def bn_eval_transform(z, running_mean, running_var, gamma, beta, eps: float = DEFAULT_EPS):
    return bn_train_transform(z, BatchStats(np.asarray(running_mean, float),
                                            np.asarray(running_var, float), 0),
                              gamma, beta, eps)


def bn_as_affine(gamma, beta, eps: float, stats: BatchStats, b_raw=None):
    """BN with fixed statistics as ``zhat = scale * z_lin + shift``.

    ``z_lin = W h`` is the bias-free linear output; the raw bias is folded into
    ``shift = scale * (b_raw - mu) + beta``. With ``b_raw=None`` the map acts on
    the full pre-activation ``z`` instead.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    scale = np.asarray(gamma, float) / np.sqrt(stats.var + eps)
    b = 0.0 if b_raw is None else np.asarray(b_raw, float)
    shift = scale * (b - stats.mu) + beta
    return scale, shift


def update_running_stats(slot: BatchNormSlot, stats: BatchStats) -> BatchNormSlot:
    m = slot.momentum
    return replace(
        slot,
        running_mean=(1 - m) * slot.running_mean + m * stats.mu,
        running_var=(1 - m) * slot.running_var + m * stats.var,
    )


def batch_id_of(batch) -> str:
    """Content hash of a reference batch (shape + float64 bytes)."""
    arr = np.ascontiguousarray(np.asarray(batch, dtype=np.float64))
    h = hashlib.sha256()
    h.update(str(arr.shape).encode())
    h.update(arr.tobytes())
    return h.hexdigest()[:16]


def freeze_batch(net, batch, batch_id: Optional[str] = None) -> FrozenBatch:
    """Propagate ``batch`` in training mode and keep every BN layer's statistics.

    Statistics at block ``l`` are computed from block ``l-1`` outputs that were
    already normalised with their own batch statistics.
    """
    H = np.atleast_2d(np.asarray(batch, dtype=float))
    if H.shape[1] != net.input_dim:
        raise ValueError(f"batch has dimension {H.shape[1]}, network expects {net.input_dim}")
    stats, centroids = [], []
    for block in net.blocks:
        centroids.append(H.mean(axis=0))
        Z = H @ block.linear.W.T + block.linear.b
        if block.bn is not None:
            st = batch_stats(Z)
            stats.append(st)
            Z = bn_train_transform(Z, st, block.bn.gamma, block.bn.beta, block.bn.eps)
        else:
            stats.append(None)
        H = net.activation(Z)
    return FrozenBatch(tuple(stats), tuple(centroids),
                       batch_id if batch_id is not None else batch_id_of(batch), H.shape[0])
