"""Continuous piecewise-affine (CPA) networks.

A network is a stack of hidden blocks ``linear -> [BN] -> sigma`` followed by a
linear output layer; ``sigma`` is one CPA activation shared by every block.

Evaluation modes
    ``"nobn"``      BN slots are skipped (raw linear pre-activations).
    ``"eval"``      BN uses its running statistics.
    ``FrozenBatch`` BN uses the statistics of a frozen reference batch, which
                    makes the training-time map a deterministic CPA map.

Piece indices are 1-based: piece ``k`` is the interval ``(tau_{k-1}, tau_k)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .batchnorm import BatchNormSlot, BatchStats, FrozenBatch, bn_as_affine, bn_train_transform

BREAKPOINT_TOL = 1e-12
NOBN = "nobn"
EVAL = "eval"

Mode = Union[str, FrozenBatch]


class BreakpointHit(ValueError):
    """An input lies on the switching set (some pre-activation equals a breakpoint)."""


@dataclass(frozen=True)
class CpaActivation:
    breakpoints: tuple
    slopes: tuple
    intercepts: tuple
    name: str = "cpa"

    def __post_init__(self):
        bp = tuple(float(t) for t in self.breakpoints)
        a = tuple(float(s) for s in self.slopes)
        eta = tuple(float(c) for c in self.intercepts)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "slopes", a)
        object.__setattr__(self, "intercepts", eta)
        if len(a) < 2 or len(a) != len(eta) or len(bp) != len(a) - 1:
            raise ValueError("need K >= 2 pieces and K - 1 breakpoints")
        if any(t1 >= t2 for t1, t2 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        for k, t in enumerate(bp):
            left = a[k] * t + eta[k]
            right = a[k + 1] * t + eta[k + 1]
            if abs(left - right) > 1e-12:
                raise ValueError(f"activation is discontinuous at breakpoint {t}")

    @property
    def K(self) -> int:
        return len(self.slopes)

    @property
    def Q(self) -> int:
        return len(self.breakpoints)

    def _slot(self, t):
        # 0-based piece; breakpoints themselves go right, which is harmless by continuity
        return np.searchsorted(np.asarray(self.breakpoints), t, side="right")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = self._slot(t)
        return np.asarray(self.slopes)[k] * t + np.asarray(self.intercepts)[k]

    def slope_at(self, t):
        return np.asarray(self.slopes)[self._slot(np.asarray(t, dtype=float))]

    def pieces(self, t):
        """1-based piece indices without the breakpoint check."""
        return self._slot(np.asarray(t, dtype=float)) + 1


def relu() -> CpaActivation:
    return CpaActivation((0.0,), (0.0, 1.0), (0.0, 0.0), "relu")


def leaky_relu(alpha: float = 0.01) -> CpaActivation:
    return CpaActivation((0.0,), (alpha, 1.0), (0.0, 0.0), f"leaky_relu({alpha:g})")


def hard_tanh() -> CpaActivation:
    return CpaActivation((-1.0, 1.0), (0.0, 1.0, 0.0), (-1.0, 0.0, 1.0), "hard_tanh")


def activation_by_name(name: str) -> CpaActivation:
    if name == "relu":
        return relu()
    if name == "hard_tanh":
        return hard_tanh()
    if name.startswith("leaky_relu"):
        inner = name[len("leaky_relu"):].strip("()")
        return leaky_relu(float(inner) if inner else 0.01)
    raise ValueError(f"unknown activation {name!r}")


def activation_eval(act: CpaActivation, t: float) -> float:
    return float(act(t))


def piece_index(act: CpaActivation, t: float, tol: float = BREAKPOINT_TOL) -> int:
    for tau in act.breakpoints:
        if abs(t - tau) <= tol:
            raise BreakpointHit(f"value {t!r} is within {tol:g} of breakpoint {tau!r}")
    return int(act.pieces(t))


@dataclass
class LinearLayer:
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.atleast_2d(np.asarray(self.W, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.b.shape[0] != self.W.shape[0]:
            raise ValueError(f"bias length {self.b.shape[0]} != out_dim {self.W.shape[0]}")

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]


@dataclass
class HiddenBlock:
    linear: LinearLayer
    bn: Optional[BatchNormSlot] = None


@dataclass
class Network:
    blocks: list
    output: LinearLayer
    activation: CpaActivation = field(default_factory=relu)

    def __post_init__(self):
        self.blocks = list(self.blocks)
        if not self.blocks:
            raise ValueError("network needs at least one hidden block")
        dim = self.blocks[0].linear.in_dim
        for i, blk in enumerate(self.blocks):
            if blk.linear.in_dim != dim:
                raise ValueError(f"block {i} expects input dim {blk.linear.in_dim}, got {dim}")
            if blk.bn is not None and blk.bn.width != blk.linear.out_dim:
                raise ValueError(f"block {i} BN width does not match layer width")
            dim = blk.linear.out_dim
        if self.output.in_dim != dim:
            raise ValueError("output layer does not match last hidden width")

    @property
    def input_dim(self) -> int:
        return self.blocks[0].linear.in_dim

    @property
    def widths(self) -> tuple:
        return tuple(b.linear.out_dim for b in self.blocks)

    @property
    def output_dim(self) -> int:
        return self.output.out_dim

    @property
    def has_bn(self) -> bool:
        return any(b.bn is not None for b in self.blocks)


def _bn_stats_for(block_index: int, bn: BatchNormSlot, mode: Mode) -> Optional[BatchStats]:
    if isinstance(mode, FrozenBatch):
        st = mode.stats[block_index]
        if st is None:
            raise ValueError(f"frozen batch has no statistics for BN block {block_index}")
        return st
    if mode == EVAL:
        return BatchStats(bn.running_mean, bn.running_var, 0)
    if mode == NOBN:
        return None
    raise ValueError(f"unknown mode {mode!r}")


def _check_mode(net: Network, mode: Mode):
    if isinstance(mode, FrozenBatch):
        if len(mode.stats) != len(net.blocks):
            raise ValueError("frozen batch was captured on a network of different depth")
    elif mode not in (NOBN, EVAL):
        raise ValueError(f"unknown mode {mode!r}")


def effective_layers(net: Network, mode: Mode) -> list:
    """Per hidden block ``(W_eff, b_eff)`` with BN absorbed, so ``zhat = W_eff h + b_eff``."""
    _check_mode(net, mode)
    out = []
    for i, blk in enumerate(net.blocks):
        W, b = blk.linear.W, blk.linear.b
        st = None if blk.bn is None else _bn_stats_for(i, blk.bn, mode)
        if st is None:
            out.append((W, b))
        else:
            scale, shift = bn_as_affine(blk.bn.gamma, blk.bn.beta, blk.bn.eps, st, b_raw=b)
            out.append((scale[:, None] * W, shift))
    return out


def forward(net: Network, x, mode: Mode = NOBN):
    """Evaluate the network; returns ``(output, trace)``.

    ``trace`` holds one ``(z, zhat, h)`` triple per hidden block: raw
    pre-activation, post-BN pre-activation (equal to ``z`` without BN) and the
    activation output. Accepts a single point or a batch of rows.
    """
    _check_mode(net, mode)
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    H = np.atleast_2d(X)
    if H.shape[1] != net.input_dim:
        raise ValueError(f"input has dimension {H.shape[1]}, network expects {net.input_dim}")
    trace = []
    for i, blk in enumerate(net.blocks):
        Z = H @ blk.linear.W.T + blk.linear.b
        st = None if blk.bn is None else _bn_stats_for(i, blk.bn, mode)
        Zh = Z if st is None else bn_train_transform(Z, st, blk.bn.gamma, blk.bn.beta, blk.bn.eps)
        H = net.activation(Zh)
        trace.append((Z[0], Zh[0], H[0]) if single else (Z, Zh, H))
    out = H @ net.output.W.T + net.output.b
    return (out[0] if single else out), trace


def activation_pattern(net: Network, x, mode: Mode = NOBN, tol: float = BREAKPOINT_TOL) -> np.ndarray:
    """Concatenated 1-based piece indices of every hidden neuron at ``x``."""
    _, trace = forward(net, np.asarray(x, dtype=float).reshape(-1), mode)
    taus = np.asarray(net.activation.breakpoints)
    parts = []
    for l, (_, zh, _) in enumerate(trace):
        gap = np.abs(zh[:, None] - taus[None, :])
        if np.any(gap <= tol):
            j, q = np.argwhere(gap <= tol)[0]
            raise BreakpointHit(f"layer {l + 1} neuron {j} sits on breakpoint {taus[q]!r}")
        parts.append(net.activation.pieces(zh))
    return np.concatenate(parts).astype(int)


def split_pattern(net: Network, pattern) -> list:
    pattern = np.asarray(pattern, dtype=int)
    if pattern.shape[0] != sum(net.widths):
        raise ValueError(f"pattern length {pattern.shape[0]} != {sum(net.widths)} hidden neurons")
    if np.any((pattern < 1) | (pattern > net.activation.K)):
        raise ValueError("pattern entries out of range")
    return np.split(pattern, np.cumsum(net.widths)[:-1])


@dataclass(frozen=True)
class AffineMap:
    A: np.ndarray
    b: np.ndarray

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.A.T + self.b


def region_affine_map(net: Network, pattern, mode: Mode = NOBN, depth: Optional[int] = None) -> AffineMap:
    """Affine map realised on the region with the given activation pattern.

    With ``depth=None`` this is the network output ``A_R x + b_R``; with
    ``depth=l`` it is the prefix representation ``h^(l)`` (``l = 0`` is the
    identity). Only the first ``depth`` layers of ``pattern`` are used.
    """
    layers = effective_layers(net, mode)
    per_layer = split_pattern(net, pattern)
    stop = len(layers) if depth is None else depth
    if not 0 <= stop <= len(layers):
        raise ValueError(f"depth {depth} outside 0..{len(layers)}")
    slopes = np.asarray(net.activation.slopes)
    icepts = np.asarray(net.activation.intercepts)
    A = np.eye(net.input_dim)
    c = np.zeros(net.input_dim)
    for (W, b), p in zip(layers[:stop], per_layer[:stop]):
        # h = D (W A x + W c + b) + eta
        D = slopes[p - 1]
        A = D[:, None] * (W @ A)
        c = D * (W @ c + b) + icepts[p - 1]
    if depth is not None:
        return AffineMap(A, c)
    return AffineMap(net.output.W @ A, net.output.W @ c + net.output.b)


def network_from_arrays(weights: Sequence, biases: Sequence, activation: Optional[CpaActivation] = None,
                        bn: Optional[Sequence] = None) -> Network:
    """Build a network from per-layer arrays; the last pair is the output layer."""
    layers = [LinearLayer(W, b) for W, b in zip(weights, biases)]
    bn = list(bn) if bn is not None else [None] * (len(layers) - 1)
    blocks = [HiddenBlock(lin, slot) for lin, slot in zip(layers[:-1], bn)]
    return Network(blocks, layers[-1], activation or relu())
