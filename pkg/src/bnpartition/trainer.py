"""Kaiming-uniform init, manual backprop through training-mode BN, Adam and the training loop.

Randomness is split into two streams per seed: one for initialization and one
for mini-batch shuffling. A BN run and a non-BN run with the same seed
therefore start from the same weights and see the same batches.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace

import numpy as np

from .batchnorm import BatchNormSlot, batch_stats, update_running_stats
from .cpa import EVAL, NOBN, HiddenBlock, LinearLayer, Network, activation_by_name, forward
from .datasets import Dataset

BN_TRAIN = "bn_train"
KAIMING_GAIN = np.sqrt(2.0)


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    widths: tuple = (64,)
    use_bn: bool = False
    epochs: int = 100
    lr: float = 1e-4
    batch_size: int = 64
    seed: int = 0
    betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    activation: str = "relu"
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    val_frac: float = 0.25
    checkpoint_epochs: tuple = (0, 100)

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "checkpoint_epochs", tuple(sorted(set(int(e) for e in self.checkpoint_epochs))))
        if not self.widths or min(self.widths) < 1:
            raise ValueError("widths must be positive")
        if self.epochs < 0 or self.lr < 0 or self.batch_size < 1:
            raise ValueError("epochs and lr must be nonnegative and batch_size positive")
        if any(e < 0 or e > self.epochs for e in self.checkpoint_epochs):
            raise ValueError("checkpoint epochs must lie in 0..epochs")


def _streams(seed: int):
    return np.random.default_rng([seed, 0]), np.random.default_rng([seed, 1])


def build_network(in_dim: int, widths, out_dim: int, use_bn: bool = False, activation: str = "relu",
                  seed: int = 0, bn_eps: float = 1e-5, bn_momentum: float = 0.1) -> Network:
    dims = [in_dim, *widths, out_dim]
    layers = [LinearLayer(np.zeros((dims[i + 1], dims[i])), np.zeros(dims[i + 1])) for i in range(len(dims) - 1)]
    blocks = [HiddenBlock(l, BatchNormSlot.identity(l.out_dim, bn_eps, bn_momentum) if use_bn else None)
              for l in layers[:-1]]
    return init_kaiming_uniform(Network(blocks, layers[-1], activation_by_name(activation)), seed)


def init_kaiming_uniform(net: Network, seed: int) -> Network:
    """Fresh parameters: ``W ~ U(+-gain sqrt(3 / fan_in))`` with gain sqrt(2), ``b ~ U(+-1/sqrt(fan_in))``.

    BN slots are reset to ``gamma = 1``, ``beta = 0`` and running stats (0, 1).
    The draw order ignores BN, so BN and non-BN nets get identical weights.
    """
    rng, _ = _streams(seed)
    layers = [blk.linear for blk in net.blocks] + [net.output]
    fresh = []
    for lin in layers:
        fan_in = lin.in_dim
        bound = KAIMING_GAIN * np.sqrt(3.0 / fan_in)
        W = rng.uniform(-bound, bound, size=lin.W.shape)
        b = rng.uniform(-1 / np.sqrt(fan_in), 1 / np.sqrt(fan_in), size=lin.b.shape)
        fresh.append(LinearLayer(W, b))
    blocks = []
    for lin, blk in zip(fresh[:-1], net.blocks):
        bn = None if blk.bn is None else BatchNormSlot.identity(lin.out_dim, blk.bn.eps, blk.bn.momentum)
        blocks.append(HiddenBlock(lin, bn))
    return Network(blocks, fresh[-1], net.activation)


def parameters(net: Network) -> list:
    """Trainable arrays in a fixed order (shared references, not copies)."""
    out = []
    for blk in net.blocks:
        out += [blk.linear.W, blk.linear.b]
        if blk.bn is not None:
            out += [blk.bn.gamma, blk.bn.beta]
    return out + [net.output.W, net.output.b]


def parameter_names(net: Network) -> list:
    names = []
    for i, blk in enumerate(net.blocks, start=1):
        names += [f"W{i}", f"b{i}"] + ([f"gamma{i}", f"beta{i}"] if blk.bn is not None else [])
    return names + ["W_out", "b_out"]


def _softmax_xent(logits, y):
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    M = logits.shape[0]
    loss = -logp[np.arange(M), y].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(M), y] -= 1
    return float(loss), dlogits / M


def loss_and_grad(net: Network, X, y, mode: str = NOBN):
    """Mean softmax cross-entropy and gradients in ``parameters(net)`` order.

    ``mode="bn_train"`` normalizes with the statistics of ``X`` itself and
    differentiates through them; ``"nobn"`` skips BN slots. Also returns the
    per-block batch statistics (``None`` where unused).
    """
    if mode not in (NOBN, BN_TRAIN):
        raise ValueError("loss_and_grad mode must be 'nobn' or 'bn_train'")
    H = np.atleast_2d(np.asarray(X, float))
    y = np.asarray(y, int)
    act = net.activation
    cache, stats = [], []
    for blk in net.blocks:
        Z = H @ blk.linear.W.T + blk.linear.b
        if mode == BN_TRAIN and blk.bn is not None:
            st = batch_stats(Z)
            inv = 1.0 / np.sqrt(st.var + blk.bn.eps)
            xhat = (Z - st.mu) * inv
            Zh = blk.bn.gamma * xhat + blk.bn.beta
        else:
            st, inv, xhat, Zh = None, None, None, Z
        stats.append(st)
        cache.append((H, Zh, xhat, inv))
        H = act(Zh)
    logits = H @ net.output.W.T + net.output.b
    loss, dL = _softmax_xent(logits, y)
    grads_out = [dL.T @ H, dL.sum(axis=0)]
    dH = dL @ net.output.W
    grads = []
    for blk, (Hp, Zh, xhat, inv) in zip(reversed(net.blocks), reversed(cache)):
        dZh = dH * act.slope_at(Zh)
        block_grads = []
        if xhat is not None:
            M = Zh.shape[0]
            dgamma = (dZh * xhat).sum(axis=0)
            dbeta = dZh.sum(axis=0)
            dxhat = dZh * blk.bn.gamma
            dZ = inv / M * (M * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
            block_grads = [dgamma, dbeta]
        else:
            dZ = dZh
            if blk.bn is not None:
                block_grads = [np.zeros_like(blk.bn.gamma), np.zeros_like(blk.bn.beta)]
        # batch centering cancels the raw bias, so its gradient is zero by construction
        db = np.zeros_like(blk.linear.b) if xhat is not None else dZ.sum(axis=0)
        grads = [dZ.T @ Hp, db] + block_grads + grads
        dH = dZ @ blk.linear.W
    return loss, grads + grads_out, stats


@dataclass
class Adam:
    lr: float
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params, grads):
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1, b2 = self.betas
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def accuracy(net: Network, data: Dataset, mode=None) -> float:
    if len(data) == 0:
        return float("nan")
    mode = (EVAL if net.has_bn else NOBN) if mode is None else mode
    out, _ = forward(net, data.X, mode)
    return float((out.argmax(axis=1) == data.y).mean())


@dataclass
class TrainResult:
    config: TrainConfig
    checkpoints: dict          # epoch -> Network (deep copies)
    metrics: list              # dicts with epoch, loss, train_acc, val_acc
    train: Dataset
    val: Dataset


def train(net: Network, data: Dataset, config: TrainConfig) -> TrainResult:
    """Adam on softmax cross-entropy; BN slots train on batch statistics.

    Running statistics are updated after every training batch. The last
    incomplete batch of each epoch is dropped. Epoch 0 is the untouched input
    network.
    """
    train_set, val_set = data.split(config.val_frac)
    if config.batch_size > len(train_set):
        raise ValueError(f"batch size {config.batch_size} exceeds training set size {len(train_set)}")
    net = copy.deepcopy(net)
    mode = BN_TRAIN if net.has_bn else NOBN
    _, shuffle = _streams(config.seed)
    opt = Adam(config.lr, config.betas, config.adam_eps)
    params = parameters(net)
    checkpoints, metrics = {}, []

    def record(epoch, loss):
        metrics.append({"epoch": epoch, "loss": loss, "train_acc": accuracy(net, train_set),
                        "val_acc": accuracy(net, val_set)})
        if epoch in config.checkpoint_epochs:
            checkpoints[epoch] = copy.deepcopy(net)

    loss0, _, _ = loss_and_grad(net, train_set.X, train_set.y, NOBN if not net.has_bn else BN_TRAIN)
    record(0, loss0)
    n_batches = len(train_set) // config.batch_size
    for epoch in range(1, config.epochs + 1):
        perm = shuffle.permutation(len(train_set))
        losses = []
        for k in range(n_batches):
            idx = perm[k * config.batch_size:(k + 1) * config.batch_size]
            loss, grads, stats = loss_and_grad(net, train_set.X[idx], train_set.y[idx], mode)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise NonFiniteLoss(f"non-finite loss or gradient at epoch {epoch}, batch {k}")
            opt.step(params, grads)
            for blk, st in zip(net.blocks, stats):
                if blk.bn is not None and st is not None:
                    # update_running_stats returns a fresh slot; copy back to keep parameter references
                    new = update_running_stats(blk.bn, st)
                    blk.bn.running_mean[:] = new.running_mean
                    blk.bn.running_var[:] = new.running_var
            losses.append(loss)
        record(epoch, float(np.mean(losses)) if losses else float("nan"))
    return TrainResult(config, checkpoints, metrics, train_set, val_set)


def train_from_config(data: Dataset, config: TrainConfig) -> TrainResult:
    net = build_network(data.X.shape[1], config.widths, data.n_classes, config.use_bn, config.activation,
                        config.seed, config.bn_eps, config.bn_momentum)
    return train(net, data, config)


def with_bias_shift(net: Network, layer: int, c: float) -> Network:
    """Copy of ``net`` with ``c`` added to every raw bias of hidden layer ``layer`` (1-based)."""
    out = copy.deepcopy(net)
    blk = out.blocks[layer - 1]
    out.blocks[layer - 1] = replace(blk, linear=LinearLayer(blk.linear.W, blk.linear.b + c))
    return out
