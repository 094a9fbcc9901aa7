import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bnpartition.batchnorm import BatchNormSlot, freeze_batch
from bnpartition.cpa import NOBN, HiddenBlock, Network, forward
from bnpartition.trainer import BN_TRAIN, build_network, loss_and_grad, parameters

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_net(seed, widths=(6, 5), bn=False, activation="relu", in_dim=2, out_dim=3):
    """Kaiming-initialized net; BN slots get random gamma, beta and running stats."""
    net = build_network(in_dim, widths, out_dim, use_bn=bn, activation=activation, seed=seed)
    if not bn:
        return net
    rng = np.random.default_rng(seed + 10_000)
    blocks = []
    for blk in net.blocks:
        w = blk.linear.out_dim
        slot = BatchNormSlot(rng.uniform(0.5, 2.0, w) * rng.choice([-1, 1], w), rng.normal(0, 0.5, w),
                             rng.normal(0, 0.5, w), rng.uniform(0.2, 3.0, w))
        blocks.append(HiddenBlock(blk.linear, slot))
    return Network(blocks, net.output, net.activation)


def _pieces(net, X, mode):
    fz = freeze_batch(net, X) if mode == BN_TRAIN else NOBN
    _, trace = forward(net, X, fz)
    return [net.activation.pieces(zh) for _, zh, _ in trace]


def fd_check(net, X, y, mode, n_coords, seed, h=1e-5, return_skipped=False):
    """Worst relative error of analytic vs central-difference gradients on random coordinates.

    A central difference is only meaningful when neither ``+h`` nor ``-h``
    moves a pre-activation across a breakpoint; such coordinates are redrawn
    and counted. Relative errors use the floor ``max(|num|, |ana|, 1e-6)``.
    """
    _, grads, _ = loss_and_grad(net, X, y, mode)
    params = parameters(net)
    rng = np.random.default_rng(seed)
    sizes = np.array([p.size for p in params])
    base = _pieces(net, X, mode)
    worst, done, skipped = 0.0, 0, 0
    while done < n_coords:
        k = rng.choice(len(params), p=sizes / sizes.sum())
        i = rng.integers(params[k].size)
        flat = params[k].reshape(-1)
        old = flat[i]
        flat[i] = old + h
        lp, _, _ = loss_and_grad(net, X, y, mode)
        kink = any(np.any(a != b) for a, b in zip(base, _pieces(net, X, mode)))
        flat[i] = old - h
        lm, _, _ = loss_and_grad(net, X, y, mode)
        kink |= any(np.any(a != b) for a, b in zip(base, _pieces(net, X, mode)))
        flat[i] = old
        if kink:
            skipped += 1
            continue
        num = (lp - lm) / (2 * h)
        ana = grads[k].reshape(-1)[i]
        worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-6))
        done += 1
    return (worst, skipped) if return_skipped else worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
