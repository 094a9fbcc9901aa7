import numpy as np
import pytest
from hypothesis import given, strategies as st

from bnpartition.batchnorm import freeze_batch
from bnpartition.cpa import (EVAL, NOBN, BreakpointHit, CpaActivation, activation_by_name, activation_eval,
                             activation_pattern, effective_layers, forward, hard_tanh, leaky_relu,
                             network_from_arrays, piece_index, region_affine_map, relu)
from bnpartition.datasets import make_dataset

from conftest import random_net


def test_activation_values():
    assert activation_eval(relu(), -1) == 0
    assert activation_eval(relu(), 2) == 2
    assert activation_eval(leaky_relu(0.1), -3) == pytest.approx(-0.3)
    assert activation_eval(hard_tanh(), 5) == 1
    assert activation_eval(hard_tanh(), -5) == -1


def test_piece_index():
    assert piece_index(relu(), 0.5) == 2
    assert piece_index(hard_tanh(), -2) == 1
    assert piece_index(hard_tanh(), 0.3) == 2
    with pytest.raises(BreakpointHit):
        piece_index(relu(), 0.0, tol=1e-12)


def test_activation_validation():
    with pytest.raises(ValueError):
        CpaActivation((0.0,), (0.0, 1.0), (0.0, 1.0))  # jump at 0
    with pytest.raises(ValueError):
        CpaActivation((1.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        activation_by_name("swish")
    assert activation_by_name("leaky_relu(0.2)").slopes == (0.2, 1.0)


@given(st.floats(-50, 50))
def test_activation_continuous_and_piecewise(t):
    act = hard_tanh()
    k = act.pieces(t) - 1
    assert act(t) == pytest.approx(act.slopes[k] * t + act.intercepts[k])
    for tau in act.breakpoints:
        assert act(tau - 1e-9) == pytest.approx(act(tau + 1e-9), abs=1e-8)


def test_forward_identity_net():
    net = network_from_arrays([np.eye(2), np.eye(2)], [np.zeros(2), np.zeros(2)])
    out, trace = forward(net, [1.0, -1.0])
    np.testing.assert_array_equal(out, [1.0, 0.0])
    assert len(trace) == 1


def test_frozen_singleton_batch_gives_beta():
    net = random_net(0, widths=(4,), bn=True)
    net.blocks[0].bn.beta[:] = 0.0
    net.blocks[0].bn.gamma[:] = 1.0
    x = np.array([0.3, -0.7])
    _, trace = forward(net, x, freeze_batch(net, x[None]))
    np.testing.assert_allclose(trace[0][1], 0.0, atol=1e-12)


def test_forward_matches_stepwise_bn():
    """Frozen-batch forward against a direct recomputation of the BN formulas."""
    net = random_net(0, widths=(5, 4), bn=True)
    X = make_dataset("two-moons", 64, 0).X
    fz = freeze_batch(net, X)
    x = X.mean(axis=0)
    H, h = X, x
    for blk in net.blocks:
        Z = H @ blk.linear.W.T + blk.linear.b
        mu, var = Z.mean(0), Z.var(0)
        norm = lambda z: blk.bn.gamma * (z - mu) / np.sqrt(var + blk.bn.eps) + blk.bn.beta  # noqa: E731
        H = np.maximum(norm(Z), 0)
        h = np.maximum(norm(blk.linear.W @ h + blk.linear.b), 0)
    ref = net.output.W @ h + net.output.b
    out, _ = forward(net, x, fz)
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)


def test_pattern_single_neuron():
    net = network_from_arrays([np.array([[1.0, 0.0]]), np.ones((1, 1))], [np.zeros(1), np.zeros(1)])
    assert activation_pattern(net, [1.0, 0.0]).tolist() == [2]
    assert activation_pattern(net, [-1.0, 0.0]).tolist() == [1]
    with pytest.raises(BreakpointHit):
        activation_pattern(net, [0.0, 3.0])


def test_linear_activation_affine_map_is_product():
    rng = np.random.default_rng(0)
    Ws = [rng.normal(size=(4, 2)), rng.normal(size=(3, 4)), rng.normal(size=(2, 3))]
    bs = [rng.normal(size=4), rng.normal(size=3), rng.normal(size=2)]
    net = network_from_arrays(Ws, bs, leaky_relu(1.0))
    amap = region_affine_map(net, activation_pattern(net, [0.1, 0.2]))
    np.testing.assert_allclose(amap.A, Ws[2] @ Ws[1] @ Ws[0], rtol=1e-12)


def test_dead_pattern_affine_map():
    net = network_from_arrays([np.array([[1.0, 1.0]]), np.array([[2.0], [-1.0]])],
                              [np.array([-10.0]), np.array([0.5, 0.25])])
    amap = region_affine_map(net, activation_pattern(net, [0.0, 0.0]))
    np.testing.assert_array_equal(amap.A, np.zeros((2, 2)))
    np.testing.assert_array_equal(amap.b, [0.5, 0.25])


@given(seed=st.integers(0, 10_000), bn=st.booleans(), act=st.sampled_from(["relu", "hard_tanh", "leaky_relu(0.1)"]),
       x=st.tuples(st.floats(-3, 3), st.floats(-3, 3)))
def test_region_map_matches_forward(seed, bn, act, x):
    net = random_net(seed, widths=(5, 4, 3), bn=bn, activation=act)
    mode = EVAL if bn else NOBN
    try:
        pat = activation_pattern(net, x, mode)
    except BreakpointHit:
        return
    out, trace = forward(net, x, mode)
    np.testing.assert_allclose(region_affine_map(net, pat, mode)(x), out, atol=1e-9)
    prefix = region_affine_map(net, pat, mode, depth=2)
    np.testing.assert_allclose(prefix(x), trace[1][2], atol=1e-9)


@given(seed=st.integers(0, 10_000))
def test_effective_layers_reproduce_bn(seed):
    net = random_net(seed, widths=(4, 3), bn=True)
    x = np.random.default_rng(seed).normal(size=2)
    _, trace = forward(net, x, EVAL)
    (W1, b1), (W2, b2) = effective_layers(net, EVAL)
    np.testing.assert_allclose(W1 @ x + b1, trace[0][1], atol=1e-10)
    np.testing.assert_allclose(W2 @ trace[0][2] + b2, trace[1][1], atol=1e-10)


def test_bad_mode_and_shapes():
    net = random_net(0)
    with pytest.raises(ValueError):
        forward(net, [1.0, 2.0], "bn_magic")
    with pytest.raises(ValueError):
        forward(net, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        region_affine_map(net, np.ones(3, int))
