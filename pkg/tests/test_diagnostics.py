import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import wasserstein_distance

from bnpartition.batchnorm import freeze_batch
from bnpartition.cpa import NOBN
from bnpartition.diagnostics import (EmptySample, bias_offset_correlation, bias_shift_test, cut_rate_at_quantile,
                                     distance_histogram, ecdf, ecdf_compare, offsets_cdf_dataset,
                                     parent_region_conditioning, pearson, wasserstein1)
from bnpartition.cpa import network_from_arrays
from bnpartition.trainer import build_network

from conftest import random_net

samples = arrays(float, st.integers(1, 40), elements=st.floats(-50, 50))


def test_ecdf_examples():
    s = ecdf_compare([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert s.d_plus == 0 and s.w1 == 0 and s.area == 0
    s = ecdf_compare([0.0], [1.0])
    assert s.d_plus == 1 and s.w1 == 1
    # signed: b dominating a gives a nonpositive D+
    assert ecdf_compare([1.0], [0.0]).d_plus == 0.0
    with pytest.raises(EmptySample):
        ecdf([], 0.0)


@given(samples, arrays(float, 50, elements=st.floats(-60, 60)))
def test_ecdf_monotone_in_unit_range(s, r):
    r = np.sort(r)
    F = ecdf(s, r)
    assert np.all(np.diff(F) >= 0) and F.min() >= 0 and F.max() <= 1


@given(st.integers(1, 30), st.integers(0, 10 ** 6))
def test_w1_quantile_coupling(n, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=n), rng.normal(1, 2, size=n)
    assert wasserstein1(a, b) == pytest.approx(np.mean(np.abs(np.sort(a) - np.sort(b))), abs=1e-10)


@given(samples, samples, samples)
def test_w1_metric(a, b, c):
    ab = wasserstein1(a, b)
    assert ab == pytest.approx(wasserstein1(b, a), abs=1e-10)
    assert ab <= wasserstein1(a, c) + wasserstein1(c, b) + 1e-10
    assert ab == pytest.approx(wasserstein_distance(a, b), rel=1e-9, abs=1e-10)
    assert ecdf_compare(a, a).d_plus == 0


def test_cut_rate():
    ref = np.arange(1, 101, dtype=float)
    assert abs(cut_rate_at_quantile(ref, 0.25, ref) - 0.25) <= 1 / 100
    assert cut_rate_at_quantile(np.zeros(10), 0.1, ref) == 1.0
    with pytest.raises(ValueError):
        cut_rate_at_quantile(ref, 1.0, ref)


@given(samples, samples, st.floats(0.01, 0.98), st.floats(0.01, 0.98))
def test_cut_rate_monotone_in_q(off, ref, q1, q2):
    lo, hi = sorted((q1, q2))
    assert cut_rate_at_quantile(off, lo, ref) <= cut_rate_at_quantile(off, hi, ref)


def test_pearson():
    x = np.arange(10.0)
    assert pearson(x, 3 * x + 1) == pytest.approx(1.0)
    assert pearson(x, np.ones(10)) is None
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=200), rng.normal(size=200)
    ref = np.sum((x - x.mean()) * (y - y.mean())) / np.sqrt(np.sum((x - x.mean()) ** 2) * np.sum((y - y.mean()) ** 2))
    assert pearson(x, y) == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("c", [0.0, 0.1, -0.1, 1.0, -1.0, 10.0, -10.0])
def test_bias_shift(c):
    net = random_net(2, widths=(8, 8), bn=True)
    batch = np.random.default_rng(2).normal(size=(64, 2))
    for layer in (1, 2):
        res = bias_shift_test(net, batch, layer, c)
        assert res.bn_change.max() <= 1e-12
        if c == 0:
            assert res.baseline_change.max() == 0 and res.bn_change.max() == 0
        keep = ~res.sign_flip
        np.testing.assert_allclose(res.baseline_numerator_change[keep], abs(c), atol=1e-12)


def test_bias_offset_correlation():
    net = random_net(0, widths=(12, 12), bn=True)
    batch = np.random.default_rng(0).normal(size=(64, 2))
    out = bias_offset_correlation(net, batch)
    assert set(out) == {1, 2}
    assert "bn_frozen" in out[1]
    # layer with zero weights into it and bias-only offsets: |Delta| affine in |b| gives r = 1
    W = np.tile([1.0, 1.0], (6, 1))
    b = np.linspace(0.5, 3.0, 6)
    flat = network_from_arrays([W, np.ones((2, 6))], [b, np.zeros(2)])
    r = bias_offset_correlation(flat, np.zeros((4, 2)))[1]["baseline"]
    assert r == pytest.approx(1.0)


def test_offsets_cdf_and_distances():
    net = build_network(2, (8, 8), 2, use_bn=True, seed=0)
    X = np.random.default_rng(0).normal(size=(64, 2))
    off = offsets_cdf_dataset(net, X, [1, 2], "bn_frozen")
    assert all(np.all(v == 0) for v in off.values())
    d = distance_histogram(net, X, [1, 2], "frozen")
    assert all(np.allclose(v, 0, atol=1e-12) for v in d.values())
    base = offsets_cdf_dataset(net, X, [1, 2], "baseline")
    assert all(np.all(v >= 0) for v in base.values())


def test_conditioning():
    ident = network_from_arrays([np.eye(2) * 1.0, np.eye(2), np.eye(2)],
                                [np.full(2, 5.0), np.zeros(2), np.zeros(2)])
    s = parent_region_conditioning(ident, NOBN, np.zeros((5, 2)), 1)
    np.testing.assert_allclose(s.sigma_min, 1.0)
    assert s.drop_rank_ratio == 0.0
    dead = network_from_arrays([np.array([[1.0, 0.0], [0.0, 1.0]]), np.eye(2), np.eye(2)],
                               [np.array([5.0, -5.0]), np.ones(2), np.zeros(2)])
    s = parent_region_conditioning(dead, NOBN, np.zeros((5, 2)), 1)
    assert s.drop_rank_ratio == 1.0
    with pytest.raises(ValueError):
        parent_region_conditioning(random_net(0, in_dim=3), NOBN, np.zeros((1, 3)), 1)


@settings(max_examples=10)
@given(st.integers(0, 1000))
def test_trained_like_bn_offsets_left_of_baseline_at_init(seed):
    """At initialization BN offsets are all zero, so they dominate any baseline sample."""
    net = build_network(2, (16, 16), 2, use_bn=True, seed=seed)
    nb = build_network(2, (16, 16), 2, seed=seed)
    X = np.random.default_rng(seed).normal(size=(64, 2))
    fz = freeze_batch(net, X)
    bn = offsets_cdf_dataset(net, X, [1, 2], "bn_frozen", frozen=fz)
    base = offsets_cdf_dataset(nb, X, [1, 2], "baseline")
    for l in (1, 2):
        assert ecdf_compare(bn[l], base[l]).d_plus > 0
