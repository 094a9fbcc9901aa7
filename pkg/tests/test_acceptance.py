"""Acceptance criteria 1-9, one test each.

Every test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line straight to the
terminal (also under output capture) before asserting. Trained networks are
cached per session, so the criteria that share checkpoints pay for training
once.
"""
import filecmp
import os
import time
from functools import lru_cache

import numpy as np
import pytest

from bnpartition import polygon as pg
from bnpartition.arrangement import generate_valid_arrangement, formula_count
from bnpartition.batchnorm import batch_stats, bn_train_transform, freeze_batch
from bnpartition.cli import main
from bnpartition.cpa import NOBN
from bnpartition.datasets import WINDOWS, make_dataset, sample_reference_batch
from bnpartition.diagnostics import QUANTILES, bias_shift_test, parent_region_conditioning
from bnpartition.experiments import (REF_BATCH, TABLE1_WIDTHS, TABLE2_CONFIGS, batch_seed, offset_trials,
                                     retained_pullbacks, train_pair, window_for)
from bnpartition.hyperplanes import Hyperplane, Window, cut_status, layer_hyperplanes, through_centroid_residual, \
    window_cut
from bnpartition.regions import enumerate_arrangement, enumerate_regions, verify_enumeration
from bnpartition.trainer import BN_TRAIN, loss_and_grad, parameter_names, parameters, with_bias_shift

from conftest import fd_check, random_net

DATASETS = tuple(WINDOWS)
TABLE1_SEEDS = range(10)
TABLE2_SEEDS = range(5)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return emit


# --- shared trained pairs and enumerations ---------------------------------------

@lru_cache(maxsize=None)
def pair(name, widths, seed):
    return train_pair(name, widths, seed)


@lru_cache(maxsize=None)
def counted(name, widths, seed):
    """Non-BN cells, batch-conditional BN cells and the frozen batch at epoch 100."""
    p = pair(name, widths, seed)
    win = window_for(name)
    bn_net = p.bn.checkpoints[100]
    frozen = freeze_batch(bn_net, sample_reference_batch(p.bn.train, REF_BATCH, batch_seed(seed, 0)))
    return (enumerate_regions(p.nobn.checkpoints[100], NOBN, win),
            enumerate_regions(bn_net, frozen, win), frozen)


def table1_grid():
    return [(name, (w,), s) for name in DATASETS for w in TABLE1_WIDTHS for s in TABLE1_SEEDS]


def table2_grid():
    return [(name, widths, s) for name, widths in TABLE2_CONFIGS for s in TABLE2_SEEDS]


# --- 1 ----------------------------------------------------------------------------

def test_criterion_1_formula_matches_enumeration(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    win = Window([0.0, 0.0], 1.0)
    n, mismatches, invalid = 0, 0, 0
    for i in range(240):
        if i % 2 == 0:
            kind = ("simple", int(rng.integers(1, 13)))
        else:
            kind = ("parallel", [int(m) for m in rng.integers(1, 5, size=int(rng.integers(1, 5)))])
        fams, rep = generate_valid_arrangement(kind, win, int(rng.integers(2 ** 31)))
        invalid += not rep.overall_valid
        mismatches += len(enumerate_arrangement([l for f in fams for l in f], win)) != formula_count(fams)
        n += 1
    dt = time.perf_counter() - t0
    ok = report(1, n >= 200 and mismatches == 0 and invalid == 0 and dt < 60,
                f"{n} arrangements, {mismatches} mismatches, {invalid} invalid, {dt:.1f}s")
    assert ok


# --- 2 ----------------------------------------------------------------------------

def _bn_checkpoints():
    """Every BN checkpoint (epochs 0 and 100) of seed 0 in the count experiments, with its reference batch."""
    out = []
    for name, widths, seed in [(n, (w,), 0) for n in DATASETS for w in TABLE1_WIDTHS] + \
            [(n, w, 0) for n, w in TABLE2_CONFIGS]:
        p = pair(name, widths, seed)
        batch = sample_reference_batch(p.bn.train, REF_BATCH, batch_seed(seed, 0))
        for e in (0, 100):
            out.append((p.bn.checkpoints[e], batch))
    return out


def test_criterion_2_exact_geometry_identities(report):
    ckpts = _bn_checkpoints()
    # (a) batch mean of the pre-activation is the pre-activation of the centroid
    resid = max(through_centroid_residual(net, freeze_batch(net, batch)) for net, batch in ckpts)

    # (b) bn_frozen hyperplanes and offsets ignore the raw bias
    shift = 0.0
    for net, batch in ckpts:
        fz = freeze_batch(net, batch)
        for layer in range(1, len(net.blocks) + 1):
            base = layer_hyperplanes(net, layer, fz)
            for c in (0.1, -0.1, 1.0, -1.0, 10.0, -10.0):
                shifted = with_bias_shift(net, layer, c)
                moved = layer_hyperplanes(shifted, layer, freeze_batch(shifted, batch))
                shift = max(shift, max(abs(h0.c - h1.c) for (_, h0), (_, h1) in zip(base, moved)))
                shift = max(shift, float(bias_shift_test(net, batch, layer, c).bn_change.max()))

    # (c) l-infinity criterion against clipping the window square
    rng = np.random.default_rng(7)
    disagree = checked = 0
    while checked < 10_000:
        h = Hyperplane(rng.normal(size=2), rng.normal(0, 2))
        win = Window(rng.normal(size=2), rng.uniform(0.05, 3))
        if cut_status(h, win, 1e-12) == "boundary":
            continue
        sq = pg.box(win.center, win.r)
        lo, hi = pg.clip(sq, h.w, h.c, snap=0.0), pg.clip(sq, -h.w, -h.c, snap=0.0)
        oracle = lo is not None and hi is not None and pg.area(lo) > 0 and pg.area(hi) > 0
        disagree += window_cut(h, win) != oracle
        checked += 1

    # (d) standardized batch moments, on random batches and on real pre-activations
    moment = 0.0
    batches = [rng.normal(rng.normal(0, 5), rng.uniform(0.01, 10), size=(64, 16)) for _ in range(50)]
    for net, batch in ckpts[:6]:
        Z = batch @ net.blocks[0].linear.W.T + net.blocks[0].linear.b
        batches.append(Z)
    for Z in batches:
        st = batch_stats(Z)
        g, b = rng.normal(size=Z.shape[1]), rng.normal(size=Z.shape[1])
        out = bn_train_transform(Z, st, g, b, 1e-5)
        moment = max(moment, float(np.abs(out.mean(0) - b).max()),
                     float(np.abs(out.var(0) - g ** 2 * st.var / (st.var + 1e-5)).max()))

    ok = report(2, resid <= 1e-10 and shift <= 1e-12 and disagree == 0 and moment <= 1e-10,
                f"(a) residual {resid:.2e} over {len(ckpts)} checkpoints; (b) max bias-shift change {shift:.2e}; "
                f"(c) {disagree}/{checked} disagreements; (d) moment error {moment:.2e}")
    assert ok


# --- 3 ----------------------------------------------------------------------------

def test_criterion_3_gradients(report):
    t0 = time.perf_counter()
    data = make_dataset("gauss-quantiles", 64, 0)
    errs, skipped = {}, {}
    for mode, bn in ((NOBN, False), (BN_TRAIN, True)):
        net = random_net(11, widths=(8, 8), bn=bn, out_dim=5)
        errs[mode], skipped[mode] = fd_check(net, data.X, data.y, mode, 50, seed=3, return_skipped=True)
    net = random_net(12, widths=(8, 8), bn=True, out_dim=5)
    _, grads, _ = loss_and_grad(net, data.X, data.y, BN_TRAIN)
    bias_grad = max(float(np.abs(g).max()) for n, g in zip(parameter_names(net), grads) if n in ("b1", "b2"))
    assert len(grads) == len(parameters(net))
    dt = time.perf_counter() - t0
    ok = report(3, max(errs.values()) < 1e-4 and bias_grad == 0.0,
                f"FD rel. error nobn {errs[NOBN]:.1e}, bn_train {errs[BN_TRAIN]:.1e} "
                f"(50 coordinates each, {skipped[NOBN]}/{skipped[BN_TRAIN]} kink-crossing draws redrawn); "
                f"BN raw-bias gradient {bias_grad}; {dt:.1f}s")
    assert ok


# --- 4 ----------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_4_single_layer_counts(report):
    means = {}
    for name, widths, seed in table1_grid():
        nb, bn, _ = counted(name, widths, seed)
        means.setdefault((name, widths[0]), []).append((len(nb), len(bn)))
    bn_wins, growing, lines = True, 0, []
    for name in DATASETS:
        gaps = []
        for w in TABLE1_WIDTHS:
            a = np.array(means[(name, w)], float)
            m_nb, m_bn = a[:, 0].mean(), a[:, 1].mean()
            bn_wins &= m_bn > m_nb
            gaps.append(m_bn - m_nb)
            lines.append(f"{name} h={w}: {m_nb:.0f} vs {m_bn:.0f}")
        growing += bool(np.all(np.diff(gaps) > 0))
    h64 = [np.mean([c[0] for c in means[(n, 64)]]) for n in DATASETS]
    in_range = all(100 <= m <= 5000 for m in h64)
    ok = report(4, bn_wins and growing >= 2 and in_range,
                f"BN > non-BN everywhere: {bn_wins}; gap grows on {growing}/3 datasets; "
                f"non-BN h=64 means {[round(m) for m in h64]}; " + "; ".join(lines))
    assert ok


# --- 5 ----------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_5_deep_counts(report):
    lines, ok = [], True
    for name, widths in TABLE2_CONFIGS:
        c = np.array([[len(x) for x in counted(name, widths, s)[:2]] for s in TABLE2_SEEDS], float)
        ratio = c[:, 1].mean() / c[:, 0].mean()
        ok &= bool(np.all(c[:, 1] > c[:, 0])) and ratio > 2
        lines.append(f"{name} {list(widths)}: non-BN {c[:, 0].mean():.0f} BN {c[:, 1].mean():.0f} ratio {ratio:.2f}")
    assert report(5, ok, "; ".join(lines))


# --- 6 ----------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_6_pullback(report):
    windows = equal = rank2 = short = 0
    drop = []
    for name, widths, seed in table2_grid():
        p = pair(name, widths, seed)
        anchors = p.bn.train.X
        _, _, frozen = counted(name, widths, seed)
        for net, mode in ((p.nobn.checkpoints[100], NOBN), (p.bn.checkpoints[100], frozen)):
            for layer in range(2, len(widths) + 1):
                res = retained_pullbacks(net, mode, layer, anchors, n_keep=20)
                reps = res["reports"]
                short += len(reps) < 20
                windows += len(reps)
                equal += sum(r.counts_equal for r in reps)
                rank2 += sum(r.rank == 2 for r in reps)
                drop.append(parent_region_conditioning(net, mode, anchors, layer - 1).drop_rank_ratio)
    ok = report(6, short == 0 and equal == windows == rank2 and max(drop) == 0,
                f"{windows} retained windows, counts equal in {equal}, rank 2 in {rank2}, "
                f"{short} checkpoint-layers short of 20 windows, max drop-rank ratio {max(drop)}")
    assert ok


# --- 7 ----------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_7_offset_dominance(report):
    rows = []
    for name in ("two-moons", "gauss-quantiles"):
        for seed in range(5):
            p = pair(name, (32, 32, 32), seed)
            rows += offset_trials(p.nobn.checkpoints[100], p.bn.checkpoints[100], p.bn.train, seed, 100, 30)
    dplus = float(np.mean([r["d_plus"] > 0 for r in rows]))
    rates = {q: float(np.mean([r[f"rate_bn_q{q:.2f}"] >= r[f"rate_nobn_q{q:.2f}"] for r in rows]))
             for q in QUANTILES}
    ok = report(7, dplus >= 0.8 and min(rates.values()) >= 0.8,
                f"{len(rows)} (trial, layer) pairs; D+ > 0 in {dplus:.3f}; BN rate >= non-BN "
                + ", ".join(f"q={q:.2f}: {v:.3f}" for q, v in rates.items()))
    assert ok


# --- 8 ----------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_8_enumeration_self_consistency(report):
    worst_area = worst_affine = 0.0
    mismatches = n = 0
    for name, widths, seed in table1_grid() + table2_grid():
        p = pair(name, widths, seed)
        nb, bn, frozen = counted(name, widths, seed)
        for cells, net, mode in ((nb, p.nobn.checkpoints[100], NOBN), (bn, p.bn.checkpoints[100], frozen)):
            chk = verify_enumeration(cells, net, mode, seed=seed)
            worst_area = max(worst_area, chk.area_rel_error)
            worst_affine = max(worst_affine, chk.affine_max_error)
            mismatches += chk.pattern_mismatches
            n += 1
    # thread-count independence on one shallow and one deep BN enumeration
    same = True
    for name, widths, seed in (("two-moons", (128,), 0), ("random-uniform", (32,) * 5, 0)):
        p = pair(name, widths, seed)
        _, ref, frozen = counted(name, widths, seed)
        for t in (2, 4):
            got = enumerate_regions(p.bn.checkpoints[100], frozen, window_for(name), threads=t)
            same &= len(got) == len(ref) and all(
                a.pattern_hash == b.pattern_hash and np.array_equal(a.polygon, b.polygon) for a, b in zip(got, ref))
    ok = report(8, worst_area <= 1e-6 and mismatches == 0 and worst_affine <= 1e-8 and same,
                f"{n} enumerations: max area rel. error {worst_area:.1e}, pattern mismatches {mismatches}, "
                f"max affine error {worst_affine:.1e}; identical across 1/2/4 threads: {same}")
    assert ok


# --- 9 ----------------------------------------------------------------------------

def _pipeline(root, threads):
    run = os.path.join(root, "run")
    ck = os.path.join(run, "checkpoint_epoch005.json")
    batch = os.path.join(root, "batch.csv")
    steps = [
        ["train", "--dataset", "two-moons", "--widths", "16,16", "--bn", "--epochs", "5", "--lr", "0.01",
         "--seed", "3", "--out", run],
        ["freeze-batch", "--model", ck, "--batch-seed", "3000", "--out", batch],
        ["enumerate", "--model", ck, "--mode", f"frozen:{batch}", "--window", "0.5,0.5,1.5", "--threads",
         str(threads), "--csv", os.path.join(root, "enum", "regions.csv"),
         "--svg", os.path.join(root, "enum", "regions.svg")],
        ["offsets", "--model", ck, "--variant", "bn_frozen", "--batch", batch, "--radii", "0.1,0.5",
         "--csv", os.path.join(root, "offsets", "offsets.csv")],
        ["decision-map", "--model", ck, "--mode", "eval", "--window", "0.5,0.5,1.5", "--threads", str(threads),
         "--svg", os.path.join(root, "dmap", "decision.svg"), "--csv", os.path.join(root, "dmap", "decision.csv")],
        ["arrangement-selftest", "--seed", "1", "--instances", "20", "--csv", os.path.join(root, "arr", "a.csv")],
    ]
    for s in steps:
        assert main(s) == 0, s


def _files(root):
    return sorted(os.path.relpath(os.path.join(d, f), root) for d, _, fs in os.walk(root) for f in fs)


def test_criterion_9_determinism(report, tmp_path):
    a, b = str(tmp_path / "first"), str(tmp_path / "second" / "nested")
    _pipeline(a, threads=1)
    _pipeline(b, threads=3)
    fa, fb = _files(a), _files(b)
    differ = [f for f in fa if not filecmp.cmp(os.path.join(a, f), os.path.join(b, f), shallow=False)]
    ok = report(9, fa == fb and not differ and len(fa) >= 10,
                f"{len(fa)} files compared byte for byte across two output roots, differing: {differ or 'none'}")
    assert ok
