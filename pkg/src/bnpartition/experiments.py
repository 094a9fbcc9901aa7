"""Matched BN / non-BN pipelines behind the CLI recipes and the acceptance suite.

Every trial is fully determined by (dataset, widths, seed). Reference batches
are drawn from the training split with seed ``1000 * seed + k`` for the k-th
batch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .batchnorm import freeze_batch
from .cpa import EVAL, NOBN, BreakpointHit
from .datasets import WINDOWS, make_dataset, sample_reference_batch
from .diagnostics import QUANTILES, cut_rate_at_quantile, ecdf_compare, offsets_cdf_dataset
from .hyperplanes import Window, layer_offsets, representation_centroid
from .regions import RankDeficient, WindowNotContained, enumerate_regions, pullback_check
from .trainer import TrainConfig, train_from_config

REF_BATCH = 64
TABLE1_WIDTHS = (32, 64, 128)
TABLE2_CONFIGS = (("two-moons", (64, 64, 64)), ("random-uniform", (32, 32, 32, 32, 32)))


def batch_seed(seed: int, k: int) -> int:
    return 1000 * seed + k


@dataclass
class TrainedPair:
    dataset: object
    nobn: object   # TrainResult
    bn: object


def train_pair(name: str, widths, seed: int, epochs: int = 100, lr: float = 1e-4, batch_size: int = 64,
               n: int = 200) -> TrainedPair:
    data = make_dataset(name, n=n, seed=seed)
    common = dict(widths=tuple(widths), epochs=epochs, lr=lr, batch_size=batch_size, seed=seed,
                  checkpoint_epochs=(0, epochs))
    return TrainedPair(data,
                       train_from_config(data, TrainConfig(use_bn=False, **common)),
                       train_from_config(data, TrainConfig(use_bn=True, **common)))


def window_for(name: str) -> Window:
    c, r = WINDOWS[name]
    return Window(c, r)


def count_pair(pair: TrainedPair, epoch: int, seed: int, threads: int = 1, k: int = 0) -> dict:
    """Exact window counts of the non-BN net and the batch-conditional BN net."""
    win = window_for(pair.dataset.name)
    batch = sample_reference_batch(pair.bn.train, REF_BATCH, batch_seed(seed, k))
    bn_net = pair.bn.checkpoints[epoch]
    frozen = freeze_batch(bn_net, batch)
    cells_nobn = enumerate_regions(pair.nobn.checkpoints[epoch], NOBN, win, threads)
    cells_bn = enumerate_regions(bn_net, frozen, win, threads)
    return {"nobn": len(cells_nobn), "bn": len(cells_bn), "batch_id": frozen.batch_id,
            "degenerate": cells_nobn.degenerate_splits + cells_bn.degenerate_splits}


def count_table(configs, seeds, epochs: int = 100, threads: int = 1, log=None) -> list:
    """Rows ``(dataset, widths, seed, nobn, bn, batch_id)`` for every config and seed."""
    rows = []
    for name, widths in configs:
        for seed in seeds:
            pair = train_pair(name, widths, seed, epochs)
            c = count_pair(pair, epochs, seed, threads)
            rows.append({"dataset": name, "widths": tuple(widths), "seed": seed, "nobn": c["nobn"], "bn": c["bn"],
                         "batch_id": c["batch_id"]})
            if log:
                log(f"{name} {widths} seed {seed}: non-BN {c['nobn']} BN {c['bn']}")
    return rows


def summarize_counts(rows) -> list:
    out = []
    keys = []
    for r in rows:
        k = (r["dataset"], r["widths"])
        if k not in keys:
            keys.append(k)
    for name, widths in keys:
        sel = [r for r in rows if (r["dataset"], r["widths"]) == (name, widths)]
        a = np.array([r["nobn"] for r in sel], float)
        b = np.array([r["bn"] for r in sel], float)
        out.append({"dataset": name, "widths": widths, "n_seeds": len(sel),
                    "nobn_mean": a.mean(), "nobn_std": a.std(ddof=1) if len(a) > 1 else 0.0,
                    "bn_mean": b.mean(), "bn_std": b.std(ddof=1) if len(b) > 1 else 0.0,
                    "ratio": b.mean() / a.mean()})
    return out


# --- offset diagnostics ----------------------------------------------------------

def offset_trials(nb, bn, pool, seed: int, epoch: int, n_batches: int, quantiles=QUANTILES) -> list:
    """One row per (reference batch, layer) with D+, W1, area and cut rates.

    D+ compares batch-conditional BN offsets (bias-free form at the batch
    centroid) with non-BN offsets at the same batch's representation centroid.
    Cut rates compare inference-mode BN offsets with non-BN offsets, both at the
    batch's representation centroid; radii are quantiles of the non-BN offsets.
    Reference batches are drawn from the dataset ``pool``.
    """
    layers = range(1, len(nb.blocks) + 1)
    rows = []
    for k in range(n_batches):
        batch = sample_reference_batch(pool, REF_BATCH, batch_seed(seed, k))
        frozen = freeze_batch(bn, batch)
        base = offsets_cdf_dataset(nb, batch, layers, "baseline")
        bnf = offsets_cdf_dataset(bn, batch, layers, "bn_frozen", frozen=frozen)
        for l in layers:
            run = np.array([r.delta for r in layer_offsets(
                bn, l, "bn_running", center=representation_centroid(bn, batch, l, EVAL))])
            s = ecdf_compare(bnf[l], base[l])
            row = {"seed": seed, "epoch": epoch, "batch_id": frozen.batch_id, "layer": l,
                   "d_plus": s.d_plus, "w1": s.w1, "area": s.area}
            for q in quantiles:
                row[f"rate_bn_q{q:.2f}"] = cut_rate_at_quantile(run, q, base[l])
                row[f"rate_nobn_q{q:.2f}"] = cut_rate_at_quantile(base[l], q, base[l])
            rows.append(row)
    return rows


# --- pullback -------------------------------------------------------------------

def retained_pullbacks(net, mode, layer: int, anchors, n_keep: int = 20, r0: float = 1.0,
                       max_halvings: int = 40, **kw) -> dict:
    """Run pullback checks at successive anchors until ``n_keep`` windows are retained.

    The representation-space radius starts at ``r0`` and is halved until the
    window has enough support inside the parent region.
    """
    reports, rank_deficient, skipped = [], 0, 0
    for x in anchors:
        if len(reports) >= n_keep:
            break
        r = r0
        for _ in range(max_halvings):
            try:
                reports.append(pullback_check(net, mode, layer, x, r, **kw))
                break
            except WindowNotContained:
                r /= 2
            except RankDeficient:
                rank_deficient += 1
                break
            except BreakpointHit:
                skipped += 1
                break
        else:
            skipped += 1
    return {"reports": reports, "rank_deficient": rank_deficient, "skipped": skipped}
