"""ECDF dominance and cut rates of offsets across seeds, checkpoints and reference batches.

Trains matched [32, 32, 32] pairs and writes one CSV row per (seed, epoch,
reference batch, layer). Batches are resampled at each checkpoint.

    python scripts/offset_diagnostics.py --out results/offsets
"""
import argparse
import os

import numpy as np

from bnpartition import io
from bnpartition.diagnostics import QUANTILES
from bnpartition.experiments import offset_trials, train_pair


def run(datasets, widths, seeds, epochs, n_batches, out):
    ckpts = sorted({0, epochs // 2, epochs})
    man = io.make_manifest("offset-diagnostics", {"datasets": datasets, "widths": widths, "seeds": seeds,
                                                   "epochs": epochs, "batches": n_batches})
    rows = []
    for name in datasets:
        for seed in seeds:
            pair = train_pair(name, widths, seed, epochs)
            for e in ckpts:
                nb = pair.nobn.checkpoints.get(e)
                bn = pair.bn.checkpoints.get(e)
                if nb is None:
                    continue
                for r in offset_trials(nb, bn, pair.bn.train, seed, e, n_batches):
                    rows.append({"dataset": name, **r})
            print(f"{name} seed {seed} done")
    header = list(rows[0])
    path = os.path.join(out, "offset_trials.csv")
    io.write_csv(path, header, [[r[k] for k in header] for r in rows], man["hash"])
    io.write_manifest(os.path.join(out, "manifest.json"), man, [path])
    final = [r for r in rows if r["epoch"] == epochs]
    print(f"epoch {epochs}: D+ > 0 in {np.mean([r['d_plus'] > 0 for r in final]):.3f} of layer trials")
    for q in QUANTILES:
        ok = np.mean([r[f"rate_bn_q{q:.2f}"] >= r[f"rate_nobn_q{q:.2f}"] for r in final])
        print(f"  q={q:.2f}: BN cut rate >= non-BN in {ok:.3f}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--datasets", default="two-moons,gauss-quantiles")
    p.add_argument("--widths", default="32,32,32")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batches", type=int, default=30)
    p.add_argument("--out", required=True)
    a = p.parse_args()
    run(a.datasets.split(","), tuple(int(w) for w in a.widths.split(",")), list(range(a.seeds)), a.epochs,
        a.batches, a.out)
