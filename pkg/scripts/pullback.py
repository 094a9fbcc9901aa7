"""Input-space versus intrinsic counts inside parent regions of trained deep nets.

    python scripts/pullback.py --dataset two-moons --widths 64,64,64 --seed 0
"""
import argparse

import numpy as np

from bnpartition.batchnorm import freeze_batch
from bnpartition.cpa import NOBN
from bnpartition.diagnostics import parent_region_conditioning
from bnpartition.experiments import REF_BATCH, batch_seed, retained_pullbacks, train_pair
from bnpartition.datasets import sample_reference_batch

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dataset", default="two-moons")
    p.add_argument("--widths", default="64,64,64")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--n", type=int, default=20)
    a = p.parse_args()
    widths = tuple(int(w) for w in a.widths.split(","))
    pair = train_pair(a.dataset, widths, a.seed, a.epochs)
    anchors = pair.bn.train.X
    frozen = freeze_batch(pair.bn.checkpoints[a.epochs],
                          sample_reference_batch(pair.bn.train, REF_BATCH, batch_seed(a.seed, 0)))
    for label, net, mode in (("non-BN", pair.nobn.checkpoints[a.epochs], NOBN),
                             ("BN", pair.bn.checkpoints[a.epochs], frozen)):
        for layer in range(2, len(widths) + 1):
            res = retained_pullbacks(net, mode, layer, anchors, n_keep=a.n)
            reps = res["reports"]
            cond = parent_region_conditioning(net, mode, anchors, layer - 1)
            print(f"{label:6s} layer {layer}: {len(reps)} windows, counts equal in "
                  f"{sum(r.counts_equal for r in reps)}, min Jaccard "
                  f"{min(r.jaccard_min for r in reps):.12f}, counts {[r.input_count for r in reps]}, "
                  f"drop-rank {cond.drop_rank_ratio}, median sigma_min {np.median(cond.sigma_min):.3g}")
