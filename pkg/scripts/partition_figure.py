"""Train a matched pair and render partitions and decision maps as SVG.

    python scripts/partition_figure.py --dataset two-moons --widths 32 --out results/fig
"""
import argparse
import os

from bnpartition import io
from bnpartition.batchnorm import freeze_batch
from bnpartition.cpa import NOBN
from bnpartition.datasets import sample_reference_batch
from bnpartition.experiments import REF_BATCH, batch_seed, train_pair, window_for
from bnpartition.regions import decision_regions, enumerate_regions
from bnpartition.render import cells_svg, decision_svg

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dataset", default="two-moons")
    p.add_argument("--widths", default="32")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--out", required=True)
    a = p.parse_args()
    widths = tuple(int(w) for w in a.widths.split(","))
    pair = train_pair(a.dataset, widths, a.seed, a.epochs)
    win = window_for(a.dataset)
    bn = pair.bn.checkpoints[a.epochs]
    frozen = freeze_batch(bn, sample_reference_batch(pair.bn.train, REF_BATCH, batch_seed(a.seed, 0)))
    man = io.make_manifest("partition-figure", vars(a))
    for label, net, mode in (("nobn", pair.nobn.checkpoints[a.epochs], NOBN), ("bn", bn, frozen)):
        cells = enumerate_regions(net, mode, win)
        io.write_text(os.path.join(a.out, f"{label}_regions.svg"), cells_svg(cells, win, man["hash"]))
        io.write_text(os.path.join(a.out, f"{label}_decision.svg"),
                       decision_svg(decision_regions(cells), win, man["hash"]))
        print(f"{label}: {len(cells)} regions")
