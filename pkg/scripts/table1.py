"""Single-layer window counts, non-BN versus batch-conditional BN, at epoch 100.

    python scripts/table1.py --out results/table1 [--seeds 10] [--threads 4]
"""
import sys

from bnpartition.cli import main

if __name__ == "__main__":
    sys.exit(main(["--verbose", "reproduce-table1", *sys.argv[1:]]))
