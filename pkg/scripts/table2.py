"""Deep window counts on moons [64x3] and uniform [32x5].

    python scripts/table2.py --out results/table2 [--seeds 5]
"""
import sys

from bnpartition.cli import main

if __name__ == "__main__":
    sys.exit(main(["--verbose", "reproduce-table2", *sys.argv[1:]]))
