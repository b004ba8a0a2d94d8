#!/usr/bin/env python3
"""Measure how local pruning cuts the number of scores communicated.

Generates a Zipf corpus, runs the vertical engine with and without local
pruning for several rank counts, and prints the profile table. The pruned
Scores column should drop by an order of magnitude at p=2 and grow back as
ranks are added.
"""

import argparse

from allpairs.datasets import auto_threshold, gen_synthetic
from allpairs.par1d import VerticalOpts, run_vertical
from allpairs.profiling import CSV_COLUMNS


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--m", type=int, default=1000)
    ap.add_argument("--avg-nnz", type=int, default=50)
    ap.add_argument("--zipf", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--p", type=int, nargs="+", default=[2, 4, 8])
    ap.add_argument("--block-size", type=int, default=16)
    args = ap.parse_args()

    dataset = gen_synthetic(args.n, args.m, args.avg_nnz, args.zipf, args.seed)
    t = auto_threshold(dataset, budget=dataset.n)
    print(f"# n={dataset.n} m={dataset.m} t={t:.6f}")
    print(",".join(CSV_COLUMNS))
    for p in args.p:
        for pruning in ("none", "local"):
            opts = VerticalOpts(pruning=pruning, block_size=args.block_size)
            _, profile = run_vertical(dataset, t, p=p, opts=opts, scheduler="sequential")
            print(",".join(profile.csv_row()))


if __name__ == "__main__":
    main()
