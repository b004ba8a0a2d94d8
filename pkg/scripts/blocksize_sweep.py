#!/usr/bin/env python3
"""Sweep the vertical engine's block size and report collective-call counts.

Bundling B vectors per communication round cuts the number of collectives
roughly by B while leaving the match set untouched; this prints the
trade-off table for one dataset.
"""

import argparse

from allpairs.cli import format_matches
from allpairs.datasets import auto_threshold, gen_synthetic
from allpairs.par1d import VerticalOpts, run_vertical


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--m", type=int, default=400)
    ap.add_argument("--avg-nnz", type=int, default=20)
    ap.add_argument("--zipf", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--p", type=int, default=4)
    ap.add_argument("--block-sizes", type=int, nargs="+", default=[1, 4, 8, 16, 32, 64])
    args = ap.parse_args()

    dataset = gen_synthetic(args.n, args.m, args.avg_nnz, args.zipf, args.seed)
    t = auto_threshold(dataset)
    print(f"# n={dataset.n} m={dataset.m} t={t:.6f} p={args.p}")
    print("block_size,collective_calls,comm_avg_s,work_avg_s,matches_digest")
    reference = None
    for bs in args.block_sizes:
        opts = VerticalOpts(block_size=bs)
        matches, profile = run_vertical(dataset, t, p=args.p, opts=opts, scheduler="sequential")
        digest = hash(format_matches(matches)) & 0xFFFFFFFF
        if reference is None:
            reference = digest
        marker = "" if digest == reference else "  # MISMATCH"
        print(
            f"{bs},{profile.ranks[0].collective_calls},"
            f"{profile.avg('comm_seconds'):.4f},{profile.avg('work_seconds'):.4f},"
            f"{digest:08x}{marker}"
        )


if __name__ == "__main__":
    main()
