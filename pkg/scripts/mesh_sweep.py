#!/usr/bin/env python3
"""Compare vertical, horizontal, and 2-D mesh decompositions on one corpus.

All runs go through the deterministic fabric, so the interesting columns are
the communication volumes and candidate counts, not the wall-clock times.
"""

import argparse

from allpairs.core import brute_force_all_pairs, matchsets_equivalent
from allpairs.datasets import auto_threshold, gen_synthetic
from allpairs.par1d import VerticalOpts, run_horizontal, run_vertical
from allpairs.par2d import run_mesh
from allpairs.profiling import CSV_COLUMNS


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--m", type=int, default=128)
    ap.add_argument("--avg-nnz", type=int, default=12)
    ap.add_argument("--zipf", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--meshes", default="1x2,2x1,2x2,2x4,4x2,4x4")
    args = ap.parse_args()

    dataset = gen_synthetic(args.n, args.m, args.avg_nnz, args.zipf, args.seed)
    t = auto_threshold(dataset)
    oracle = brute_force_all_pairs(dataset, t)
    print(f"# n={dataset.n} m={dataset.m} t={t:.6f} oracle_matches={len(oracle)}")
    print(",".join(CSV_COLUMNS) + ",oracle_ok")

    def report(matches, profile):
        ok = matchsets_equivalent(matches, oracle, t)
        print(",".join(profile.csv_row()) + f",{ok}")

    for p in (2, 4, 8):
        report(*run_vertical(dataset, t, p=p, opts=VerticalOpts(), scheduler="sequential"))
        report(*run_horizontal(dataset, t, p=p, scheduler="sequential"))
    for mesh in args.meshes.split(","):
        q, r = (int(x) for x in mesh.split("x"))
        report(*run_mesh(dataset, t, q, r, scheduler="sequential"))


if __name__ == "__main__":
    main()
