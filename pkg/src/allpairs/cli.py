"""Command line interface: generate corpora, run engines, check against the oracle.

Subcommands:

- gen          write a seeded synthetic dataset
- run          run one engine, write matches and optionally a profile CSV
- oracle-check run an engine and brute force side by side; nonzero exit on mismatch
- profile      run a configuration sweep and emit one profile CSV row per run
"""

from __future__ import annotations

import argparse
import sys

from . import datasets, par1d, par2d, seqengine
from .core import MatchSet, brute_force_all_pairs, matchsets_equivalent
from .msgfabric import FabricError
from .partition import partition_dims_cyclic, partition_dims_first_fit
from .profiling import CSV_COLUMNS, RunProfile

SCORE_EPS = 1e-9


def format_matches(matches: MatchSet) -> str:
    """Canonical match text: one 'i j score' line per pair, sorted, 9 decimals."""
    return "".join(f"{i} {j} {s:.9f}\n" for i, j, s in matches.triples())


def _resolve_threshold(args, dataset) -> float:
    if args.auto_t:
        t = datasets.auto_threshold(dataset)
        print(f"auto-t: using threshold {t:.9f}", file=sys.stderr)
        return t
    if args.t is None:
        raise ValueError("need --t or --auto-t")
    return args.t


def _parse_mesh(text: str) -> tuple[int, int]:
    q_s, sep, r_s = text.lower().partition("x")
    if not sep:
        raise ValueError(f"mesh must look like QxR, got {text!r}")
    return int(q_s), int(r_s)


def _vertical_opts(args) -> par1d.VerticalOpts:
    return par1d.VerticalOpts(
        pruning=args.pruning,
        accumulation=args.accum,
        block_size=args.block_size,
    )


def _execute(args, dataset, t) -> tuple[MatchSet, RunProfile]:
    algo = args.algo
    if algo.startswith("seq:"):
        return seqengine.run_variant(algo[4:], dataset, t)
    if algo == "vert":
        if args.block_size * dataset.n > args.max_block_cells:
            raise ValueError(
                f"block size {args.block_size} needs {args.block_size * dataset.n} "
                f"score cells, over the --max-block-cells budget {args.max_block_cells}"
            )
        return par1d.run_vertical(
            dataset,
            t,
            p=args.p,
            opts=_vertical_opts(args),
            scheduler=args.scheduler,
            dim_strategy=args.dim_dist,
        )
    if algo == "horiz":
        return par1d.run_horizontal(dataset, t, p=args.p, scheduler=args.scheduler)
    if algo == "2d":
        q, r = _parse_mesh(args.mesh)
        return par2d.run_mesh(
            dataset, t, q, r, opts=_vertical_opts(args), scheduler=args.scheduler
        )
    raise ValueError(f"unknown algorithm {algo!r} (want seq:<variant>, vert, horiz or 2d)")


def _dump_partition(args, dataset) -> None:
    if args.algo == "2d":
        _, r = _parse_mesh(args.mesh)
        parts = r
    else:
        parts = args.p
    strategy = partition_dims_cyclic if args.dim_dist == "cyclic" else partition_dims_first_fit
    text = strategy(dataset, parts).dump()
    with open(args.dump_partition, "w", encoding="utf-8") as fh:
        fh.write(text)


def _write_profile(path, profiles: list[RunProfile]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for prof in profiles:
            fh.write(",".join(prof.csv_row()) + "\n")


def cmd_gen(args) -> int:
    dataset = datasets.gen_synthetic(args.n, args.m, args.avg_nnz, args.zipf, args.seed)
    datasets.save_dataset(dataset, args.out)
    print(f"wrote {dataset.n} vectors over {dataset.m} dimensions to {args.out}", file=sys.stderr)
    return 0


def cmd_run(args) -> int:
    dataset = datasets.load_dataset(args.dataset, normalize=not args.no_normalize)
    t = _resolve_threshold(args, dataset)
    if args.dump_partition:
        _dump_partition(args, dataset)
    matches, profile = _execute(args, dataset, t)
    text = format_matches(matches)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.profile_out:
        _write_profile(args.profile_out, [profile])
    print(f"{len(matches)} matches at t={t:.9f}", file=sys.stderr)
    return 0


def cmd_oracle_check(args) -> int:
    dataset = datasets.load_dataset(args.dataset, normalize=not args.no_normalize)
    t = _resolve_threshold(args, dataset)
    matches, _ = _execute(args, dataset, t)
    oracle = brute_force_all_pairs(dataset, t)
    if matchsets_equivalent(matches, oracle, t, SCORE_EPS):
        print(f"oracle-check OK: {args.algo} matches brute force ({len(oracle)} pairs)")
        return 0
    print(
        f"oracle-check FAILED: {args.algo} produced {len(matches)} pairs, "
        f"brute force {len(oracle)}",
        file=sys.stderr,
    )
    return 1


def cmd_profile(args) -> int:
    dataset = datasets.load_dataset(args.dataset, normalize=not args.no_normalize)
    t = _resolve_threshold(args, dataset)
    profiles = []
    for p in (int(x) for x in args.p_list.split(",")):
        for pruning in args.pruning_list.split(","):
            for accum in args.accum_list.split(","):
                for bs in (int(x) for x in args.block_size_list.split(",")):
                    if args.algo == "horiz":
                        _, prof = par1d.run_horizontal(dataset, t, p=p, scheduler=args.scheduler)
                    else:
                        opts = par1d.VerticalOpts(pruning=pruning, accumulation=accum, block_size=bs)
                        _, prof = par1d.run_vertical(
                            dataset, t, p=p, opts=opts, scheduler=args.scheduler,
                            dim_strategy=args.dim_dist,
                        )
                    profiles.append(prof)
                    if args.algo == "horiz":
                        break
                if args.algo == "horiz":
                    break
            if args.algo == "horiz":
                break
    if args.out:
        _write_profile(args.out, profiles)
    else:
        sys.stdout.write(",".join(CSV_COLUMNS) + "\n")
        for prof in profiles:
            sys.stdout.write(",".join(prof.csv_row()) + "\n")
    return 0


def _add_run_args(sp, with_output: bool) -> None:
    sp.add_argument("dataset", help="dataset file (dim:weight tokens, one vector per line)")
    sp.add_argument("--t", type=float, default=None, help="similarity threshold")
    sp.add_argument("--auto-t", action="store_true", help="pick t for about n*log2(n) matches")
    sp.add_argument("--no-normalize", action="store_true", help="keep raw weights")
    sp.add_argument("--scheduler", choices=["threads", "sequential"], default="threads")
    sp.add_argument("--dim-dist", choices=["firstfit", "cyclic"], default="firstfit",
                    help="dimension distribution for vertical runs")
    sp.add_argument("--dump-partition", metavar="PATH", default=None,
                    help="write the dimension partition as text before running")
    if with_output:
        sp.add_argument("--algo", required=True,
                        help="seq:<variant> | vert | horiz | 2d")
        sp.add_argument("--p", type=int, default=1, help="rank count for vert/horiz")
        sp.add_argument("--mesh", default="1x1", help="QxR mesh for --algo 2d")
        sp.add_argument("--block-size", type=int, default=1)
        sp.add_argument("--pruning", choices=["none", "local"], default="local")
        sp.add_argument("--accum", choices=["flat", "hypercube", "recursive"], default="flat")
        sp.add_argument("--max-block-cells", type=int, default=16_000_000,
                        help="memory budget: block_size * n score cells allowed per rank")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="allpairs",
        description="All-pairs similarity search over sparse vectors",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic dataset")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--m", type=int, required=True)
    gen.add_argument("--avg-nnz", type=int, required=True)
    gen.add_argument("--zipf", type=float, default=1.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen)

    run = sub.add_parser("run", help="run one engine")
    _add_run_args(run, with_output=True)
    run.add_argument("--out", default=None, help="matches file (default stdout)")
    run.add_argument("--profile-out", default=None, help="profile CSV path")
    run.set_defaults(func=cmd_run)

    check = sub.add_parser("oracle-check", help="compare an engine against brute force")
    _add_run_args(check, with_output=True)
    check.set_defaults(func=cmd_oracle_check)

    prof = sub.add_parser("profile", help="sweep configurations and emit profile rows")
    _add_run_args(prof, with_output=False)
    prof.add_argument("--algo", choices=["vert", "horiz"], default="vert")
    prof.add_argument("--p-list", default="2,4,8")
    prof.add_argument("--pruning-list", default="local")
    prof.add_argument("--accum-list", default="flat")
    prof.add_argument("--block-size-list", default="1")
    prof.add_argument("--out", default=None)
    prof.set_defaults(func=cmd_profile)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, FabricError, seqengine.UnknownVariantError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
