"""1-D parallel engines over the message fabric.

Vertical: dimensions are partitioned, every rank holds every vector
restricted to its dimensions, and the per-vector score accumulation is the
communication step. A candidate whose global score reaches t must have a
partial score of at least t/p on some rank, so local pruning admits only
candidates at or above that local threshold before the union. Score
accumulation comes in three flavors: flat (candidate union, then one rooted
gather per home rank), hypercube (per-home merges folded over the cube), and
recursive (communicator halving with threshold halving). Vectors are
processed in blocks so one round of collectives carries a whole block's
traffic.

Horizontal: vectors are dealt out cyclically, every rank indexes only its
own vectors, and each step all-gathers the current vector of every rank.
Matching all p gathered vectors in rank order against the local index, and
indexing the local one only after it has been matched, keeps every unordered
pair emitted by exactly one rank.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import Dataset, MatchSet
from .msgfabric import (
    Communicator,
    NotPowerOfTwoError,
    hypercube_mnac_all,
    spawn_world,
)
from .partition import partition_dims_cyclic, partition_dims_first_fit
from .profiling import RankStats, RunProfile

PRUNING_MODES = ("none", "local")
ACCUMULATIONS = ("flat", "hypercube", "recursive")


@dataclass(frozen=True)
class VerticalOpts:
    pruning: str = "local"
    accumulation: str = "flat"
    block_size: int = 1

    def __post_init__(self) -> None:
        if self.pruning not in PRUNING_MODES:
            raise ValueError(f"unknown pruning mode {self.pruning!r}")
        if self.accumulation not in ACCUMULATIONS:
            raise ValueError(f"unknown accumulation {self.accumulation!r}")
        if self.block_size < 1:
            raise ValueError("block size must be at least 1")

    def label(self) -> str:
        tag = "localpruning" if self.pruning == "local" else "noopt"
        return f"{tag}-{self.accumulation}-bs{self.block_size}"


def compute_t_local(t: float, p: int) -> float:
    """Per-rank pruning threshold. A global match needs >= t/p somewhere."""
    if p < 1:
        raise ValueError("need at least one rank")
    return t / p


class _Posting:
    """Growable parallel arrays of (vector id, weight) for one dimension."""

    __slots__ = ("ids", "ws", "n")

    def __init__(self) -> None:
        self.ids = np.empty(8, dtype=np.int64)
        self.ws = np.empty(8, dtype=np.float64)
        self.n = 0

    def append(self, vid: int, w: float) -> None:
        if self.n == len(self.ids):
            self.ids = np.concatenate([self.ids, np.empty(len(self.ids), dtype=np.int64)])
            self.ws = np.concatenate([self.ws, np.empty(len(self.ws), dtype=np.float64)])
        self.ids[self.n] = vid
        self.ws[self.n] = w
        self.n += 1


class LocalIndex:
    """One rank's inverted index over its own dimensions, plus the score array.

    scan() accumulates the partial dot products of a vector's entries against
    the indexed postings of owned dimensions and returns the touched ids with
    their scores, clearing the array again. index() appends a vector's owned
    entries; callers decide when (always after the vector was matched).
    """

    def __init__(self, n: int, owner=None, part: int | None = None) -> None:
        self._owner = owner
        self._part = part
        self._post: dict[int, _Posting] = {}
        self._a = np.zeros(n, dtype=np.float64)

    def owns(self, d: int) -> bool:
        return self._owner is None or self._owner[d] == self._part

    def scan(self, entries, stats: RankStats) -> tuple[np.ndarray, np.ndarray]:
        a = self._a
        post = self._post
        mults = 0
        for d, w in entries:
            pl = post.get(d)
            if pl is None or pl.n == 0:
                continue
            k = pl.n
            mults += k
            a[pl.ids[:k]] += w * pl.ws[:k]
        stats.mult_count += mults
        touched = np.flatnonzero(a)
        vals = a[touched]
        a[touched] = 0.0
        return touched, vals

    def index(self, vid: int, entries) -> None:
        post = self._post
        for d, w in entries:
            if self._owner is not None and self._owner[d] != self._part:
                continue
            pl = post.get(d)
            if pl is None:
                pl = post[d] = _Posting()
            pl.append(vid, w)


@dataclass
class LocalScores:
    """A vector's per-rank partial scores and the candidate ids kept from them."""

    scores: dict[int, float]
    candidates: list[int]


def _union_sorted(u: list[int], v: list[int]) -> list[int]:
    out: list[int] = []
    i = j = 0
    nu, nv = len(u), len(v)
    while i < nu and j < nv:
        a, b = u[i], v[j]
        if a == b:
            out.append(a)
            i += 1
            j += 1
        elif a < b:
            out.append(a)
            i += 1
        else:
            out.append(b)
            j += 1
    out.extend(u[i:])
    out.extend(v[j:])
    return out


def _union_blocks(a: list[list[int]], b: list[list[int]]) -> list[list[int]]:
    return [_union_sorted(u, v) for u, v in zip(a, b)]


def _block_elements(block) -> int:
    return sum(len(x) for x in block)


def _merge_triples(a, b):
    # (id, score_sum, max_partial) lists sorted by id
    out = []
    i = j = 0
    na, nb = len(a), len(b)
    while i < na and j < nb:
        ya, yb = a[i][0], b[j][0]
        if ya == yb:
            sa, ma = a[i][1], a[i][2]
            sb, mb = b[j][1], b[j][2]
            out.append((ya, sa + sb, ma if ma >= mb else mb))
            i += 1
            j += 1
        elif ya < yb:
            out.append(a[i])
            i += 1
        else:
            out.append(b[j])
            j += 1
    out.extend(a[i:])
    out.extend(b[j:])
    return out


def _merge_triple_blocks(a, b):
    return [_merge_triples(u, v) for u, v in zip(a, b)]


def _flat_accumulate_block(comm: Communicator, aprime_block):
    """Sum per-rank partials for each item's candidates at their home ranks.

    Home of candidate y is y mod p. One rooted gather per home rank delivers
    the partials, which the root folds in ascending rank order. Returns, per
    item, {y: (summed score, max single-rank partial)} for this rank's homes.
    """
    p = comm.size
    out: list[dict[int, tuple[float, float]]] = [dict() for _ in aprime_block]
    buckets = [[[] for _ in aprime_block] for _ in range(p)]
    for pos, ap in enumerate(aprime_block):
        for yv in ap:
            buckets[yv[0] % p][pos].append(yv)
    for root in range(p):
        payload = buckets[root]
        got = comm.gather(payload, root, elements=_block_elements(payload))
        if got is not None:
            for pos in range(len(aprime_block)):
                acc = out[pos]
                for rank_payload in got:
                    for y, v in rank_payload[pos]:
                        prev = acc.get(y)
                        if prev is None:
                            acc[y] = (v, v)
                        else:
                            s, mx = prev
                            acc[y] = (s + v, v if v > mx else mx)
    return out


def _hypercube_accumulate_block(comm: Communicator, aprime_block):
    """Same contract as _flat_accumulate_block, folded over the hypercube."""
    p = comm.size
    if p & (p - 1):
        raise NotPowerOfTwoError(f"hypercube accumulation needs 2^k ranks, got {p}")
    out: list[dict[int, tuple[float, float]]] = [dict() for _ in aprime_block]
    buckets = [[[] for _ in aprime_block] for _ in range(p)]
    for pos, ap in enumerate(aprime_block):
        for y, v in ap:
            buckets[y % p][pos].append((y, v, v))
    for dest in range(p):
        merged = hypercube_mnac_all(
            comm, buckets[dest], _merge_triple_blocks, elements_of=_block_elements
        )
        if dest == comm.rank:
            for pos, lst in enumerate(merged):
                out[pos] = {y: (s, mx) for (y, s, mx) in lst}
    return out


def accumulate_scores_flat(local: LocalScores, comm: Communicator) -> list[tuple[int, float]]:
    """Accumulate one vector's scores: candidate union, then homed summation.

    Every rank contributes its nonzero partials for all globally known
    candidates; rank r returns the fully summed scores of candidates homed at
    r (home = id mod p), sorted by id. No thresholding happens here.
    """
    cg = comm.all_reduce([sorted(local.candidates)], _union_blocks, elements=len(local.candidates))
    ap = [(y, v) for y in cg[0] if (v := local.scores.get(y, 0.0)) > 0.0]
    homed = _flat_accumulate_block(comm, [ap])
    return [(y, homed[0][y][0]) for y in sorted(homed[0])]


def _merge_scores_rec_block(snaps, t_cur, comm, local_pruning, stats, collect_witness):
    """Recursive candidate generation and accumulation over halved communicators.

    Matches under the current communicator at threshold t are contained in
    the union of each half's matches at t/2, so the recursion finds child
    matches first, unions them into the candidate set, then accumulates full
    partials over the whole communicator and filters strictly above the
    current threshold. Without local pruning the child thresholds drop to 0
    and only the top level filters.

    Returns, per item, this rank's home slice as (id, score, max_partial)
    triples.
    """
    p = comm.size
    if p & (p - 1):
        raise NotPowerOfTwoError(f"recursive accumulation needs 2^k ranks, got {p}")
    if p == 1:
        out = []
        for snap in snaps:
            lst = [(y, v, v) for y, v in sorted(snap.items()) if v > t_cur]
            if local_pruning:
                stats.cand_total += len(lst)
                if len(lst) > stats.cand_max:
                    stats.cand_max = len(lst)
            out.append(lst)
        return out
    color = 0 if comm.rank < p // 2 else 1
    sub = comm.split(color, comm.rank)
    child_t = t_cur / 2.0 if local_pruning else 0.0
    child = _merge_scores_rec_block(snaps, child_t, sub, local_pruning, stats, False)
    cand_block = [[y for y, _, _ in lst] for lst in child]
    cg = comm.all_reduce(cand_block, _union_blocks, elements=_block_elements(cand_block))
    aprime_block = []
    for snap, cg_x in zip(snaps, cg):
        ap = [(y, v) for y in cg_x if (v := snap.get(y, 0.0)) > 0.0]
        stats.scores_communicated += len(ap)
        aprime_block.append(ap)
    homed = _flat_accumulate_block(comm, aprime_block)
    return [
        [(y, s, mx) for y, (s, mx) in sorted(acc.items()) if s > t_cur]
        for acc in homed
    ]


def merge_scores_rec(x_id: int, scores, t: float, comm: Communicator) -> list[tuple[int, float]]:
    """Recursive local pruning for one vector's dense local scores.

    Returns this rank's home slice of matches with score strictly above t.
    """
    snap = {y: float(v) for y, v in enumerate(scores) if v > 0.0}
    out = _merge_scores_rec_block([snap], t, comm, True, RankStats(), False)
    return [(y, s) for y, s, _ in out[0]]


def _exchange_and_filter(comm, items, t, opts, stats, witnesses):
    """Run one block's communication round and emit this rank's matches.

    items: (vector id, {candidate: partial score}, sorted candidate ids) per
    vector of the block; candidate ids are None in recursive mode, which
    generates its own candidates from the raw partials.
    """
    out = []
    if opts.accumulation == "recursive":
        snaps = [snap for _, snap, _ in items]
        per_item = _merge_scores_rec_block(
            snaps, t, comm, opts.pruning == "local", stats, True
        )
        for (xid, _, _), lst in zip(items, per_item):
            for y, s, mx in lst:
                out.append((y, xid, s))
                witnesses[(y, xid)] = mx
        return out
    cand_block = [cand for _, _, cand in items]
    cg = comm.all_reduce(cand_block, _union_blocks, elements=_block_elements(cand_block))
    aprime_block = []
    for (xid, snap, _), cg_x in zip(items, cg):
        ap = [(y, v) for y in cg_x if (v := snap.get(y, 0.0)) > 0.0]
        stats.scores_communicated += len(ap)
        aprime_block.append(ap)
    if opts.accumulation == "flat":
        homed = _flat_accumulate_block(comm, aprime_block)
    else:
        homed = _hypercube_accumulate_block(comm, aprime_block)
    for (xid, _, _), acc in zip(items, homed):
        for y in sorted(acc):
            s, mx = acc[y]
            if s >= t:
                out.append((y, xid, s))
                witnesses[(y, xid)] = mx
    return out


def _scan_item(lindex, xid, entries, t_local, opts, stats):
    touched, vals = lindex.scan(entries, stats)
    ids = touched.tolist()
    vs = vals.tolist()
    snap = dict(zip(ids, vs))
    if opts.accumulation == "recursive":
        cand = None
    elif opts.pruning == "local":
        cand = [y for y, v in zip(ids, vs) if v >= t_local]
        stats.cand_total += len(cand)
        if len(cand) > stats.cand_max:
            stats.cand_max = len(cand)
    else:
        cand = ids
    return (xid, snap, cand)


def par_find_matches_0_vert(
    xid: int,
    entries,
    lindex: LocalIndex,
    t: float,
    comm: Communicator,
    opts: VerticalOpts | None = None,
    stats: RankStats | None = None,
    witnesses: dict | None = None,
) -> list[tuple[int, float]]:
    """Match one vector across the communicator; returns this rank's slice.

    All ranks must call in lockstep for the same vector. The caller indexes
    the vector afterwards.
    """
    opts = opts if opts is not None else VerticalOpts()
    stats = stats if stats is not None else RankStats(rank=comm.rank)
    witnesses = witnesses if witnesses is not None else {}
    item = _scan_item(lindex, xid, entries, compute_t_local(t, comm.size), opts, stats)
    got = _exchange_and_filter(comm, [item], t, opts, stats, witnesses)
    return [(y, s) for y, _xid, s in got]


def par_all_pairs_0_vert(
    dataset: Dataset,
    t: float,
    opts: VerticalOpts,
    comm: Communicator,
    owner=None,
    stats: RankStats | None = None,
    witnesses: dict | None = None,
) -> list[tuple[int, int, float]]:
    """Rank program for the vertical pass; returns this rank's match slice."""
    p = comm.size
    if opts.accumulation in ("hypercube", "recursive") and p & (p - 1):
        raise NotPowerOfTwoError(f"{opts.accumulation} accumulation needs 2^k ranks")
    if owner is None:
        owner = partition_dims_first_fit(dataset, p).owner
    stats = stats if stats is not None else RankStats(rank=comm.rank)
    witnesses = witnesses if witnesses is not None else {}
    lindex = LocalIndex(dataset.n, owner, comm.rank)
    t_local = compute_t_local(t, p)
    matches: list[tuple[int, int, float]] = []
    vecs = dataset.vectors
    block = opts.block_size
    for b0 in range(0, dataset.n, block):
        items = []
        for x in vecs[b0 : b0 + block]:
            items.append(_scan_item(lindex, x.id, x.entries, t_local, opts, stats))
            lindex.index(x.id, x.entries)
        matches.extend(_exchange_and_filter(comm, items, t, opts, stats, witnesses))
    return matches


def par_all_pairs_0_horiz(
    dataset: Dataset,
    t: float,
    comm: Communicator,
    stats: RankStats | None = None,
) -> list[tuple[int, int, float]]:
    """Rank program for the horizontal pass; returns this rank's match slice."""
    stats = stats if stats is not None else RankStats(rank=comm.rank)
    p, r = comm.size, comm.rank
    local = [v for v in dataset.vectors if v.id % p == r]
    steps = comm.all_reduce(len(local), max, elements=1)
    lindex = LocalIndex(dataset.n)
    matches: list[tuple[int, int, float]] = []
    for s in range(steps):
        if s < len(local):
            x = local[s]
            payload = (x.id, list(x.entries))
            nelem = x.size
        else:
            payload = None
            nelem = 0
        xa = comm.all_gather(payload, elements=nelem)
        stats.gathered_elements += (p - 1) * nelem
        for proc in range(p):
            item = xa[proc]
            if item is None:
                continue
            xid, entries = item
            touched, vals = lindex.scan(entries, stats)
            for y, v in zip(touched.tolist(), vals.tolist()):
                if v >= t:
                    matches.append((y, xid, v))
            if proc == r:
                lindex.index(xid, entries)
    return matches


def horiz_comm_volume(profile: RunProfile) -> int:
    """Vector elements moved by the horizontal gathers; pads contribute zero."""
    return profile.total("gathered_elements")


def _finish_rank(comm, stats, started):
    c = comm.counters
    stats.comm_seconds = c.comm_seconds
    stats.work_seconds = (time.perf_counter() - started) - c.comm_seconds
    stats.comm_elements_sent = c.elements_sent
    stats.comm_elements_received = c.elements_received
    stats.collective_calls = c.collective_calls


def _merge_rank_results(results, label, p) -> tuple[MatchSet, RunProfile]:
    matches = MatchSet()
    witnesses: dict[tuple[int, int], float] = {}
    ranks = []
    for rank_matches, rank_witnesses, stats in results:
        for i, j, s in rank_matches:
            matches.add(i, j, s)
        witnesses.update(rank_witnesses)
        ranks.append(stats)
    return matches, RunProfile(algo=label, p=p, ranks=ranks, witnesses=witnesses)


def run_vertical(
    dataset: Dataset,
    t: float,
    p: int = 1,
    opts: VerticalOpts | None = None,
    scheduler: str = "threads",
    dim_strategy: str = "firstfit",
) -> tuple[MatchSet, RunProfile]:
    """Drive the vertical pass on p ranks and merge the slices."""
    opts = opts if opts is not None else VerticalOpts()
    if dim_strategy == "firstfit":
        part = partition_dims_first_fit(dataset, p)
    elif dim_strategy == "cyclic":
        part = partition_dims_cyclic(dataset, p)
    else:
        raise ValueError(f"unknown dimension distribution {dim_strategy!r}")
    owner = part.owner

    def program(comm: Communicator):
        stats = RankStats(rank=comm.rank)
        witnesses: dict[tuple[int, int], float] = {}
        started = time.perf_counter()
        matches = par_all_pairs_0_vert(dataset, t, opts, comm, owner, stats, witnesses)
        _finish_rank(comm, stats, started)
        return matches, witnesses, stats

    results = spawn_world(p, program, scheduler)
    return _merge_rank_results(results, f"vertical-{opts.label()}", p)


def run_horizontal(
    dataset: Dataset,
    t: float,
    p: int = 1,
    scheduler: str = "threads",
) -> tuple[MatchSet, RunProfile]:
    """Drive the horizontal pass on p ranks and merge the slices."""

    def program(comm: Communicator):
        stats = RankStats(rank=comm.rank)
        started = time.perf_counter()
        matches = par_all_pairs_0_horiz(dataset, t, comm, stats)
        _finish_rank(comm, stats, started)
        return matches, {}, stats

    results = spawn_world(p, program, scheduler)
    return _merge_rank_results(results, "horizontal", p)
