"""The sequential engine family.

One base loop (index-as-you-match) with toggleable optimizations:

- accumulator strategy: hash map, dense array, or dense array with a
  touched list that is zeroed selectively;
- partial indexing: only the suffix of a vector whose running upper bound
  reaches t is indexed, the prefix is kept aside and its contribution is
  added back when fixing candidate scores;
- minsize: candidates too small to ever reach t are pruned off the front of
  posting lists (requires normalized input and maxweight-ordered processing);
- remscore: once the maximum remaining score drops below t, no new
  candidates are admitted;
- upperbound: skip the partial-vector dot product when a cheap bound shows
  the candidate cannot reach t.

Every registered variant must produce the brute-force match set; the
optimizations only change how much work is done getting there.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .core import (
    Dataset,
    InvertedIndex,
    MatchSet,
    OpCounters,
    SparseVector,
    brute_force_all_pairs,
    dot_entries,
)
from .profiling import RankStats, RunProfile


class UnknownVariantError(KeyError):
    """Variant name not in the registry."""


HASH_MAP = "hash-map"
DENSE_ARRAY = "dense-array"
TOUCHED_LIST = "dense-array-with-touched-list"

_BASES = ("ap0", "ap1", "bruteforce")
_ACCUMULATORS = (HASH_MAP, DENSE_ARRAY, TOUCHED_LIST)


@dataclass(frozen=True)
class VariantConfig:
    base: str
    accumulator: str = HASH_MAP
    minsize: bool = False
    remscore: bool = False
    upperbound: bool = False

    def __post_init__(self) -> None:
        if self.base not in _BASES:
            raise ValueError(f"unknown base {self.base!r}")
        if self.accumulator not in _ACCUMULATORS:
            raise ValueError(f"unknown accumulator {self.accumulator!r}")
        if self.base == "bruteforce" and (self.minsize or self.remscore or self.upperbound):
            raise ValueError("bruteforce takes no optimizations")
        if self.upperbound and self.base != "ap1":
            raise ValueError("upperbound needs partial vectors (base ap1)")


VARIANTS: dict[str, VariantConfig] = {
    "all-pairs-0": VariantConfig("ap0"),
    "all-pairs-0-array": VariantConfig("ap0", DENSE_ARRAY),
    "all-pairs-0-array2": VariantConfig("ap0", TOUCHED_LIST),
    "all-pairs-0-remscore": VariantConfig("ap0", remscore=True),
    "all-pairs-0-minsize": VariantConfig("ap0", minsize=True),
    "all-pairs-1": VariantConfig("ap1"),
    "all-pairs-1-array": VariantConfig("ap1", DENSE_ARRAY),
    "all-pairs-1-remscore": VariantConfig("ap1", remscore=True),
    "all-pairs-1-upperbound": VariantConfig("ap1", upperbound=True),
    "all-pairs-1-minsize": VariantConfig("ap1", minsize=True),
    "all-pairs-1-remscore-minsize": VariantConfig("ap1", remscore=True, minsize=True),
    "all-pairs-2": VariantConfig("ap1", minsize=True, remscore=True, upperbound=True),
    "all-pairs-bruteforce": VariantConfig("bruteforce"),
}


class HashAccumulator:
    """Candidate scores in a plain dict."""

    strategy = HASH_MAP

    def __init__(self, n: int) -> None:
        self.scores: dict[int, float] = {}

    def add(self, y: int, delta: float) -> None:
        self.scores[y] = self.scores.get(y, 0.0) + delta

    def nonzero(self, y: int) -> bool:
        return y in self.scores

    def nonzero_items(self) -> list[tuple[int, float]]:
        return [(y, s) for y, s in self.scores.items() if s != 0.0]

    def reset(self) -> None:
        self.scores = {}


class ArrayAccumulator:
    """Dense score array of length n, fully re-zeroed after each vector."""

    strategy = DENSE_ARRAY

    def __init__(self, n: int) -> None:
        self.n = n
        self.scores = [0.0] * n

    def add(self, y: int, delta: float) -> None:
        self.scores[y] += delta

    def nonzero(self, y: int) -> bool:
        return self.scores[y] != 0.0

    def nonzero_items(self) -> list[tuple[int, float]]:
        a = self.scores
        return [(y, a[y]) for y in range(self.n) if a[y] != 0.0]

    def reset(self) -> None:
        self.scores = [0.0] * self.n


class TouchedArrayAccumulator:
    """Dense score array plus a list of written cells; reset zeroes only those."""

    strategy = TOUCHED_LIST

    def __init__(self, n: int) -> None:
        self.scores = [0.0] * n
        self.touched: list[int] = []

    def add(self, y: int, delta: float) -> None:
        if self.scores[y] == 0.0:
            self.touched.append(y)
        self.scores[y] += delta

    def nonzero(self, y: int) -> bool:
        return self.scores[y] != 0.0

    def nonzero_items(self) -> list[tuple[int, float]]:
        a = self.scores
        return [(y, a[y]) for y in self.touched if a[y] != 0.0]

    def reset(self) -> None:
        for y in self.touched:
            self.scores[y] = 0.0
        self.touched = []


def make_accumulator(strategy: str, n: int):
    if strategy == HASH_MAP:
        return HashAccumulator(n)
    if strategy == DENSE_ARRAY:
        return ArrayAccumulator(n)
    if strategy == TOUCHED_LIST:
        return TouchedArrayAccumulator(n)
    raise ValueError(f"unknown accumulator {strategy!r}")


class PartialVectorStore:
    """Unindexed vector prefixes, keyed by vector id.

    For each vector the indexed suffix plus the stored prefix reconstruct the
    original entries exactly; max weights of the prefixes are cached for the
    upperbound test.
    """

    def __init__(self) -> None:
        self._parts: dict[int, tuple[tuple[tuple[int, float], ...], float]] = {}

    def put(self, vid: int, entries: list[tuple[int, float]]) -> None:
        ordered = tuple(sorted(entries))
        mw = max((w for _, w in ordered), default=0.0)
        self._parts[vid] = (ordered, mw)

    def entries(self, vid: int) -> tuple[tuple[int, float], ...]:
        return self._parts[vid][0]

    def maxweight(self, vid: int) -> float:
        return self._parts[vid][1]

    def __contains__(self, vid: int) -> bool:
        return vid in self._parts


def minsize_prune(index: InvertedIndex, x: SparseVector, t: float, dataset: Dataset) -> None:
    """Advance the front of x's posting lists past candidates that are too small.

    A candidate y of size |y| can score at most maxweight(x) * |y| against x
    on normalized data, so anything with |y| < t / maxweight(x) is dead for x
    and, because vectors are processed in decreasing maxweight order, for
    every later vector too. The front pointer never retreats.
    """
    mw = x.maxweight()
    if mw <= 0.0:
        return
    minsize = t / mw
    vecs = dataset.vectors
    for d, _ in x.entries:
        lst = index.postings[d]
        front = index.pruned_front[d]
        while front < len(lst) and vecs[lst[front][0]].size < minsize:
            front += 1
        index.pruned_front[d] = front


def remscore_guard(x: SparseVector, dataset: Dataset, t: float) -> list[bool]:
    """Per-entry schedule: may this entry still admit new candidates?

    The guard starts at the full upper bound sum(x[i] * maxweight_i) and loses
    each entry's contribution after the entry is processed; it allows new
    candidates only while the bound is still at least t.
    """
    mw = dataset.maxweight_per_dim()
    remscore = sum(w * mw[d] for d, w in x.entries)
    schedule = []
    for d, w in x.entries:
        schedule.append(remscore >= t)
        remscore -= w * mw[d]
    return schedule


def upperbound_skip(
    score: float,
    x: SparseVector,
    y_partial: tuple[tuple[int, float], ...],
    t: float,
) -> bool:
    """True when the candidate cannot reach t even with its unindexed prefix."""
    if not y_partial:
        return score < t
    mw_y = max(w for _, w in y_partial)
    bound = score + min(len(y_partial), x.size) * x.maxweight() * mw_y
    return bound < t


def _scan_index(
    entries,
    index: InvertedIndex,
    acc,
    counters: OpCounters,
    t: float,
    maxw_per_dim,
) -> None:
    """Accumulate x's partial scores against the index.

    With maxw_per_dim given, the remscore guard is live: after the bound drops
    below t only candidates already in the accumulator are updated.
    """
    postings = index.postings
    front = index.pruned_front
    guard = maxw_per_dim is not None
    if guard:
        remscore = sum(w * maxw_per_dim[d] for d, w in entries)
    add = acc.add
    for d, w in entries:
        lst = postings[d]
        start = front[d]
        if guard and remscore < t:
            nonzero = acc.nonzero
            for k in range(start, len(lst)):
                y, wy = lst[k]
                if nonzero(y):
                    add(y, w * wy)
                    counters.mults += 1
        else:
            counters.mults += len(lst) - start
            for k in range(start, len(lst)):
                y, wy = lst[k]
                add(y, w * wy)
        if guard:
            remscore -= w * maxw_per_dim[d]


def find_matches_0(
    x: SparseVector,
    index: InvertedIndex,
    t: float,
    acc,
    counters: OpCounters | None = None,
) -> list[tuple[int, float]]:
    """Score x against the index and return candidates at or above t.

    The accumulator is reset before returning, per its own strategy.
    """
    counters = counters if counters is not None else OpCounters()
    _scan_index(x.entries, index, acc, counters, t, None)
    out = [(y, s) for y, s in acc.nonzero_items() if s >= t]
    acc.reset()
    return out


def _maxweight_order(dataset: Dataset) -> list[int]:
    # Decreasing maxweight so the minsize bound only tightens as the run
    # proceeds; ties broken by id for determinism.
    return sorted(range(dataset.n), key=lambda i: (-dataset.vectors[i].maxweight(), i))


def _renumber(dataset: Dataset, order: list[int]) -> Dataset:
    vecs = tuple(
        SparseVector(new_id, dataset.vectors[old].entries)
        for new_id, old in enumerate(order)
    )
    return Dataset(vecs, dataset.m, dataset.normalized)


def _translate(matches: MatchSet, order: list[int]) -> MatchSet:
    out = MatchSet()
    for i, j, s in matches.triples():
        out.add(order[i], order[j], s)
    return out


def all_pairs_0(
    dataset: Dataset,
    t: float,
    cfg: VariantConfig,
    stats: RankStats | None = None,
) -> MatchSet:
    """Index-as-you-match over fully indexed vectors."""
    if cfg.base != "ap0":
        raise ValueError("all_pairs_0 requires base ap0")
    if t < 0:
        raise ValueError("threshold must be non-negative")
    if cfg.minsize:
        if not dataset.normalized:
            raise ValueError("minsize pruning requires a normalized dataset")
        order = _maxweight_order(dataset)
        matches = _all_pairs_0_loop(_renumber(dataset, order), t, cfg, stats)
        return _translate(matches, order)
    return _all_pairs_0_loop(dataset, t, cfg, stats)


def _all_pairs_0_loop(dataset, t, cfg, stats):
    stats = stats if stats is not None else RankStats()
    counters = OpCounters()
    index = InvertedIndex(dataset.m)
    acc = make_accumulator(cfg.accumulator, dataset.n)
    maxw = dataset.maxweight_per_dim() if cfg.remscore else None
    out = MatchSet()
    for x in dataset.vectors:
        if cfg.minsize:
            minsize_prune(index, x, t, dataset)
        _scan_index(x.entries, index, acc, counters, t, maxw)
        cand = 0
        for y, s in acc.nonzero_items():
            cand += 1
            if s >= t:
                out.add(y, x.id, s)
        acc.reset()
        stats.cand_total += cand
        if cand > stats.cand_max:
            stats.cand_max = cand
        index.add_vector(x)
    stats.mult_count += counters.mults
    return out


def all_pairs_1(
    dataset: Dataset,
    t: float,
    cfg: VariantConfig,
    stats: RankStats | None = None,
) -> MatchSet:
    """Partial indexing: only suffixes that can certify a match are indexed.

    Dimensions are ranked by decreasing posting size; while indexing a vector
    in that order a running bound b accumulates x[i] * maxweight_i, and
    entries are indexed only once b >= t. The skipped prefix is kept in a
    PartialVectorStore and added back when fixing candidate scores. Matching
    scans the entries sparsest-first, which keeps the remscore guard exact:
    any indexed entry of a candidate not yet admitted still lies ahead of the
    scan, inside the remaining-score bound.
    """
    if cfg.base != "ap1":
        raise ValueError("all_pairs_1 requires base ap1")
    if t < 0:
        raise ValueError("threshold must be non-negative")
    if cfg.minsize:
        if not dataset.normalized:
            raise ValueError("minsize pruning requires a normalized dataset")
        order = _maxweight_order(dataset)
        matches = _all_pairs_1_loop(_renumber(dataset, order), t, cfg, stats)
        return _translate(matches, order)
    return _all_pairs_1_loop(dataset, t, cfg, stats)


def _all_pairs_1_loop(dataset, t, cfg, stats):
    stats = stats if stats is not None else RankStats()
    counters = OpCounters()
    sizes = dataset.posting_sizes()
    dim_rank = [0] * dataset.m
    for pos, d in enumerate(sorted(range(dataset.m), key=lambda d: (-sizes[d], d))):
        dim_rank[d] = pos
    maxw = dataset.maxweight_per_dim()
    guard_maxw = maxw if cfg.remscore else None

    index = InvertedIndex(dataset.m)
    acc = make_accumulator(cfg.accumulator, dataset.n)
    partials = PartialVectorStore()
    out = MatchSet()
    for x in dataset.vectors:
        dense_first = sorted(x.entries, key=lambda e: dim_rank[e[0]])
        if cfg.minsize:
            minsize_prune(index, x, t, dataset)
        _scan_index(dense_first[::-1], index, acc, counters, t, guard_maxw)
        x_maxw = x.maxweight()
        cand = 0
        for y, s in acc.nonzero_items():
            cand += 1
            y_part = partials.entries(y)
            if y_part:
                if cfg.upperbound:
                    bound = s + min(len(y_part), x.size) * x_maxw * partials.maxweight(y)
                    if bound < t:
                        continue
                s += dot_entries(x.entries, y_part, counters)
            if s >= t:
                out.add(y, x.id, s)
        acc.reset()
        stats.cand_total += cand
        if cand > stats.cand_max:
            stats.cand_max = cand

        b = 0.0
        prefix = []
        for d, w in dense_first:
            b += w * maxw[d]
            if b >= t:
                index.add(d, x.id, w)
            else:
                prefix.append((d, w))
        partials.put(x.id, prefix)
    stats.mult_count += counters.mults
    return out


def run_variant(name: str, dataset: Dataset, t: float) -> tuple[MatchSet, RunProfile]:
    """Dispatch a registered variant and profile the run."""
    try:
        cfg = VARIANTS[name]
    except KeyError:
        raise UnknownVariantError(name) from None
    stats = RankStats()
    started = time.perf_counter()
    if cfg.base == "bruteforce":
        counters = OpCounters()
        matches = brute_force_all_pairs(dataset, t, counters)
        stats.mult_count = counters.mults
    elif cfg.base == "ap0":
        matches = all_pairs_0(dataset, t, cfg, stats)
    else:
        matches = all_pairs_1(dataset, t, cfg, stats)
    stats.work_seconds = time.perf_counter() - started
    profile = RunProfile(algo=name, p=1, ranks=[stats])
    return matches, profile
