"""Core types for threshold similarity search over sparse vectors.

Vectors are sparse rows of a data matrix; the inverted index is its
transpose, one posting list per dimension. A match is a vector pair whose
dot product reaches the threshold t. The brute-force enumerator here is the
oracle that every smarter engine is checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence


class EmptyVectorError(ValueError):
    """Normalization was asked of a vector with no entries."""


class NegativeWeightError(ValueError):
    """Weights must be strictly positive."""


class DuplicateDimError(ValueError):
    """A vector listed the same dimension twice."""


class OpCounters:
    """Mutable tally of floating-point multiplications performed."""

    __slots__ = ("mults",)

    def __init__(self) -> None:
        self.mults = 0


Entry = tuple[int, float]


@dataclass(frozen=True)
class SparseVector:
    """An ordered list of (dimension, weight) pairs with positive weights."""

    id: int
    entries: tuple[Entry, ...]

    def __post_init__(self) -> None:
        last = -1
        for dim, weight in self.entries:
            if dim == last:
                raise DuplicateDimError(f"vector {self.id}: dimension {dim} repeated")
            if dim < last:
                raise ValueError(f"vector {self.id}: dimensions not ascending")
            if weight < 0:
                raise NegativeWeightError(
                    f"vector {self.id}: negative weight {weight} at dimension {dim}"
                )
            if weight == 0:
                raise ValueError(f"vector {self.id}: zero weight stored at dimension {dim}")
            last = dim

    @property
    def size(self) -> int:
        return len(self.entries)

    def norm(self) -> float:
        return math.sqrt(sum(w * w for _, w in self.entries))

    def maxweight(self) -> float:
        return max((w for _, w in self.entries), default=0.0)


def normalize(x: SparseVector) -> SparseVector:
    """Scale x to unit Euclidean norm."""
    if not x.entries:
        raise EmptyVectorError(f"vector {x.id} has no entries")
    nrm = x.norm()
    return SparseVector(x.id, tuple((d, w / nrm) for d, w in x.entries))


@dataclass(frozen=True)
class Dataset:
    """A fixed collection of sparse vectors with ids 0..n-1 over m dimensions."""

    vectors: tuple[SparseVector, ...]
    m: int
    normalized: bool = False

    def __post_init__(self) -> None:
        for i, v in enumerate(self.vectors):
            if v.id != i:
                raise ValueError(f"vector ids must be 0..n-1 with no gaps (got {v.id} at {i})")
            if v.entries and v.entries[-1][0] >= self.m:
                raise ValueError(f"vector {i}: dimension {v.entries[-1][0]} >= m={self.m}")
            if self.normalized and abs(v.norm() - 1.0) > 1e-9:
                raise ValueError(f"vector {i} is not unit-norm but dataset claims normalized")

    @property
    def n(self) -> int:
        return len(self.vectors)

    @property
    def size(self) -> int:
        """Total number of stored non-zero entries."""
        return sum(v.size for v in self.vectors)

    def posting_sizes(self) -> list[int]:
        """Number of vectors touching each dimension (|I_d| of the full index)."""
        sizes = [0] * self.m
        for v in self.vectors:
            for d, _ in v.entries:
                sizes[d] += 1
        return sizes

    def maxweight_per_dim(self) -> list[float]:
        """Largest weight stored in each dimension across the whole dataset."""
        mw = [0.0] * self.m
        for v in self.vectors:
            for d, w in v.entries:
                if w > mw[d]:
                    mw[d] = w
        return mw

    @classmethod
    def from_entries(
        cls,
        rows: Iterable[Sequence[Entry]],
        normalize_vectors: bool = True,
        m: int | None = None,
    ) -> "Dataset":
        vectors = []
        max_dim = -1
        for i, row in enumerate(rows):
            v = SparseVector(i, tuple(row))
            if normalize_vectors:
                v = normalize(v)
            if v.entries:
                max_dim = max(max_dim, v.entries[-1][0])
            vectors.append(v)
        if m is None:
            m = max_dim + 1
        elif m <= max_dim:
            raise ValueError(f"m={m} too small for dimension {max_dim}")
        return cls(tuple(vectors), m, normalized=normalize_vectors)


class InvertedIndex:
    """Per-dimension posting lists of (vector id, weight).

    Lists grow at the tail only (vector ids ascend with processing order) and
    are trimmed at the head logically, by advancing pruned_front, never by
    physical removal.
    """

    __slots__ = ("postings", "pruned_front")

    def __init__(self, m: int) -> None:
        self.postings: list[list[Entry]] = [[] for _ in range(m)]
        self.pruned_front: list[int] = [0] * m

    @property
    def m(self) -> int:
        return len(self.postings)

    def add(self, dim: int, vid: int, weight: float) -> None:
        self.postings[dim].append((vid, weight))

    def add_vector(self, v: SparseVector) -> None:
        for d, w in v.entries:
            self.postings[d].append((v.id, w))

    def posting_len(self, d: int) -> int:
        return len(self.postings[d])


def build_inverted_index(dataset: Dataset) -> InvertedIndex:
    """Transpose the dataset into posting lists, vector ids ascending."""
    index = InvertedIndex(dataset.m)
    for v in dataset.vectors:
        index.add_vector(v)
    return index


def dot_entries(
    xe: Sequence[Entry], ye: Sequence[Entry], counters: OpCounters | None = None
) -> float:
    """Dot product of two ordered entry lists via a two-pointer merge."""
    i = j = 0
    nx, ny = len(xe), len(ye)
    total = 0.0
    nmul = 0
    while i < nx and j < ny:
        dx = xe[i][0]
        dy = ye[j][0]
        if dx == dy:
            total += xe[i][1] * ye[j][1]
            nmul += 1
            i += 1
            j += 1
        elif dx < dy:
            i += 1
        else:
            j += 1
    if counters is not None:
        counters.mults += nmul
    return total


def dot(x: SparseVector, y: SparseVector, counters: OpCounters | None = None) -> float:
    return dot_entries(x.entries, y.entries, counters)


class MatchSet:
    """Canonical match output: one (i, j, score) per unordered pair, i < j."""

    __slots__ = ("_scores",)

    def __init__(self, triples: Iterable[tuple[int, int, float]] = ()) -> None:
        self._scores: dict[tuple[int, int], float] = {}
        for i, j, s in triples:
            self.add(i, j, s)

    def add(self, i: int, j: int, score: float) -> None:
        if i == j:
            raise ValueError(f"self-match for vector {i}")
        key = (i, j) if i < j else (j, i)
        if key in self._scores:
            raise ValueError(f"duplicate match for pair {key}")
        self._scores[key] = score

    def items(self) -> Iterable[tuple[tuple[int, int], float]]:
        return self._scores.items()

    def pairs(self) -> set[tuple[int, int]]:
        return set(self._scores)

    def score(self, i: int, j: int) -> float | None:
        key = (i, j) if i < j else (j, i)
        return self._scores.get(key)

    def triples(self) -> Iterator[tuple[int, int, float]]:
        for (i, j) in sorted(self._scores):
            yield i, j, self._scores[(i, j)]

    def __contains__(self, pair: tuple[int, int]) -> bool:
        i, j = pair
        return ((i, j) if i < j else (j, i)) in self._scores

    def __len__(self) -> int:
        return len(self._scores)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MatchSet):
            return NotImplemented
        return self._scores == other._scores

    def __repr__(self) -> str:
        return f"MatchSet({len(self._scores)} pairs)"


def matchsets_equivalent(
    got: MatchSet, want: MatchSet, t: float, eps: float = 1e-9
) -> bool:
    """Equality modulo the threshold band.

    Pairs whose score sits within eps of t are ignored on both sides (score
    accumulation order differs across engine configurations); every other
    pair must be present in both sets with scores agreeing within eps.
    """
    ga = {k: s for k, s in got.items() if abs(s - t) > eps}
    wa = {k: s for k, s in want.items() if abs(s - t) > eps}
    if ga.keys() != wa.keys():
        return False
    return all(abs(ga[k] - wa[k]) <= eps for k in ga)


def brute_force_all_pairs(
    dataset: Dataset, t: float, counters: OpCounters | None = None
) -> MatchSet:
    """Enumerate all n*(n-1)/2 pairs directly; no intermediate structures."""
    if t < 0:
        raise ValueError("threshold must be non-negative")
    out = MatchSet()
    vecs = dataset.vectors
    for j in range(len(vecs)):
        for i in range(j):
            s = dot_entries(vecs[i].entries, vecs[j].entries, counters)
            if s >= t:
                out.add(i, j, s)
    return out


def work_weight(posting_size: int) -> int:
    """Multiplication load attributed to a dimension of the given posting size."""
    return posting_size * (posting_size + 1) // 2


def dim_work_weight(index: InvertedIndex, d: int) -> int:
    return work_weight(index.posting_len(d))


def total_mult_count(index: InvertedIndex) -> int:
    """Multiplications an unpruned indexed pass performs: sum of C(|I_d|, 2)."""
    return sum(
        n_d * (n_d - 1) // 2 for n_d in (len(p) for p in index.postings)
    )
