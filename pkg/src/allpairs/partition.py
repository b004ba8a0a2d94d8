"""Data distribution strategies for the parallel engines.

Dimensions carry a quadratic load weight w[d] = |I_d|*(|I_d|+1)/2, since
matching scans each posting list once per touching vector. First-fit over
decreasing weights balances that load across parts; cyclic distribution is
kept only as the known-worse baseline. Vectors are always dealt out
cyclically. The 2-D checkerboard combines the two: vectors to mesh rows,
dimensions to mesh columns.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from .core import Dataset, work_weight


@dataclass(frozen=True)
class DimPartition:
    """dimension -> part owner map plus per-part load totals."""

    owner: tuple[int, ...]
    loads: tuple[int, ...]

    @property
    def parts(self) -> int:
        return len(self.loads)

    def dims_of(self, part: int) -> list[int]:
        return [d for d, o in enumerate(self.owner) if o == part]

    def dump(self) -> str:
        lines = []
        for part in range(self.parts):
            dims = " ".join(str(d) for d in self.dims_of(part))
            lines.append(f"part {part}: {dims}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class VecPartition:
    owner: tuple[int, ...]

    @property
    def parts(self) -> int:
        return max(self.owner, default=-1) + 1


def partition_dims_first_fit(dataset: Dataset, p: int) -> DimPartition:
    """Greedy decreasing-weight placement onto the least loaded part.

    Ties in posting size break toward the lower dimension id and ties in load
    toward the lower part id, so the result is deterministic.
    """
    if p < 1:
        raise ValueError("need at least one part")
    sizes = dataset.posting_sizes()
    order = sorted(range(dataset.m), key=lambda d: (-sizes[d], d))
    owner = [0] * dataset.m
    heap = [(0, part) for part in range(p)]
    heapq.heapify(heap)
    for d in order:
        load, part = heapq.heappop(heap)
        owner[d] = part
        heapq.heappush(heap, (load + work_weight(sizes[d]), part))
    loads = [0] * p
    for d, o in enumerate(owner):
        loads[o] += work_weight(sizes[d])
    return DimPartition(tuple(owner), tuple(loads))


def partition_dims_cyclic(dataset: Dataset, p: int) -> DimPartition:
    """Deal dimensions round-robin, ignoring load. Kept for comparison runs."""
    if p < 1:
        raise ValueError("need at least one part")
    sizes = dataset.posting_sizes()
    owner = [d % p for d in range(dataset.m)]
    loads = [0] * p
    for d, o in enumerate(owner):
        loads[o] += work_weight(sizes[d])
    return DimPartition(tuple(owner), tuple(loads))


def cyclic_vectors(n: int, p: int) -> VecPartition:
    if p < 1:
        raise ValueError("need at least one part")
    return VecPartition(tuple(i % p for i in range(n)))


@dataclass(frozen=True)
class BisectNode:
    """A node of the recursive dimension bisection tree."""

    dims: tuple[int, ...]
    children: tuple["BisectNode", "BisectNode"] | None = None

    def leaves(self) -> list["BisectNode"]:
        if self.children is None:
            return [self]
        left, right = self.children
        return left.leaves() + right.leaves()


def recursive_bisect_dims(dataset: Dataset, k: int) -> BisectNode:
    """Split the dimension set k times into halves of nearly equal count.

    Each split deals the node's dimensions, in decreasing load order,
    alternately to the two children, so counts differ by at most one and
    heavy dimensions spread evenly. Leaf index read as a k-bit binary string
    encodes the path from the root.
    """
    if k < 0:
        raise ValueError("levels must be non-negative")
    sizes = dataset.posting_sizes()

    def split(dims: tuple[int, ...], level: int) -> BisectNode:
        if level == 0:
            return BisectNode(dims)
        ordered = sorted(dims, key=lambda d: (-work_weight(sizes[d]), d))
        left = tuple(sorted(ordered[0::2]))
        right = tuple(sorted(ordered[1::2]))
        return BisectNode(dims, (split(left, level - 1), split(right, level - 1)))

    return split(tuple(range(dataset.m)), k)


@dataclass(frozen=True)
class MeshAssignment:
    """Checkerboard layout: vectors cycle over q rows, dimensions pack into r columns."""

    q: int
    r: int
    col: DimPartition

    def row_of(self, vid: int) -> int:
        return vid % self.q

    def col_of(self, d: int) -> int:
        return self.col.owner[d]


def checkerboard(dataset: Dataset, q: int, r: int) -> MeshAssignment:
    if q < 1 or r < 1:
        raise ValueError("mesh sides must be at least 1")
    return MeshAssignment(q, r, partition_dims_first_fit(dataset, r))
