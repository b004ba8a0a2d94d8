"""2-D mesh engine: horizontal across rows, vertical across columns.

Vectors cycle over the q mesh rows and dimensions pack into the r columns,
so rank (i, j) holds row i's vectors restricted to column j's dimensions.
Each step all-gathers the current vector slice within a column (one slice
per row), then the q gathered vectors are matched in row order through the
vertical machinery on the row communicator; a rank indexes its own slice
only after that vector has been matched, exactly as in the horizontal pass.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .core import Dataset, MatchSet
from .msgfabric import Communicator, spawn_world
from .par1d import (
    LocalIndex,
    VerticalOpts,
    _exchange_and_filter,
    _finish_rank,
    _merge_rank_results,
    _scan_item,
    compute_t_local,
)
from .partition import MeshAssignment, checkerboard
from .profiling import RankStats, RunProfile


class SizeMismatchError(ValueError):
    """Communicator size does not equal q * r."""


@dataclass
class MeshContext:
    world: Communicator
    myrow: Communicator
    mycol: Communicator
    rowid: int
    colid: int
    q: int
    r: int


def build_mesh(comm: Communicator, q: int, r: int) -> MeshContext:
    """Split a q*r communicator into row and column communicators.

    World ranks are laid out row-major (rank = rowid * r + colid), so both
    sub-communicators inherit ascending world-rank order: position in myrow
    is the column index, position in mycol is the row index.
    """
    if comm.size != q * r:
        raise SizeMismatchError(f"mesh {q}x{r} needs {q * r} ranks, comm has {comm.size}")
    rowid, colid = divmod(comm.rank, r)
    myrow = comm.split(rowid, comm.rank)
    mycol = comm.split(colid, comm.rank)
    return MeshContext(comm, myrow, mycol, rowid, colid, q, r)


def par_all_pairs_0_2d(
    dataset: Dataset,
    t: float,
    mesh: MeshContext,
    assign: MeshAssignment | None = None,
    opts: VerticalOpts | None = None,
    stats: RankStats | None = None,
    witnesses: dict | None = None,
) -> list[tuple[int, int, float]]:
    """Rank program for the 2-D pass; returns this rank's match slice."""
    opts = opts if opts is not None else VerticalOpts()
    assign = assign if assign is not None else checkerboard(dataset, mesh.q, mesh.r)
    stats = stats if stats is not None else RankStats(rank=mesh.world.rank)
    witnesses = witnesses if witnesses is not None else {}
    col_owner = assign.col.owner
    lindex = LocalIndex(dataset.n, col_owner, mesh.colid)
    my_vecs = [v for v in dataset.vectors if v.id % mesh.q == mesh.rowid]
    steps = mesh.mycol.all_reduce(len(my_vecs), max, elements=1)
    t_local = compute_t_local(t, mesh.myrow.size)
    matches: list[tuple[int, int, float]] = []
    block = opts.block_size
    for s0 in range(0, steps, block):
        span = range(s0, min(s0 + block, steps))
        payload = []
        nelem = 0
        for s in span:
            if s < len(my_vecs):
                x = my_vecs[s]
                entries = [(d, w) for d, w in x.entries if col_owner[d] == mesh.colid]
                payload.append((x.id, entries))
                nelem += len(entries)
            else:
                payload.append(None)
        xa = mesh.mycol.all_gather(payload, elements=nelem)
        stats.gathered_elements += (mesh.q - 1) * nelem
        items = []
        for bi in range(len(span)):
            for proc in range(mesh.q):
                item = xa[proc][bi]
                if item is None:
                    continue
                xid, entries = item
                items.append(_scan_item(lindex, xid, entries, t_local, opts, stats))
                if proc == mesh.rowid:
                    lindex.index(xid, entries)
        matches.extend(_exchange_and_filter(mesh.myrow, items, t, opts, stats, witnesses))
    return matches


def run_mesh(
    dataset: Dataset,
    t: float,
    q: int,
    r: int,
    opts: VerticalOpts | None = None,
    scheduler: str = "threads",
) -> tuple[MatchSet, RunProfile]:
    """Drive the 2-D pass on a q x r mesh and merge the slices."""
    opts = opts if opts is not None else VerticalOpts()
    assign = checkerboard(dataset, q, r)

    def program(comm: Communicator):
        stats = RankStats(rank=comm.rank)
        witnesses: dict[tuple[int, int], float] = {}
        started = time.perf_counter()
        mesh = build_mesh(comm, q, r)
        matches = par_all_pairs_0_2d(dataset, t, mesh, assign, opts, stats, witnesses)
        _finish_rank(comm, stats, started)
        return matches, witnesses, stats

    results = spawn_world(q * r, program, scheduler)
    return _merge_rank_results(results, f"2d-{q}x{r}-{opts.label()}", q * r)
