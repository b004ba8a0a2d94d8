"""Deterministic in-process message passing for SPMD rank programs.

A world of p virtual ranks runs one program per rank; the only cross-rank
interaction is through collectives on communicators (all-gather, all-reduce,
rooted gather, pairwise exchange, comm split). Payloads cross rank
boundaries by value, reductions fold in ascending rank order, and child
communicator identities derive from the call site, so results are fully
reproducible no matter how ranks get scheduled.

Two schedulers share all the collective machinery:

- "threads": one OS thread per rank, rendezvous via a condition variable;
- "sequential": a cooperative round-robin over greenlets, one rank running
  at a time, switching only at collectives.

A watchdog turns contract violations into errors instead of hangs: ranks of
one communicator disagreeing on the next collective kind fail immediately,
and a world where every live rank is parked in an incomplete collective is
declared deadlocked.
"""

from __future__ import annotations

import copy
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable

import greenlet


class FabricError(Exception):
    pass


class DeadlockError(FabricError):
    """A collective can never complete: mismatched kinds, or all ranks parked."""


class RankPanic(FabricError):
    """A rank program raised; carries the rank id and the original error."""

    def __init__(self, rank: int, cause: BaseException) -> None:
        super().__init__(f"rank {rank} failed: {cause!r}")
        self.rank = rank
        self.cause = cause


class InvalidRootError(FabricError):
    pass


class NotPowerOfTwoError(FabricError):
    pass


_SCALARS = (int, float, bool, str, bytes, frozenset, type(None))


def _copy_payload(x):
    """Value-transfer copy. Immutable content is shared, never rebuilt."""
    if isinstance(x, _SCALARS):
        return x
    if type(x) is tuple:
        for v in x:
            if not isinstance(v, _SCALARS):
                return tuple(_copy_payload(v) for v in x)
        return x  # scalars only: immutable through and through
    if type(x) is list:
        out = []
        append = out.append
        for v in x:
            if isinstance(v, _SCALARS):
                append(v)
            elif type(v) is tuple:
                for u in v:
                    if not isinstance(u, _SCALARS):
                        append(tuple(_copy_payload(w) for w in v))
                        break
                else:
                    append(v)
            else:
                append(_copy_payload(v))
        return out
    if isinstance(x, set):
        return set(x)
    if isinstance(x, dict):
        return {k: _copy_payload(v) for k, v in x.items()}
    return copy.deepcopy(x)


def _default_elements(x) -> int:
    try:
        return len(x)
    except TypeError:
        return 0 if x is None else 1


@dataclass
class CommStats:
    """Per-rank instrumentation, shared by all communicators of the world."""

    elements_sent: int = 0
    elements_received: int = 0
    collective_calls: int = 0
    comm_seconds: float = 0.0
    trace: list[tuple[str, str, int]] = field(default_factory=list)


class _Slot:
    """One collective call site on one communicator."""

    __slots__ = ("kind", "root", "contribs", "elements", "done", "results", "error")

    def __init__(self, kind: str, root) -> None:
        self.kind = kind
        self.root = root
        self.contribs: dict[int, Any] = {}
        self.elements: dict[int, int] = {}
        self.done = False
        self.results: dict[int, Any] = {}
        self.error: BaseException | None = None


class _CommState:
    """Shared state of one communicator group."""

    __slots__ = ("label", "size", "members", "slots", "split_count")

    def __init__(self, label: str, members: list[int]) -> None:
        self.label = label
        self.size = len(members)
        self.members = members  # world ranks, in communicator rank order
        self.slots: dict[int, _Slot] = {}
        self.split_count = 0


class Communicator:
    """One rank's handle onto a communicator group."""

    __slots__ = ("_world", "_state", "rank", "_call_index")

    def __init__(self, world: "_World", state: _CommState, rank: int) -> None:
        self._world = world
        self._state = state
        self.rank = rank
        self._call_index = 0

    @property
    def size(self) -> int:
        return self._state.size

    @property
    def label(self) -> str:
        return self._state.label

    @property
    def counters(self) -> CommStats:
        return self._world.stats[self._state.members[self.rank]]

    def all_gather(self, item, elements: int | None = None) -> list:
        """Every rank receives [item_0, ..., item_{p-1}] in rank order."""
        return self._world.collective(self, "all_gather", item, elements)

    def all_reduce(self, item, op: Callable[[Any, Any], Any], elements: int | None = None):
        """Every rank receives the left fold of all items in ascending rank order."""
        return self._world.collective(self, "all_reduce", item, elements, op=op)

    def gather(self, item, root: int, elements: int | None = None):
        """Root receives the rank-ordered list of items; other ranks get None."""
        if not 0 <= root < self.size:
            raise InvalidRootError(f"root {root} out of range for size {self.size}")
        return self._world.collective(self, "gather", item, elements, root=root)

    def exchange(self, partner: int, item, elements: int | None = None):
        """Pairwise swap: each rank receives its partner's item.

        All ranks of the communicator must call together and the partner map
        must be an involution (partner[partner[r]] == r).
        """
        return self._world.collective(self, "exchange", item, elements, partner=partner)

    def split(self, color: int, key: int) -> "Communicator":
        """Ranks sharing a color form a new communicator, ordered by (key, rank)."""
        return self._world.collective(self, "split", (color, key), 0)


class _RankState:
    __slots__ = ("rank", "status", "result", "error", "waiting")

    def __init__(self, rank: int) -> None:
        self.rank = rank
        self.status = "running"  # running | blocked | exited | failed
        self.result = None
        self.error: BaseException | None = None
        self.waiting: _Slot | None = None


class _World:
    def __init__(self, p: int, scheduler) -> None:
        self.p = p
        self.scheduler = scheduler
        self.lock = scheduler.make_lock()
        self.stats = [CommStats() for _ in range(p)]
        self.ranks = [_RankState(r) for r in range(p)]
        self.comm_states: dict[str, _CommState] = {}
        root_state = _CommState("w", list(range(p)))
        self.comm_states["w"] = root_state
        self.root_state = root_state

    def comm_handle(self, rank: int) -> Communicator:
        return Communicator(self, self.root_state, rank)

    # -- collective core ---------------------------------------------------

    def collective(self, comm: Communicator, kind: str, payload, elements, **kw):
        state = comm._state
        world_rank = state.members[comm.rank]
        stats = self.stats[world_rank]
        started = time.perf_counter()
        with self.lock:
            idx = comm._call_index
            comm._call_index += 1
            slot = state.slots.get(idx)
            if slot is None:
                slot = state.slots[idx] = _Slot(kind, kw.get("root"))
            if slot.error is None and (slot.kind != kind or slot.root != kw.get("root")):
                slot.error = DeadlockError(
                    f"collective mismatch on {state.label}: call {idx} saw "
                    f"{slot.kind!r} and {kind!r}"
                )
                self.scheduler.wake_all()
            if slot.error is not None:
                stats.comm_seconds += time.perf_counter() - started
                raise slot.error
            nelem = _default_elements(payload) if elements is None else elements
            if kind == "exchange":
                slot.contribs[comm.rank] = (kw["partner"], payload)
            elif kind == "all_reduce":
                slot.contribs[comm.rank] = (kw["op"], payload)
            else:
                slot.contribs[comm.rank] = payload
            slot.elements[comm.rank] = nelem
            stats.collective_calls += 1
            stats.trace.append((kind, state.label, nelem))
            if len(slot.contribs) == state.size:
                self._complete(state, slot, idx)
                self.scheduler.wake_all()
            else:
                self.scheduler.park(self, world_rank, slot)
            if slot.error is not None:
                stats.comm_seconds += time.perf_counter() - started
                raise slot.error
            result = slot.results.pop(comm.rank)
            if slot.done and not slot.results:
                state.slots.pop(idx, None)  # everyone has collected; free payloads
        stats.comm_seconds += time.perf_counter() - started
        return result

    def _complete(self, state: _CommState, slot: _Slot, idx: int) -> None:
        size = state.size
        kind = slot.kind
        if kind == "all_gather":
            for r in range(size):
                slot.results[r] = [_copy_payload(slot.contribs[s]) for s in range(size)]
        elif kind == "all_reduce":
            op, first = slot.contribs[0]
            acc = _copy_payload(first)
            for s in range(1, size):
                acc = op(acc, _copy_payload(slot.contribs[s][1]))
            for r in range(size):
                slot.results[r] = _copy_payload(acc)
        elif kind == "gather":
            root = slot.root
            for r in range(size):
                slot.results[r] = None
            slot.results[root] = [_copy_payload(slot.contribs[s]) for s in range(size)]
        elif kind == "exchange":
            partners = {r: slot.contribs[r][0] for r in range(size)}
            for r, q in partners.items():
                if not 0 <= q < size or partners.get(q) != r:
                    slot.error = DeadlockError(
                        f"exchange on {state.label}: partner map not an involution"
                    )
                    return
            for r in range(size):
                slot.results[r] = _copy_payload(slot.contribs[partners[r]][1])
        elif kind == "split":
            groups: dict[int, list[tuple[int, int]]] = {}
            for r in range(size):
                color, key = slot.contribs[r]
                groups.setdefault(color, []).append((key, r))
            for color, members in groups.items():
                members.sort()
                ordered = [state.members[r] for _, r in members]
                label = f"{state.label}/{idx}c{color}"
                child = self.comm_states.get(label)
                if child is None:
                    child = _CommState(label, ordered)
                    self.comm_states[label] = child
                for new_rank, (_, r) in enumerate(members):
                    slot.results[r] = Communicator(self, child, new_rank)
        else:  # pragma: no cover - internal
            raise AssertionError(kind)
        # received accounting: everything delivered to a rank that it did not
        # already hold itself
        for r in range(size):
            world_rank = state.members[r]
            if kind in ("all_gather", "all_reduce"):
                self.stats[world_rank].elements_received += sum(
                    slot.elements[s] for s in range(size) if s != r
                )
            elif kind == "gather" and r == slot.root:
                self.stats[world_rank].elements_received += sum(
                    slot.elements[s] for s in range(size) if s != r
                )
            elif kind == "exchange":
                partner = slot.contribs[r][0]
                self.stats[world_rank].elements_received += slot.elements[partner]
        # sent accounting
        for r in range(size):
            world_rank = state.members[r]
            if kind in ("all_gather", "all_reduce"):
                self.stats[world_rank].elements_sent += slot.elements[r] * (size - 1)
            elif kind == "gather":
                if r != slot.root:
                    self.stats[world_rank].elements_sent += slot.elements[r]
            elif kind == "exchange":
                self.stats[world_rank].elements_sent += slot.elements[r]
        slot.contribs.clear()
        slot.done = True

    # -- lifecycle ----------------------------------------------------------

    def rank_done(self, rank: int, result) -> None:
        with self.lock:
            st = self.ranks[rank]
            st.status = "exited"
            st.result = result
            self._check_stuck()

    def rank_failed(self, rank: int, error: BaseException) -> None:
        with self.lock:
            st = self.ranks[rank]
            st.status = "failed"
            st.error = error
            self._check_stuck()

    def _check_stuck(self) -> None:
        # Called under the lock whenever a rank leaves the running pool. If
        # nobody is left running and every parked rank waits on an incomplete
        # collective, no rank can ever be released.
        blocked = [r for r in self.ranks if r.status == "blocked"]
        if not blocked:
            return
        if any(r.status == "running" for r in self.ranks):
            return
        if any(
            r.waiting is not None and (r.waiting.done or r.waiting.error is not None)
            for r in blocked
        ):
            return  # someone was already released and just has not woken yet
        err = DeadlockError(
            "deadlock: ranks "
            + ",".join(str(r.rank) for r in blocked)
            + " are parked in collectives that can never complete"
        )
        for st in self.comm_states.values():
            for slot in st.slots.values():
                if not slot.done and slot.error is None:
                    slot.error = err
        self.scheduler.wake_all()


class _ThreadScheduler:
    name = "threads"

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)

    def make_lock(self):
        return self._lock

    def park(self, world: _World, rank: int, slot: _Slot) -> None:
        # Runs with the world lock held; Condition.wait releases it.
        st = world.ranks[rank]
        st.status = "blocked"
        st.waiting = slot
        world._check_stuck()
        while not (slot.done or slot.error is not None):
            self._cond.wait()
        st.status = "running"
        st.waiting = None

    def wake_all(self) -> None:
        self._cond.notify_all()

    def run(self, world: _World, program) -> None:
        def body(rank: int) -> None:
            try:
                result = program(world.comm_handle(rank))
            except BaseException as e:  # noqa: BLE001 - reported via RankPanic
                world.rank_failed(rank, e)
            else:
                world.rank_done(rank, result)

        threads = [
            threading.Thread(target=body, args=(r,), name=f"rank-{r}")
            for r in range(world.p)
        ]
        for th in threads:
            th.start()
        for th in threads:
            th.join()


class _NullLock:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


class _SequentialScheduler:
    """Cooperative round-robin: exactly one rank runs at a time.

    Ranks live on greenlets; a park switches back to the hub, which resumes
    the next runnable rank. All greenlets share one OS thread, so the world
    lock degenerates to a no-op.
    """

    name = "sequential"

    def __init__(self) -> None:
        self._runnable: deque[int] = deque()
        self._hub = None
        self._world: _World | None = None

    def make_lock(self):
        return _NullLock()

    def park(self, world: _World, rank: int, slot: _Slot) -> None:
        st = world.ranks[rank]
        st.status = "blocked"
        st.waiting = slot
        while not (slot.done or slot.error is not None):
            self._hub.switch()
        st.status = "running"
        st.waiting = None

    def wake_all(self) -> None:
        world = self._world
        for st in world.ranks:
            if st.status == "blocked" and st.rank not in self._runnable:
                self._runnable.append(st.rank)

    def run(self, world: _World, program) -> None:
        self._world = world
        self._hub = greenlet.getcurrent()

        def body(rank: int):
            def entry():
                try:
                    result = program(world.comm_handle(rank))
                except BaseException as e:  # noqa: BLE001
                    world.rank_failed(rank, e)
                else:
                    world.rank_done(rank, result)

            return entry

        fibers = [greenlet.greenlet(body(r)) for r in range(world.p)]
        self._runnable = deque(range(world.p))
        while True:
            if not self._runnable:
                alive = [r for r in range(world.p) if not fibers[r].dead]
                if not alive:
                    break
                world._check_stuck()  # marks slots, refills runnable via wake_all
                if not self._runnable:
                    break  # nothing blocked either; defensive
                continue
            r = self._runnable.popleft()
            if not fibers[r].dead:
                fibers[r].switch()


def spawn_world(p: int, program, scheduler: str = "threads") -> list:
    """Run `program(comm)` on p virtual ranks and return their results.

    Results come back in rank order. A rank raising propagates as RankPanic
    with the failing rank's id; fabric contract violations surface as
    DeadlockError.
    """
    if p < 1:
        raise ValueError("need at least one rank")
    if scheduler == "threads":
        sched = _ThreadScheduler()
    elif scheduler == "sequential":
        sched = _SequentialScheduler()
    else:
        raise ValueError(f"unknown scheduler {scheduler!r}")
    world = _World(p, sched)
    sched.run(world, program)
    failures = [st for st in world.ranks if st.status == "failed"]
    real = [st for st in failures if not isinstance(st.error, DeadlockError)]
    if real:
        st = real[0]
        raise RankPanic(st.rank, st.error) from st.error
    if failures:
        raise failures[0].error
    return [st.result for st in world.ranks]


def world_trace(p: int, program, scheduler: str = "threads") -> list[list[tuple[str, str, int]]]:
    """Run a program and return each rank's collective trace."""
    traces: list = [None] * p

    def wrapped(comm: Communicator):
        result = program(comm)
        traces[comm.rank] = list(comm.counters.trace)
        return result

    spawn_world(p, wrapped, scheduler)
    return traces


# -- hypercube algorithms ----------------------------------------------------


def _require_power_of_two(p: int) -> int:
    d = p.bit_length() - 1
    if p <= 0 or (1 << d) != p:
        raise NotPowerOfTwoError(f"hypercube needs a power-of-two size, got {p}")
    return d


def hypercube_mnac_all(comm: Communicator, item, op, elements_of=None):
    """Multi-node accumulation to all ranks over a hypercube.

    log2(p) rounds; in round `dim` each rank swaps its running result with
    partner = rank XOR (1 << dim), folding with op. Equivalent to all_reduce
    for an associative-commutative op, with a different combination order.
    """
    d = _require_power_of_two(comm.size)
    sizer = elements_of if elements_of is not None else _default_elements
    result = item
    for dim in range(d - 1, -1, -1):
        partner = comm.rank ^ (1 << dim)
        other = comm.exchange(partner, result, elements=sizer(result))
        result = op(result, other)
    return result


def merge_als(a: list[tuple[int, float]], b: list[tuple[int, float]]) -> list[tuple[int, float]]:
    """Merge two id-sorted association lists, summing scores of equal ids."""
    out = []
    i = j = 0
    na, nb = len(a), len(b)
    while i < na and j < nb:
        ka, kb = a[i][0], b[j][0]
        if ka == kb:
            out.append((ka, a[i][1] + b[j][1]))
            i += 1
            j += 1
        elif ka < kb:
            out.append(a[i])
            i += 1
        else:
            out.append(b[j])
            j += 1
    out.extend(a[i:])
    out.extend(b[j:])
    return out


def hypercube_accumulate_scores(
    comm: Communicator, al: list[tuple[int, float]]
) -> list[tuple[int, float]]:
    """Accumulate (id, score) pairs across ranks; rank r keeps ids with id % p == r.

    Pairs are first split by home rank, then each home slice is folded over
    the hypercube with a sorted merge that sums scores of equal ids.
    """
    p = comm.size
    _require_power_of_two(p)
    buckets: list[dict[int, float]] = [dict() for _ in range(p)]
    for key, score in al:
        home = buckets[key % p]
        home[key] = home.get(key, 0.0) + score
    result: list[tuple[int, float]] = []
    for dest in range(p):
        merged = hypercube_mnac_all(comm, sorted(buckets[dest].items()), merge_als)
        if dest == comm.rank:
            result = merged
    return result
