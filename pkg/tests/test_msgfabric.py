import operator

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from allpairs.msgfabric import (
    DeadlockError,
    InvalidRootError,
    NotPowerOfTwoError,
    RankPanic,
    hypercube_accumulate_scores,
    hypercube_mnac_all,
    merge_als,
    spawn_world,
    world_trace,
)

SCHEDULERS = ("threads", "sequential")


@pytest.fixture(params=SCHEDULERS)
def scheduler(request):
    return request.param


class TestSpawnWorld:
    def test_single_rank(self, scheduler):
        assert spawn_world(1, lambda comm: comm.rank, scheduler) == [0]

    def test_rank_squares(self, scheduler):
        assert spawn_world(4, lambda comm: comm.rank ** 2, scheduler) == [0, 1, 4, 9]

    def test_mismatched_collectives_detected(self, scheduler):
        def program(comm):
            if comm.rank == 0:
                return comm.all_gather("a")
            return comm.all_reduce(1, operator.add)

        with pytest.raises(DeadlockError):
            spawn_world(2, program, scheduler)

    def test_missing_participant_detected(self, scheduler):
        def program(comm):
            if comm.rank == 0:
                return None  # exits without joining the collective
            return comm.all_gather("a")

        with pytest.raises(DeadlockError):
            spawn_world(3, program, scheduler)

    def test_rank_panic_carries_rank(self, scheduler):
        def program(comm):
            if comm.rank == 2:
                raise RuntimeError("boom")
            return comm.all_gather(comm.rank)

        with pytest.raises(RankPanic) as excinfo:
            spawn_world(4, program, scheduler)
        assert excinfo.value.rank == 2
        assert isinstance(excinfo.value.cause, RuntimeError)


class TestAllGather:
    def test_rank_order_everywhere(self, scheduler):
        items = ["a", "b", "c"]
        results = spawn_world(3, lambda comm: comm.all_gather(items[comm.rank]), scheduler)
        assert results == [["a", "b", "c"]] * 3

    def test_identity_on_one_rank(self, scheduler):
        assert spawn_world(1, lambda comm: comm.all_gather("x"), scheduler) == [["x"]]

    def test_sent_element_counters(self, scheduler):
        sizes = [2, 0, 5]

        def program(comm):
            comm.all_gather([0.0] * sizes[comm.rank])
            return comm.counters.elements_sent

        assert spawn_world(3, program, scheduler) == [4, 0, 10]

    def test_payloads_copied_not_aliased(self, scheduler):
        def program(comm):
            got = comm.all_gather([comm.rank])
            got[0].append(99)  # mutating the received copy
            second = comm.all_gather([comm.rank])
            return second[0]

        assert spawn_world(2, program, scheduler) == [[0], [0]]


class TestAllReduce:
    def test_set_union(self, scheduler):
        payloads = [{1, 2}, {2, 3}]
        results = spawn_world(
            2, lambda comm: comm.all_reduce(payloads[comm.rank], operator.or_), scheduler
        )
        assert results == [{1, 2, 3}, {1, 2, 3}]

    def test_sum(self, scheduler):
        results = spawn_world(
            4, lambda comm: comm.all_reduce(comm.rank + 1, operator.add, elements=1), scheduler
        )
        assert results == [10, 10, 10, 10]

    def test_identity_on_one_rank(self, scheduler):
        assert spawn_world(1, lambda comm: comm.all_reduce(7, operator.add), scheduler) == [7]

    def test_left_fold_order_is_rank_ascending(self, scheduler):
        results = spawn_world(
            3, lambda comm: comm.all_reduce([comm.rank], operator.add), scheduler
        )
        assert results == [[0, 1, 2]] * 3


class TestGather:
    def test_root_gets_all(self, scheduler):
        items = ["a", "b", "c"]
        results = spawn_world(3, lambda comm: comm.gather(items[comm.rank], root=1), scheduler)
        assert results == [None, ["a", "b", "c"], None]

    def test_single_rank(self, scheduler):
        assert spawn_world(1, lambda comm: comm.gather("x", root=0), scheduler) == [["x"]]

    def test_invalid_root(self, scheduler):
        with pytest.raises(RankPanic) as excinfo:
            spawn_world(3, lambda comm: comm.gather("x", root=5), scheduler)
        assert isinstance(excinfo.value.cause, InvalidRootError)


class TestCommSplit:
    def test_two_halves(self, scheduler):
        def program(comm):
            sub = comm.split(color=comm.rank // 2, key=comm.rank)
            return (sub.size, sub.rank, sub.all_gather(comm.rank))

        results = spawn_world(4, program, scheduler)
        assert results == [(2, 0, [0, 1]), (2, 1, [0, 1]), (2, 0, [2, 3]), (2, 1, [2, 3])]

    def test_same_color_copies_comm(self, scheduler):
        def program(comm):
            sub = comm.split(color=0, key=comm.rank)
            return (sub.size, sub.rank)

        assert spawn_world(3, program, scheduler) == [(3, 0), (3, 1), (3, 2)]

    def test_distinct_colors_make_singletons(self, scheduler):
        def program(comm):
            sub = comm.split(color=comm.rank, key=0)
            return (sub.size, sub.rank)

        assert spawn_world(3, program, scheduler) == [(1, 0)] * 3

    def test_key_orders_new_ranks(self, scheduler):
        def program(comm):
            sub = comm.split(color=0, key=-comm.rank)  # reversed order
            return sub.rank

        assert spawn_world(3, program, scheduler) == [2, 1, 0]


class TestHypercube:
    def test_mnac_sum(self, scheduler):
        results = spawn_world(
            4,
            lambda comm: hypercube_mnac_all(comm, comm.rank + 1, operator.add, elements_of=lambda _: 1),
            scheduler,
        )
        assert results == [10, 10, 10, 10]

    def test_single_rank_identity(self, scheduler):
        assert spawn_world(
            1, lambda comm: hypercube_mnac_all(comm, "z", operator.add), scheduler
        ) == ["z"]

    def test_not_power_of_two(self, scheduler):
        with pytest.raises(RankPanic) as excinfo:
            spawn_world(
                3, lambda comm: hypercube_mnac_all(comm, 1, operator.add), scheduler
            )
        assert isinstance(excinfo.value.cause, NotPowerOfTwoError)

    @given(st.lists(st.lists(st.integers(-100, 100), max_size=6), min_size=8, max_size=8))
    @settings(max_examples=25, deadline=None)
    def test_mnac_equals_all_reduce_for_sum(self, payloads):
        for p in (1, 2, 4, 8):
            def program(comm):
                mine = sum(payloads[comm.rank])
                via_cube = hypercube_mnac_all(comm, mine, operator.add, elements_of=lambda _: 1)
                via_flat = comm.all_reduce(mine, operator.add, elements=1)
                return via_cube, via_flat

            for cube, flat in spawn_world(p, program, "sequential"):
                assert cube == flat


class TestHypercubeAccumulateScores:
    def test_two_rank_merge_and_homes(self):
        lists = [[(0, 0.5), (1, 0.2)], [(1, 0.3), (2, 0.4)]]

        def program(comm):
            return hypercube_accumulate_scores(comm, lists[comm.rank])

        out = spawn_world(2, program, "sequential")
        assert out[0] == [(0, 0.5), (2, 0.4)]
        assert out[1] == [(1, pytest.approx(0.5))]

    def test_all_empty(self):
        assert spawn_world(4, lambda comm: hypercube_accumulate_scores(comm, []), "sequential") == [
            [], [], [], [],
        ]

    def test_single_rank_collapses_duplicates(self):
        out = spawn_world(
            1, lambda comm: hypercube_accumulate_scores(comm, [(3, 1.0), (3, 2.0), (5, 1.5)]), "threads"
        )
        assert out == [[(3, 3.0), (5, 1.5)]]

    @given(
        st.lists(
            st.lists(st.tuples(st.integers(0, 30), st.integers(-50, 50)), max_size=10),
            min_size=4,
            max_size=4,
        )
    )
    @settings(max_examples=30, deadline=None)
    def test_union_of_slices_equals_sequential_merge(self, payloads):
        als = [sorted((k, float(v)) for k, v in lst) for lst in payloads]

        def program(comm):
            return hypercube_accumulate_scores(comm, als[comm.rank])

        out = spawn_world(4, program, "sequential")
        merged: dict[int, float] = {}
        for al in als:
            for k, v in al:
                merged[k] = merged.get(k, 0.0) + v
        got = sorted(pair for slice_ in out for pair in slice_)
        assert got == sorted(merged.items())
        for rank, slice_ in enumerate(out):
            assert all(k % 4 == rank for k, _ in slice_)

    def test_merge_als(self):
        assert merge_als([(1, 1.0), (3, 2.0)], [(1, 0.5), (2, 0.25)]) == [
            (1, 1.5), (2, 0.25), (3, 2.0),
        ]

    @given(
        st.lists(
            st.lists(
                st.tuples(st.integers(0, 20), st.floats(0.01, 1.0, allow_nan=False)),
                max_size=8,
            ),
            min_size=8,
            max_size=8,
        )
    )
    @settings(max_examples=20, deadline=None)
    def test_real_scores_agree_with_serial_merge_within_tolerance(self, payloads):
        als = []
        for lst in payloads:
            merged: dict[int, float] = {}
            for k, v in lst:
                merged[k] = merged.get(k, 0.0) + v
            als.append(sorted(merged.items()))

        def program(comm):
            return hypercube_accumulate_scores(comm, als[comm.rank])

        out = spawn_world(8, program, "sequential")
        expected: dict[int, float] = {}
        for al in als:
            for k, v in al:
                expected[k] = expected.get(k, 0.0) + v
        got = dict(pair for slice_ in out for pair in slice_)
        assert got.keys() == expected.keys()
        for k, v in expected.items():
            assert abs(got[k] - v) <= 1e-12


class TestDeterminismAndConservation:
    def _mixed_program(self, comm):
        sub = comm.split(comm.rank % 2, comm.rank)
        a = comm.all_gather([comm.rank] * (comm.rank + 1))
        b = sub.all_reduce({comm.rank}, operator.or_)
        c = comm.gather(len(a), root=0)
        d = hypercube_mnac_all(comm, comm.rank, operator.add, elements_of=lambda _: 1)
        return (a, sorted(b), c, d)

    def test_results_and_traces_stable_across_runs_and_schedulers(self):
        baseline_results = None
        baseline_traces = None
        for scheduler in ("sequential", "threads", "threads", "threads"):
            results = spawn_world(4, self._mixed_program, scheduler)
            traces = world_trace(4, self._mixed_program, scheduler)
            if baseline_results is None:
                baseline_results = results
                baseline_traces = traces
            else:
                assert results == baseline_results
                assert traces == baseline_traces

    def test_kind_sequence_agrees_per_communicator(self):
        traces = world_trace(4, self._mixed_program, "threads")
        per_comm: dict[str, list[list[str]]] = {}
        for trace in traces:
            seen: dict[str, list[str]] = {}
            for kind, label, _ in trace:
                seen.setdefault(label, []).append(kind)
            for label, kinds in seen.items():
                per_comm.setdefault(label, []).append(kinds)
        for label, sequences in per_comm.items():
            assert all(seq == sequences[0] for seq in sequences), label

    def test_sent_equals_received(self, scheduler):
        def program(comm):
            comm.all_gather([1.0] * (comm.rank + 2))
            comm.gather([2.0] * comm.rank, root=1)
            comm.all_reduce([comm.rank], operator.add)
            stats = comm.counters
            return stats.elements_sent, stats.elements_received

        results = spawn_world(4, program, scheduler)
        total_sent = sum(s for s, _ in results)
        total_received = sum(r for _, r in results)
        assert total_sent == total_received > 0
