import math
import threading
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from zomp import runtime as rt
from zomp.clauses import ReductionOp, ScheduleKind


def team_ranges(threads, body):
    """Run ``body(ctx)`` on a team; collect what each member returns."""
    out = {}
    lock = threading.Lock()

    def member(ctx, fp, sh, rd):
        got = body(ctx)
        with lock:
            out[ctx.thread_id] = got

    rt.fork_call(member, requested_threads=threads)
    return out


def static_chunks(lower, upper, inc, chunk):
    def body(ctx):
        got = rt.static_init(ctx, lower, upper, inc, chunk)
        rt.static_fini(ctx)
        rt.barrier(ctx)
        return got
    return body


def dispatched_chunks(kind, lower, upper, inc, chunk, nowait=False):
    def body(ctx):
        rt.dispatch_init(ctx, kind, lower, upper, inc, chunk, nowait)
        got = []
        while (r := rt.dispatch_next(ctx)) is not None:
            got.append(r)
        return got
    return body


def iterations(ranges_by_tid):
    return Counter(k for rs in ranges_by_tid.values() for lo, hi in rs for k in range(lo, hi))


@pytest.mark.parametrize("threads", [1, 2, 4, 8])
@pytest.mark.parametrize("n", [0, 1, 10, 1000])
@pytest.mark.parametrize("schedule", [
    (ScheduleKind.static, 0), (ScheduleKind.static, 1), (ScheduleKind.static, 7),
    (ScheduleKind.dynamic, 1), (ScheduleKind.dynamic, 5), (ScheduleKind.guided, 1),
    (ScheduleKind.guided, 4), (ScheduleKind.runtime, 0),
])
def test_every_iteration_claimed_once(schedule, n, threads, monkeypatch):
    kind, chunk = schedule
    monkeypatch.setenv("OMP_SCHEDULE", "guided,3")
    if kind is ScheduleKind.static:
        got = team_ranges(threads, static_chunks(0, n, 1, chunk))
    else:
        got = team_ranges(threads, dispatched_chunks(kind, 0, n, 1, chunk))
    assert iterations(got) == Counter(range(n))
    assert set(got) == set(range(threads))


def test_static_block_split_gives_remainder_to_low_ids():
    got = team_ranges(4, static_chunks(0, 10, 1, 0))
    assert got == {0: [(0, 3)], 1: [(3, 6)], 2: [(6, 8)], 3: [(8, 10)]}


def test_static_chunked_is_round_robin():
    got = team_ranges(3, static_chunks(0, 10, 1, 2))
    assert got == {0: [(0, 2), (6, 8)], 1: [(2, 4), (8, 10)], 2: [(4, 6)]}


def test_static_normalizes_strided_bounds():
    got = team_ranges(2, static_chunks(100, 0, -7, 0))
    assert iterations(got) == Counter(range(len(range(100, 0, -7))))


def test_guided_chunks_shrink_but_respect_minimum():
    got = team_ranges(1, dispatched_chunks(ScheduleKind.guided, 0, 1000, 1, 1))
    sizes = [hi - lo for lo, hi in got[0]]
    assert sizes == sorted(sizes, reverse=True)
    assert sum(sizes) == 1000 and sizes[0] == 1000

    got = team_ranges(4, dispatched_chunks(ScheduleKind.guided, 0, 1000, 1, 50))
    sizes = sorted((hi - lo for rs in got.values() for lo, hi in rs), reverse=True)
    assert sizes[0] == 250 and all(s >= 50 for s in sizes[:-1])


def test_dynamic_chunk_sizes():
    got = team_ranges(3, dispatched_chunks(ScheduleKind.dynamic, 0, 23, 1, 5))
    sizes = sorted(hi - lo for rs in got.values() for lo, hi in rs)
    assert sizes == [3, 5, 5, 5, 5]


def test_successive_dispatch_loops_with_nowait():
    def body(ctx):
        seen = []
        for nowait in (True, False, True):
            rt.dispatch_init(ctx, ScheduleKind.dynamic, 0, 20, 1, 3, nowait)
            while (r := rt.dispatch_next(ctx)) is not None:
                seen.append(r)
        return seen
    got = team_ranges(4, body)
    assert iterations(got) == Counter(k for k in range(20) for _ in range(3))


def test_dispatch_contract_violations():
    def reinit(ctx):
        rt.dispatch_init(ctx, ScheduleKind.dynamic, 0, 4, 1, 1)
        rt.dispatch_init(ctx, ScheduleKind.dynamic, 0, 4, 1, 1)
    with pytest.raises(rt.ContractError):
        team_ranges(1, reinit)

    def mismatch(ctx):
        rt.dispatch_init(ctx, ScheduleKind.dynamic, 0, 4 + ctx.thread_id, 1, 1)
        while rt.dispatch_next(ctx):
            pass
    with pytest.raises(rt.ContractError, match="differ"):
        team_ranges(2, mismatch)

    with pytest.raises(rt.ContractError):
        team_ranges(1, lambda ctx: rt.dispatch_next(ctx))
    with pytest.raises(rt.ContractError):
        team_ranges(1, lambda ctx: rt.static_fini(ctx))

    def double_static(ctx):
        rt.static_init(ctx, 0, 4, 1)
        rt.static_init(ctx, 0, 4, 1)
    with pytest.raises(rt.ContractError):
        team_ranges(1, double_static)


@given(st.integers(-50, 50), st.integers(-50, 50), st.integers(-9, 9).filter(bool))
def test_trip_count_matches_range(lower, upper, inc):
    assert rt.trip_count(lower, upper, inc) == len(range(lower, upper, inc))


def test_trip_count_rejects_zero_increment():
    with pytest.raises(ValueError):
        rt.trip_count(0, 5, 0)


@pytest.mark.parametrize("raw, expected", [
    (None, (ScheduleKind.static, 0)),
    ("", (ScheduleKind.static, 0)),
    ("dynamic,4", (ScheduleKind.dynamic, 4)),
    (" Guided ", (ScheduleKind.guided, 0)),
    ("static, 7", (ScheduleKind.static, 7)),
    ("fastest", (ScheduleKind.static, 0)),
    ("dynamic,-2", (ScheduleKind.static, 0)),
    ("runtime", (ScheduleKind.static, 0)),
])
def test_schedule_env(raw, expected):
    assert rt.parse_schedule_env(raw) == expected


def test_malformed_schedule_env_warns_once(caplog):
    rt._reported_schedules.discard("weird,1")
    with caplog.at_level("WARNING", logger="zomp.runtime"):
        rt.parse_schedule_env("weird,1")
        rt.parse_schedule_env("weird,1")
    assert sum("OMP_SCHEDULE" in r.message for r in caplog.records) == 1


def test_thread_count_precedence(monkeypatch):
    monkeypatch.setenv("OMP_NUM_THREADS", "3")
    assert rt.get_max_threads() == 3
    rt.set_num_threads(5)
    assert rt.get_max_threads() == 5
    rt.reset_num_threads()
    monkeypatch.setenv("OMP_NUM_THREADS", "zero")
    assert rt.get_max_threads() >= 1
    with pytest.raises(ValueError):
        rt.set_num_threads(0)


def test_fork_gives_each_member_an_id():
    assert rt.get_thread_num() == 0 and rt.get_num_threads() == 1
    got = team_ranges(4, lambda ctx: (rt.get_thread_num(), rt.get_num_threads()))
    assert got == {t: (t, 4) for t in range(4)}
    assert rt.current_context() is None


def test_nested_fork_is_serialized():
    got = team_ranges(3, lambda ctx: team_ranges(4, lambda inner: rt.get_num_threads()))
    assert got == {t: {0: 1} for t in range(3)}


def test_fork_passes_capture_groups():
    seen = []
    rt.fork_call(lambda ctx, fp, sh, rd: seen.append((fp, sh, rd)), "f", "s", "r", requested_threads=2)
    assert seen == [("f", "s", "r")] * 2


def test_barrier_separates_phases():
    log, lock = [], threading.Lock()

    def body(ctx):
        for phase in range(3):
            with lock:
                log.append(phase)
            rt.barrier(ctx)
    team_ranges(6, body)
    assert log == sorted(log)


def test_member_failure_aborts_team_without_hanging():
    def body(ctx):
        if ctx.thread_id == 0:
            raise ZeroDivisionError("boom")
        rt.barrier(ctx)
        rt.barrier(ctx)
    with pytest.raises(ZeroDivisionError):
        team_ranges(4, body)

    def late(ctx):
        rt.barrier(ctx)
        if ctx.thread_id == 3:
            raise KeyError("late")
        rt.barrier(ctx)
    with pytest.raises(KeyError):
        team_ranges(4, late)


def test_atomic_counter_8x100k():
    cell = rt.AtomicCell(0)

    def body(ctx):
        for _ in range(100_000):
            rt.atomic_rmw(cell, ReductionOp.add, 1)
    team_ranges(8, body)
    assert cell.load() == 800_000


def test_cas_multiply_eight_doublings():
    for _ in range(20):
        cell = rt.AtomicCell(1)
        team_ranges(8, lambda ctx: rt.cas_reduce(cell, ReductionOp.multiply, 2))
        assert cell.load() == 256


class FlakyCell(rt.AtomicCell):
    """Simulated interference: the first few swaps see another writer's value."""

    __slots__ = ("failures", "attempts")

    def __init__(self, value, failures):
        super().__init__(value)
        self.failures = failures
        self.attempts = 0

    def compare_and_swap(self, expected, new):
        self.attempts += 1
        if self.failures:
            self.failures -= 1
            with self._lock:
                self._set(self._get() + 1)  # a concurrent +1 lands first
        return super().compare_and_swap(expected, new)


def test_cas_loop_retries_until_success():
    cell = FlakyCell(3, failures=2)
    rt.cas_reduce(cell, ReductionOp.multiply, 10)
    assert cell.attempts == 3
    assert cell.load() == 50  # (3 + 1 + 1) * 10


def test_cas_compares_bit_patterns():
    nan_cell = rt.AtomicCell(math.nan)
    assert nan_cell.compare_and_swap(math.nan, 1.0)[0]
    zero = rt.AtomicCell(0.0)
    assert not zero.compare_and_swap(-0.0, 1.0)[0]
    assert not rt.AtomicCell(1).compare_and_swap(1.0, 2)[0]


def test_rmw_refuses_ops_without_native_atomics():
    with pytest.raises(ValueError):
        rt.AtomicCell(1).rmw(ReductionOp.multiply, 2)
    cell = rt.AtomicCell(False)
    assert rt.atomic_rmw(cell, ReductionOp.logical_or, True) is True


@pytest.mark.parametrize("op", list(ReductionOp))
def test_identity_is_neutral(op):
    kind = bool if op in (ReductionOp.logical_and, ReductionOp.logical_or) else int
    samples = [True, False] if kind is bool else [-5, 0, 7, rt.I64_MAX, rt.I64_MIN]
    for x in samples:
        if op is ReductionOp.subtract:
            assert rt.apply_op(ReductionOp.add, rt.identity(op, kind), x) == x
        else:
            assert rt.apply_op(op, rt.identity(op, kind), x) == x


def test_identity_type_errors():
    with pytest.raises(TypeError):
        rt.identity(ReductionOp.bit_or, float)
    with pytest.raises(TypeError):
        rt.identity(ReductionOp.add, bool)
    with pytest.raises(TypeError):
        rt.identity(ReductionOp.logical_or, int)
    assert rt.identity(ReductionOp.min, float) == math.inf


def test_integer_ops_wrap():
    assert rt.apply_op(ReductionOp.add, rt.I64_MAX, 1) == rt.I64_MIN
    assert rt.apply_op(ReductionOp.multiply, 1 << 62, 4) == 0
    assert math.isnan(rt.apply_op(ReductionOp.min, math.nan, 1.0))


def test_closing_barrier_waits_for_slow_thread():
    import time

    passed = {}

    def body(ctx):
        start = time.perf_counter()
        rt.static_init(ctx, 0, ctx.num_threads, 1)
        if ctx.thread_id == 0:
            time.sleep(0.05)
        rt.static_fini(ctx)
        rt.barrier(ctx)
        passed[ctx.thread_id] = time.perf_counter() - start
    team_ranges(4, body)
    assert min(passed.values()) >= 0.05


def test_nowait_lets_fast_threads_proceed():
    import time

    slow_done = threading.Event()
    early = []

    def body(ctx):
        rt.static_init(ctx, 0, 2, 1)
        if ctx.thread_id == 0:
            time.sleep(0.05)
            slow_done.set()
        rt.static_fini(ctx)  # nowait: no barrier follows
        if ctx.thread_id == 1:
            early.append(not slow_done.is_set())
    team_ranges(2, body)
    assert early == [True]


def test_dispatch_examples():
    got = team_ranges(2, dispatched_chunks(ScheduleKind.dynamic, 0, 10, 1, 3))
    assert sorted(hi - lo for rs in got.values() for lo, hi in rs) == [1, 3, 3, 3]
    got = team_ranges(3, dispatched_chunks(ScheduleKind.dynamic, 0, 7, 1, 0))
    assert {hi - lo for rs in got.values() for lo, hi in rs} == {1}
    got = team_ranges(4, dispatched_chunks(ScheduleKind.guided, 0, 100, 1, 1))
    assert max(hi - lo for rs in got.values() for lo, hi in rs) == 25
    assert team_ranges(3, dispatched_chunks(ScheduleKind.guided, 0, 0, 1, 1)) == {0: [], 1: [], 2: []}


def test_runtime_kind_reads_environment(monkeypatch):
    monkeypatch.setenv("OMP_SCHEDULE", "dynamic,5")
    got = team_ranges(1, dispatched_chunks(ScheduleKind.runtime, 0, 12, 1, 0))
    assert [hi - lo for lo, hi in got[0]] == [5, 5, 2]
    monkeypatch.delenv("OMP_SCHEDULE")
    got = team_ranges(3, dispatched_chunks(ScheduleKind.runtime, 0, 10, 1, 0))
    assert got == {0: [(0, 4)], 1: [(4, 7)], 2: [(7, 10)]}  # unset: static blocks


def test_team_size_from_environment(monkeypatch):
    monkeypatch.setenv("OMP_NUM_THREADS", "3")
    sizes = []
    rt.fork_call(lambda ctx, *_: sizes.append(rt.get_num_threads()))
    assert sizes == [3, 3, 3]


def test_wtime_is_monotone():
    stamps = [rt.get_wtime() for _ in range(1000)]
    assert stamps == sorted(stamps)


def test_phase_counter_seen_identically_after_each_barrier():
    counter = rt.AtomicCell(0)
    seen = {}

    def body(ctx):
        for phase in range(4):
            rt.atomic_rmw(counter, ReductionOp.add, 1)
            rt.barrier(ctx)
            seen.setdefault(phase, set()).add(counter.load())
            rt.barrier(ctx)
    team_ranges(5, body)
    assert seen == {p: {5 * (p + 1)} for p in range(4)}
