"""Fork-join thread-team runtime.

This is the target of the preprocessor's generated calls: ``fork_call``
outlines onto a team, ``static_init``/``static_fini`` and the
``dispatch_init``/``dispatch_next`` pair share loop iterations, and
``atomic_rmw``/``cas_reduce`` combine reduction partials. Loop iterations are
always expressed in the normalized space ``0 .. trip_count``; callers map an
index ``k`` back to ``lower + k * increment``.

The user-facing ``get_thread_num`` family reads the calling thread's context.
"""

from __future__ import annotations

import logging
import math
import os
import struct
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor, wait
from dataclasses import dataclass, field

from .clauses import ReductionOp, ScheduleKind

log = logging.getLogger(__name__)

I64_MIN = -(1 << 63)
I64_MAX = (1 << 63) - 1
_U64 = (1 << 64) - 1

NATIVE_OPS = frozenset({
    ReductionOp.add, ReductionOp.subtract, ReductionOp.min, ReductionOp.max,
    ReductionOp.bit_and, ReductionOp.bit_or, ReductionOp.bit_xor,
})
CAS_OPS = frozenset({ReductionOp.multiply, ReductionOp.logical_and, ReductionOp.logical_or})


class ContractError(RuntimeError):
    """A runtime entry point was called out of its documented order."""


class TeamAborted(RuntimeError):
    """Raised in team members blocked on a barrier after another member failed."""


def wrap_i64(value: int) -> int:
    return ((value - I64_MIN) & _U64) + I64_MIN


# -- reduction operators -----------------------------------------------------

def identity(op: ReductionOp, kind: type = int):
    """Identity element of ``op`` for values of ``kind`` (int, float or bool)."""
    op = ReductionOp(op)
    if kind is bool:
        if op is ReductionOp.logical_and:
            return True
        if op is ReductionOp.logical_or:
            return False
        raise TypeError(f"reduction '{op.name}' is not defined on bool")
    if op in (ReductionOp.logical_and, ReductionOp.logical_or):
        raise TypeError(f"reduction '{op.name}' needs bool operands")
    if kind is float:
        if op in (ReductionOp.bit_and, ReductionOp.bit_or, ReductionOp.bit_xor):
            raise TypeError(f"reduction '{op.name}' is not defined on f64")
        return {ReductionOp.multiply: 1.0, ReductionOp.min: math.inf,
                ReductionOp.max: -math.inf}.get(op, 0.0)
    return {ReductionOp.multiply: 1, ReductionOp.min: I64_MAX, ReductionOp.max: I64_MIN,
            ReductionOp.bit_and: -1}.get(op, 0)


def apply_op(op: ReductionOp, a, b):
    """``a op b`` with i64 wrap-around for integer results."""
    if op is ReductionOp.add:
        r = a + b
    elif op is ReductionOp.subtract:
        r = a - b
    elif op is ReductionOp.multiply:
        r = a * b
    elif op is ReductionOp.min:
        if a != a or b != b:  # NaN poisons
            return math.nan
        return a if a <= b else b
    elif op is ReductionOp.max:
        if a != a or b != b:
            return math.nan
        return a if a >= b else b
    elif op is ReductionOp.bit_and:
        r = a & b
    elif op is ReductionOp.bit_or:
        r = a | b
    elif op is ReductionOp.bit_xor:
        r = a ^ b
    elif op is ReductionOp.logical_and:
        return bool(a and b)
    elif op is ReductionOp.logical_or:
        return bool(a or b)
    else:
        raise ValueError(f"unknown reduction operator {op!r}")
    if type(r) is int and not I64_MIN <= r <= I64_MAX:
        r = wrap_i64(r)
    return r


def _same_bits(a, b) -> bool:
    # compare-and-swap compares representations: NaN matches NaN, -0.0 does not match 0.0
    if type(a) is float or type(b) is float:
        if type(a) is not type(b):
            return False
        return struct.pack("<d", a) == struct.pack("<d", b)
    return type(a) is type(b) and a == b


# -- atomic cells ------------------------------------------------------------

class AtomicCell:
    """A shared i64/f64/bool cell with linearizable load, store, RMW and CAS.

    Subclasses may relocate the storage by overriding ``_get``/``_set`` and
    supply their own ``_lock``; every atomic operation holds that lock.
    """

    __slots__ = ("_value", "_lock")

    def __init__(self, value=0):
        self._value = value
        self._lock = threading.Lock()

    def _get(self):
        return self._value

    def _set(self, value) -> None:
        self._value = value

    def load(self):
        with self._lock:
            return self._get()

    def store(self, value) -> None:
        with self._lock:
            self._set(value)

    def compare_and_swap(self, expected, new) -> tuple[bool, object]:
        """Install ``new`` if the cell holds ``expected``; return (success, observed)."""
        with self._lock:
            current = self._get()
            if _same_bits(current, expected):
                self._set(new)
                return True, current
            return False, current

    def rmw(self, op: ReductionOp, operand):
        if op not in NATIVE_OPS:
            raise ValueError(f"'{ReductionOp(op).name}' has no native atomic; use cas_reduce")
        with self._lock:
            new = apply_op(op, self._get(), operand)
            self._set(new)
            return new

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self._get()!r})"


def atomic_rmw(cell: AtomicCell, op: ReductionOp, operand):
    """Atomically apply ``op`` to ``cell``; returns the new value."""
    op = ReductionOp(op)
    if op in NATIVE_OPS:
        return cell.rmw(op, operand)
    return _cas_loop(cell, op, operand)


def cas_reduce(cell: AtomicCell, op: ReductionOp, operand) -> None:
    """Compare-and-swap loop for operators without a native atomic."""
    _cas_loop(cell, ReductionOp(op), operand)


def _cas_loop(cell, op, operand):
    old = cell.load()
    new = apply_op(op, old, operand)
    while True:
        success, actual = cell.compare_and_swap(old, new)
        if success:
            return new
        old = actual
        new = apply_op(op, old, operand)


# -- internal control variables ----------------------------------------------

_requested_threads: int | None = None
_tls = threading.local()
_reported_schedules: set[str] = set()


def set_num_threads(n: int) -> None:
    global _requested_threads
    if int(n) < 1:
        raise ValueError(f"set_num_threads({n}): thread count must be positive")
    _requested_threads = int(n)


def reset_num_threads() -> None:
    """Forget any set_num_threads value (environment and hardware apply again)."""
    global _requested_threads
    _requested_threads = None


def _env_threads() -> int | None:
    raw = os.environ.get("OMP_NUM_THREADS")
    if raw is None:
        return None
    try:
        value = int(raw.split(",")[0])
    except ValueError:
        value = 0
    if value < 1:
        log.warning("ignoring malformed OMP_NUM_THREADS=%r", raw)
        return None
    return value


def get_max_threads() -> int:
    return _requested_threads or _env_threads() or os.cpu_count() or 1


def current_context() -> "ThreadContext | None":
    return getattr(_tls, "ctx", None)


def get_thread_num() -> int:
    ctx = current_context()
    return 0 if ctx is None else ctx.thread_id


def get_num_threads() -> int:
    ctx = current_context()
    return 1 if ctx is None else ctx.team.size


def get_wtime() -> float:
    return time.perf_counter()


def parse_schedule_env(raw: str | None) -> tuple[ScheduleKind, int]:
    """Resolve an ``OMP_SCHEDULE`` value to (kind, chunk); malformed values fall back to static."""
    if raw is None or not raw.strip():
        return ScheduleKind.static, 0
    kind_text, _, chunk_text = raw.strip().partition(",")
    try:
        kind = ScheduleKind[kind_text.strip().lower()]
        if kind in (ScheduleKind.runtime, ScheduleKind.unspecified):
            raise KeyError(kind_text)
        chunk = int(chunk_text) if chunk_text.strip() else 0
        if chunk < 0:
            raise ValueError(chunk_text)
    except (KeyError, ValueError):
        if raw not in _reported_schedules:
            _reported_schedules.add(raw)
            log.warning("malformed OMP_SCHEDULE=%r; using static", raw)
        return ScheduleKind.static, 0
    return kind, chunk


# -- teams -------------------------------------------------------------------

@dataclass
class ScheduleState:
    kind: ScheduleKind
    lower: int
    upper: int
    increment: int
    chunk: int
    trip_count: int
    nowait: bool
    cursor: int = 0
    finished: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def signature(self):
        return (self.kind, self.lower, self.upper, self.increment, self.chunk)


class Team:
    def __init__(self, size: int):
        self.size = size
        self._barrier = threading.Barrier(size) if size > 1 else None
        self._lock = threading.Lock()
        self._dispatch: dict[int, ScheduleState] = {}
        self.error: BaseException | None = None

    def barrier(self) -> None:
        if self.error is not None:
            raise TeamAborted("team aborted")
        if self._barrier is None:
            return
        try:
            self._barrier.wait()
        except threading.BrokenBarrierError:
            raise TeamAborted("team aborted") from None

    def abort(self, exc: BaseException) -> None:
        with self._lock:
            if self.error is None and not isinstance(exc, TeamAborted):
                self.error = exc
        if self._barrier is not None:
            self._barrier.abort()


@dataclass(eq=False)
class ThreadContext:
    thread_id: int
    team: Team
    static_active: bool = False
    dispatch_seq: int = 0
    dispatch: ScheduleState | None = None
    dispatch_seq_active: int = -1
    static_queue: deque | None = None

    @property
    def num_threads(self) -> int:
        return self.team.size


def barrier(team: Team | ThreadContext) -> None:
    if isinstance(team, ThreadContext):
        team = team.team
    team.barrier()


_pool: ThreadPoolExecutor | None = None
_pool_size = 0
_pool_lock = threading.Lock()


def _workers(n: int) -> ThreadPoolExecutor:
    global _pool, _pool_size
    with _pool_lock:
        if _pool is None or _pool_size < n:
            old = _pool
            _pool = ThreadPoolExecutor(max_workers=n, thread_name_prefix="omp-worker")
            _pool_size = n
            if old is not None:
                old.shutdown(wait=False)
        return _pool


def _member(fn, team: Team, tid: int, args) -> None:
    previous = current_context()
    _tls.ctx = ctx = ThreadContext(tid, team)
    try:
        fn(ctx, *args)
    except BaseException as exc:  # noqa: BLE001 - forwarded to the forking thread
        team.abort(exc)
    finally:
        _tls.ctx = previous


def fork_call(fn, firstprivate=None, shared=None, reduction=None,
              requested_threads: int | None = None) -> None:
    """Run ``fn(ctx, firstprivate, shared, reduction)`` once on every team thread.

    Blocks until the whole team has joined. A fork from inside an active team
    runs serialized on a team of one. The first exception raised by any member
    aborts the team and is re-raised here.
    """
    if requested_threads is not None and requested_threads < 1:
        raise ValueError("requested thread count must be positive")
    size = 1 if current_context() is not None else (requested_threads or get_max_threads())
    team = Team(size)
    args = (firstprivate, shared, reduction)
    if size == 1:
        _member(fn, team, 0, args)
    else:
        pool = _workers(size - 1)
        futures = [pool.submit(_member, fn, team, tid, args) for tid in range(1, size)]
        _member(fn, team, 0, args)
        wait(futures)
    if team.error is not None:
        raise team.error


# -- worksharing -------------------------------------------------------------

def trip_count(lower: int, upper: int, increment: int) -> int:
    """Iterations of ``for (i = lower; i < upper; i += increment)`` (``>`` when increment < 0)."""
    if increment == 0:
        raise ValueError("loop increment must not be zero")
    if increment > 0:
        return max(0, -((lower - upper) // increment))
    return max(0, -((upper - lower) // -increment))


def _static_ranges(n: int, size: int, tid: int, chunk: int) -> list[tuple[int, int]]:
    if chunk <= 0:
        q, r = divmod(n, size)
        lo = tid * q + min(tid, r)
        hi = lo + q + (1 if tid < r else 0)
        return [(lo, hi)] if hi > lo else []
    return [(k, min(k + chunk, n)) for k in range(tid * chunk, n, size * chunk)]


def static_init(ctx: ThreadContext, lower: int, upper: int, increment: int,
                chunk: int = 0) -> list[tuple[int, int]]:
    """This thread's normalized iteration ranges under a static schedule.

    Without a chunk the iteration space is split into contiguous blocks, the
    first ``n mod T`` threads taking one extra iteration. With a chunk, chunks
    are dealt round-robin in thread-id order.
    """
    n = trip_count(lower, upper, increment)
    if ctx.static_active:
        raise ContractError("static_init called again before static_fini")
    ctx.static_active = True
    return _static_ranges(n, ctx.team.size, ctx.thread_id, chunk)


def static_fini(ctx: ThreadContext) -> None:
    """Close a static loop; the closing barrier is a separate call (skipped for nowait)."""
    if not ctx.static_active:
        raise ContractError("static_fini without a matching static_init")
    ctx.static_active = False


def dispatch_init(ctx: ThreadContext, kind: ScheduleKind, lower: int, upper: int,
                  increment: int, chunk: int = 0, nowait: bool = False) -> None:
    """Install the team-wide schedule for a dynamic, guided or runtime loop."""
    kind = ScheduleKind(kind)
    n = trip_count(lower, upper, increment)
    if kind is ScheduleKind.runtime:
        kind, chunk = parse_schedule_env(os.environ.get("OMP_SCHEDULE"))
    elif kind is ScheduleKind.unspecified:
        kind = ScheduleKind.static
    if kind in (ScheduleKind.dynamic, ScheduleKind.guided) and chunk <= 0:
        chunk = 1
    if ctx.dispatch is not None:
        raise ContractError("dispatch_init called again before the previous loop finished")
    seq = ctx.dispatch_seq
    ctx.dispatch_seq += 1
    team = ctx.team
    with team._lock:
        state = team._dispatch.get(seq)
        if state is None:
            state = ScheduleState(kind, lower, upper, increment, chunk, n, nowait)
            team._dispatch[seq] = state
        elif state.signature != (kind, lower, upper, increment, chunk):
            raise ContractError(
                f"dispatch_init arguments differ across the team: {state.signature} vs "
                f"{(kind, lower, upper, increment, chunk)}"
            )
    ctx.dispatch = state
    ctx.dispatch_seq_active = seq
    if kind is ScheduleKind.static:
        ctx.static_queue = deque(_static_ranges(n, team.size, ctx.thread_id, chunk))


def dispatch_next(ctx: ThreadContext) -> tuple[int, int] | None:
    """Claim the next normalized chunk ``(lo, hi)``, or None once the loop is exhausted."""
    state = ctx.dispatch
    if state is None:
        raise ContractError("dispatch_next without dispatch_init")
    team = ctx.team
    if team.error is not None:
        raise TeamAborted("team aborted")
    got = None
    if state.kind is ScheduleKind.static:
        if ctx.static_queue:
            got = ctx.static_queue.popleft()
    else:
        with state.lock:
            lo, n = state.cursor, state.trip_count
            if lo < n:
                if state.kind is ScheduleKind.guided:
                    size = max(state.chunk, -(-(n - lo) // team.size))
                else:
                    size = state.chunk
                state.cursor = hi = min(lo + size, n)
                got = (lo, hi)
    if got is not None:
        return got
    ctx.dispatch = None
    ctx.static_queue = None
    with team._lock:
        state.finished += 1
        if state.finished == team.size:
            del team._dispatch[ctx.dispatch_seq_active]
    if not state.nowait:
        team.barrier()
    return None
