"""Bit-exact packing of directive clauses into 32-bit ``extra_data`` words.

A clause record occupies ten consecutive words::

    LOOP  = kind | chunk << 3                      (3 + 29 bits)
    MISC  = default | nowait << 2 | collapse << 3  (2 + 1 + 4 bits, rest zero)
    private_start, private_end
    firstprivate_start, firstprivate_end
    shared_start, shared_end
    reduction_start, reduction_end

Each (start, end) pair delimits a slice of identifier node indices written
immediately before the record. Reduction slices hold (op code, node index)
pairs inline.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

WORD_MASK = 0xFFFF_FFFF
CHUNK_LIMIT = 1 << 29          # chunk must be < 536870912
COLLAPSE_LIMIT = 1 << 4
RECORD_WORDS = 10


class ClauseError(ValueError):
    """A clause value that cannot be represented in the packed layout."""


class ScheduleKind(enum.IntEnum):
    unspecified = 0
    static = 1
    dynamic = 2
    guided = 3
    runtime = 4


class DefaultKind(enum.IntEnum):
    unspecified = 0
    shared = 1
    none = 2


class ReductionOp(enum.IntEnum):
    add = 0
    subtract = 1
    multiply = 2
    min = 3
    max = 4
    bit_and = 5
    bit_or = 6
    bit_xor = 7
    logical_and = 8
    logical_or = 9

    @property
    def symbol(self) -> str:
        return _OP_SYMBOLS[self]

    @classmethod
    def from_symbol(cls, text: str) -> "ReductionOp":
        return _SYMBOL_OPS[text]


_OP_SYMBOLS = {
    ReductionOp.add: "+",
    ReductionOp.subtract: "-",
    ReductionOp.multiply: "*",
    ReductionOp.min: "min",
    ReductionOp.max: "max",
    ReductionOp.bit_and: "&",
    ReductionOp.bit_or: "|",
    ReductionOp.bit_xor: "^",
    ReductionOp.logical_and: "and",
    ReductionOp.logical_or: "or",
}
_SYMBOL_OPS = {v: k for k, v in _OP_SYMBOLS.items()}


@dataclass(frozen=True)
class ScheduleSpec:
    kind: ScheduleKind = ScheduleKind.unspecified
    chunk: int = 0  # 0 means no chunk size given


@dataclass(frozen=True)
class ClauseSet:
    private: tuple[int, ...] = ()
    firstprivate: tuple[int, ...] = ()
    shared: tuple[int, ...] = ()
    reductions: tuple[tuple[ReductionOp, int], ...] = ()
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    default_kind: DefaultKind = DefaultKind.unspecified
    nowait: bool = False
    collapse: int = 0  # 0 means unspecified, i.e. one loop


def pack_loop(schedule: ScheduleSpec) -> int:
    if not 0 <= schedule.chunk < CHUNK_LIMIT:
        raise ClauseError(
            f"chunk size {schedule.chunk} out of range (maximum {CHUNK_LIMIT - 1})"
        )
    return int(schedule.kind) | (schedule.chunk << 3)


def unpack_loop(word: int) -> ScheduleSpec:
    if not 0 <= word <= WORD_MASK:
        raise ClauseError(f"LOOP word {word} is not a 32-bit value")
    try:
        kind = ScheduleKind(word & 0b111)
    except ValueError:
        raise ClauseError(f"malformed schedule kind {word & 0b111}") from None
    return ScheduleSpec(kind, word >> 3)


def pack_misc(default_kind: DefaultKind, nowait: bool, collapse: int) -> int:
    if not 0 <= collapse < COLLAPSE_LIMIT:
        raise ClauseError(f"collapse({collapse}) out of range (maximum {COLLAPSE_LIMIT - 1})")
    return int(default_kind) | (int(bool(nowait)) << 2) | (collapse << 3)


def unpack_misc(word: int) -> tuple[DefaultKind, bool, int]:
    if not 0 <= word <= WORD_MASK or word >> 7:
        raise ClauseError(f"malformed MISC word {word:#x}")
    try:
        default_kind = DefaultKind(word & 0b11)
    except ValueError:
        raise ClauseError(f"malformed default kind {word & 0b11}") from None
    return default_kind, bool(word >> 2 & 1), word >> 3 & 0xF


def _check_word(value: int) -> int:
    if not 0 <= value <= WORD_MASK:
        raise ClauseError(f"value {value} does not fit in 32 bits")
    return value


def encode(clauses: ClauseSet, extra: list[int]) -> int:
    """Append the clause record to ``extra`` and return the index of LOOP."""
    loop = pack_loop(clauses.schedule)
    misc = pack_misc(clauses.default_kind, clauses.nowait, clauses.collapse)
    bounds = []
    for nodes in (clauses.private, clauses.firstprivate, clauses.shared):
        start = len(extra)
        extra.extend(_check_word(n) for n in nodes)
        bounds += (start, len(extra))
    start = len(extra)
    for op, node in clauses.reductions:
        extra.append(int(ReductionOp(op)))
        extra.append(_check_word(node))
    bounds += (start, len(extra))
    record = len(extra)
    extra.append(loop)
    extra.append(misc)
    extra.extend(bounds)
    return record


def decode(extra: list[int], start: int) -> ClauseSet:
    """Inverse of :func:`encode`."""
    if not 0 <= start <= len(extra) - RECORD_WORDS:
        raise ClauseError(f"clause record index {start} out of range")
    schedule = unpack_loop(extra[start])
    default_kind, nowait, collapse = unpack_misc(extra[start + 1])
    slices = []
    for i in range(4):
        lo, hi = extra[start + 2 + 2 * i], extra[start + 3 + 2 * i]
        if not 0 <= lo <= hi <= len(extra):
            raise ClauseError(f"malformed slice bounds [{lo}, {hi})")
        slices.append(extra[lo:hi])
    reduction_words = slices[3]
    if len(reduction_words) % 2:
        raise ClauseError("reduction slice has odd length")
    reductions = []
    for k in range(0, len(reduction_words), 2):
        try:
            op = ReductionOp(reduction_words[k])
        except ValueError:
            raise ClauseError(f"malformed reduction operator {reduction_words[k]}") from None
        reductions.append((op, reduction_words[k + 1]))
    return ClauseSet(
        private=tuple(slices[0]),
        firstprivate=tuple(slices[1]),
        shared=tuple(slices[2]),
        reductions=tuple(reductions),
        schedule=schedule,
        default_kind=default_kind,
        nowait=nowait,
        collapse=collapse,
    )
