import pytest
from hypothesis import given, settings, strategies as st

from zomp.clauses import (
    CHUNK_LIMIT, RECORD_WORDS, ClauseError, ClauseSet, DefaultKind, ReductionOp, ScheduleKind,
    ScheduleSpec, decode, encode, pack_loop, pack_misc, unpack_loop, unpack_misc,
)

node = st.integers(min_value=0, max_value=0xFFFF_FFFF)
nodes = st.lists(node, max_size=6).map(tuple)
clause_sets = st.builds(
    ClauseSet,
    private=nodes,
    firstprivate=nodes,
    shared=nodes,
    reductions=st.lists(st.tuples(st.sampled_from(list(ReductionOp)), node), max_size=5).map(tuple),
    schedule=st.builds(ScheduleSpec, st.sampled_from(list(ScheduleKind)),
                       st.integers(min_value=0, max_value=CHUNK_LIMIT - 1)),
    default_kind=st.sampled_from(list(DefaultKind)),
    nowait=st.booleans(),
    collapse=st.integers(min_value=0, max_value=15),
)


@settings(max_examples=10_000, deadline=None)
@given(clause_sets, st.lists(node, max_size=4))
def test_roundtrip(clauses, prefix):
    extra = list(prefix)
    record = encode(clauses, extra)
    assert extra[:len(prefix)] == prefix
    assert len(extra) - record == RECORD_WORDS
    assert all(0 <= w <= 0xFFFF_FFFF for w in extra)
    assert decode(extra, record) == clauses


def test_worked_examples():
    assert pack_loop(ScheduleSpec(ScheduleKind.dynamic, 8)) == 66
    assert pack_misc(DefaultKind.none, True, 2) == 22
    assert unpack_loop(66) == ScheduleSpec(ScheduleKind.dynamic, 8)
    assert unpack_misc(22) == (DefaultKind.none, True, 2)


def test_chunk_boundary():
    top = pack_loop(ScheduleSpec(ScheduleKind.static, 536870911))
    assert top <= 0xFFFF_FFFF and unpack_loop(top).chunk == 536870911
    with pytest.raises(ClauseError):
        pack_loop(ScheduleSpec(ScheduleKind.static, 536870912))


def test_collapse_field_width():
    assert unpack_misc(pack_misc(DefaultKind.shared, False, 15))[2] == 15
    with pytest.raises(ClauseError):
        pack_misc(DefaultKind.shared, False, 16)


@pytest.mark.parametrize("word", [0b101, 0b110, 0b111])
def test_malformed_schedule_kind(word):
    with pytest.raises(ClauseError):
        unpack_loop(word)


@pytest.mark.parametrize("word", [0b11, 1 << 7, 1 << 31])
def test_malformed_misc(word):
    with pytest.raises(ClauseError):
        unpack_misc(word)


def test_decode_rejects_bad_records():
    extra = []
    record = encode(ClauseSet(private=(3,), reductions=((ReductionOp.add, 4),)), extra)
    with pytest.raises(ClauseError):
        decode(extra, record + 1)
    broken = list(extra)
    broken[record + 2], broken[record + 3] = 5, 2  # private slice with hi < lo
    with pytest.raises(ClauseError):
        decode(broken, record)
    odd = list(extra)
    odd[record + 9] -= 1
    with pytest.raises(ClauseError):
        decode(odd, record)
    bad_op = list(extra)
    bad_op[extra[record + 8]] = 99  # first reduction operator word
    with pytest.raises(ClauseError):
        decode(bad_op, record)


def test_reduction_symbols():
    for op in ReductionOp:
        assert ReductionOp.from_symbol(op.symbol) is op


def test_node_index_must_fit():
    with pytest.raises(ClauseError):
        encode(ClauseSet(shared=(1 << 32,)), [])
