import re

import pytest
from hypothesis import given, strategies as st

from zomp.errors import PreprocessError
from zomp.parser import parse_source
from zomp.preprocess import LoopBounds, PassKind, apply_edits, preprocess, preprocess_steps
from zomp.verify import check_fixture, fixture_paths, golden_path

from conftest import compile_serial, run_omp

FIXTURES = fixture_paths()
IDS = [p.stem for p in FIXTURES]


def test_fixture_corpus_covers_required_shapes():
    required = {"parallel_only", "while_only", "nested", "reductions", "atomic", "nowait", "static1", "collapse2"}
    assert required <= set(IDS)


@pytest.mark.parametrize("path", FIXTURES, ids=IDS)
def test_golden_byte_exact(path):
    assert preprocess(path.read_bytes()) == golden_path(path).read_bytes()


@pytest.mark.parametrize("path", FIXTURES, ids=IDS)
def test_fixpoint(path):
    golden = golden_path(path).read_bytes()
    assert preprocess(golden) == golden


@pytest.mark.parametrize("path", FIXTURES, ids=IDS)
def test_serial_equivalence_and_team_run(path):
    check = check_fixture(path, team=4)
    assert check.serial_equal and check.team_ok, check.detail


@pytest.mark.parametrize("src", [
    "",
    "fn main() void {}\n",
    "// only a comment\n//$ompx is not a sentinel\nfn main()   void {\n\tprint( 1 );   // trailing\n}",
    "const g: i64 = 3;\r\nfn main() void { print(g); }\r\n",
    "fn main() void {\n    // $omp parallel (space after the slashes)\n    print(\"//$omp in a string\");\n}\n",
])
def test_sentinel_free_passthrough(src):
    assert preprocess(src) == src
    assert preprocess(src.encode()) == src.encode()


def test_string_and_bytes_results_agree():
    src = FIXTURES[0].read_text()
    assert preprocess(src).encode() == preprocess(src.encode())


def test_every_round_is_valid_and_passes_run_in_order():
    src = next(p for p in FIXTURES if p.stem == "nested").read_bytes()
    kinds = []
    for kind, text in preprocess_steps(src):
        kinds.append(kind)
        parse_source(text, internal=True)
    assert kinds == sorted(kinds, key=list(PassKind).index)
    assert PassKind.parallel in kinds and PassKind.while_ws in kinds


def test_text_outside_directives_is_untouched():
    src = FIXTURES[0].read_bytes()
    first = src.index(b"//$omp")
    line_start = src.rindex(b"\n", 0, first) + 1
    for _, text in preprocess_steps(src):
        assert text[:line_start] == src[:line_start]


def test_generated_ids_are_unique():
    src = ("fn main() void {\n    var a: i64 = 0;\n"
           + "    //$omp parallel reduction(+: a)\n    { a += 1; }\n" * 3 + "    print(a > 0);\n}\n")
    out = preprocess(src)
    names = re.findall(r"^fn (__omp_outlined_\d+)", out, re.M)
    assert len(names) == 3 == len(set(names))


def test_output_has_no_sentinels():
    for path in FIXTURES:
        assert b"//$omp" not in golden_path(path).read_bytes()


def test_nowait_skips_barrier():
    out = preprocess(next(p for p in FIXTURES if p.stem == "nowait").read_text())
    assert "omp_static_fini" in out
    static_part = out.split("omp_static_fini(__omp_ctx);", 1)[1].split("\n", 2)[1]
    assert "omp_barrier" not in static_part
    assert "omp_dispatch_init(__omp_ctx, .guided" in out


def test_atomic_lowering_forms():
    out = preprocess(next(p for p in FIXTURES if p.stem == "atomic").read_text())
    assert "omp_atomic_rmw(count, .add, 1);" in out
    assert "omp_cas_reduce(product, .multiply, 2);" in out
    assert "omp_atomic_rmw(best, .max, tid + 10);" in out


@pytest.mark.parametrize("cmp, upper, expected", [
    ("<", "n", "n"), ("<=", "n", "(n) + 1"), (">", "0", "0"), (">=", "0", "(0) - 1")])
def test_exclusive_upper(cmp, upper, expected):
    assert LoopBounds("i", "0", upper, cmp, "1", 1).exclusive_upper == expected


LOWER_BOUND = """fn main() void {
    const n: i64 = 10;
    var i: i64 = 4;
    var seen: i64 = 0;
    i = 6;
    //$omp parallel reduction(+: seen)
    {
        //$omp while
        while (i < n) : (i += 1) {
            seen += 1;
        }
    }
    print(seen);
}
"""


def test_lower_bound_is_counter_value_at_entry():
    out = run_omp(LOWER_BOUND, threads=3)
    assert out.output == compile_serial(LOWER_BOUND).run("main").output == "4\n"


def test_counter_after_region_and_private_counter():
    src = """fn main() void {
    var i: i64 = 0;
    var total: i64 = 0;
    //$omp parallel reduction(+: total)
    {
        //$omp while
        while (i < 9) : (i += 3) {
            total += i;
        }
    }
    print(total, i);
}
"""
    # the counter is implicitly firstprivate in the region, so the original keeps its value
    assert run_omp(src, threads=2).output == "9 0\n"


def _body(stmts):
    return "fn main() void {\n" + stmts + "\n}\n"


@pytest.mark.parametrize("stmts, msg, line", [
    ("    var i: i64 = 0;\n    //$omp while\n    while (i < 3) : (i += 1) {}", "orphaned", 3),
    ("    //$omp parallel\n    {\n        var i: i64 = 0;\n        //$omp while collapse(3)\n"
     "        while (i < 3) : (i += 1) {}\n    }", "collapse(3)", 5),
    ("    var x: i64 = 0;\n    //$omp atomic\n    x = 3;", "does not support the '='", 4),
    ("    var x: i64 = 0;\n    //$omp atomic\n    print(x);", "compound assignment", 4),
    ("    //$omp parallel\n    {\n        var i: i64 = 0;\n        //$omp while\n"
     "        while (i < 3) : (i += 1) { break; }\n    }", "break", 6),
    ("    //$omp parallel\n    {\n        var i: i64 = 0;\n        //$omp while\n"
     "        while (i < 3) : (i += 1) { i += 1; }\n    }", "must not be modified", 6),
    ("    //$omp parallel\n    {\n        var i: i64 = 0;\n        //$omp while\n"
     "        while (i < 3) : (i += 0) {}\n    }", "must not be zero", 6),
    ("    //$omp parallel\n    {\n        return;\n    }", "return is not allowed", 4),
    ("    var x: i64 = 0;\n    //$omp parallel default(none)\n    { x = 1; }", "default(none)", 4),
    ("    //$omp parallel\n    {\n        var i: i64 = 0;\n        var j: i64 = 0;\n        //$omp while\n"
     "        while (i < 3) : (i += 1) {\n            //$omp while\n"
     "            while (j < 3) : (j += 1) {}\n        }\n    }", "closely nested", 8),
])
def test_lowering_errors_use_original_coordinates(stmts, msg, line):
    with pytest.raises(PreprocessError) as info:
        preprocess(_body(stmts))
    assert msg in str(info.value)
    assert info.value.line == line


def _reference_splice(source, edits):
    out, pos = b"", 0
    for start, end, text in sorted(edits, key=lambda e: (e[0], e[1])):
        out += source[pos:start] + text
        pos = end
    return out + source[pos:]


@st.composite
def disjoint_edits(draw):
    source = draw(st.binary(min_size=0, max_size=40))
    cuts = sorted(draw(st.lists(st.integers(0, len(source)), max_size=8)))
    edits = []
    for a, b in zip(cuts[::2], cuts[1::2]):
        edits.append((a, b, draw(st.binary(max_size=6))))
    return source, draw(st.permutations(edits))


@given(disjoint_edits())
def test_apply_edits_matches_reference(case):
    source, edits = case
    assert apply_edits(source, list(edits)) == _reference_splice(source, edits)


def test_apply_edits_rejects_overlap():
    with pytest.raises(ValueError):
        apply_edits(b"abcdef", [(0, 3, b"x"), (2, 4, b"y")])
    with pytest.raises(ValueError):
        apply_edits(b"abc", [(2, 9, b"")])


def test_remaining_sentinels_start_lines_after_every_round():
    from zomp.tokens import TokenTag, tokenize

    for path in FIXTURES:
        for _, text in preprocess_steps(path.read_bytes()):
            for tok in tokenize(text):
                if tok.tag is TokenTag.omp_sentinel:
                    line_start = text.rfind(b"\n", 0, tok.start) + 1
                    assert text[tok.start:tok.start + 6] == b"//$omp"
                    assert text[line_start:tok.start].strip() == b""


def test_member_names_are_not_rewritten():
    from zomp.preprocess import _Tree, rewrite_shared_accesses

    src = """const Box = struct { n: i64 };
fn main() void {
    var n: i64 = 3;
    var obj: Box = Box{ .n = 1 };
    var a: [4]i64 = [4]i64{ 0, 0, 0, 0 };
    //$omp parallel shared(n, a)
    {
        a[0] = a[0] + obj.n + n;
    }
    print(a[0]);
}
"""
    tree = _Tree(parse_source(src))
    region = next(i for i in tree.ast.walk() if tree.kind(i).name == "omp_parallel")
    edits = rewrite_shared_accesses(tree, tree.ast[region].rhs, {"n", "a"})
    assert sorted(edits.values()) == ["a.*", "a.*", "n.*"]
    out = preprocess(src)
    assert "a.*[0] = a.*[0] + obj.*.n + n.*;" in out  # obj is implicitly shared; its member is not
    assert run_omp(src, threads=1).output == "4\n"


def test_strided_loop_covers_expected_iterations():
    src = """fn main(hits: []i64) void {
    //$omp parallel
    {
        var i: i64 = 0;
        //$omp while schedule(dynamic, 2)
        while (i < 10) : (i += 2) {
            //$omp atomic
            hits[i] += 1;
        }
    }
}"""
    from conftest import compile_omp

    for threads in (1, 3):
        hits = [0] * 10
        assert compile_omp(src).run("main", (hits,), threads=threads).error is None
        assert hits == [1, 0] * 5
