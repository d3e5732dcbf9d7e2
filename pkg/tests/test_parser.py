import pytest

from zomp.ast import NodeKind
from zomp.clauses import DefaultKind, ReductionOp, ScheduleKind, decode
from zomp.errors import ParseError
from zomp.parser import eat_token, parse, parse_source, Parser
from zomp.tokens import TokenTag, tokenize


def body(stmts: str) -> str:
    return "fn main() void {\n" + stmts + "\n}\n"


def directive_nodes(ast):
    return [i for i in ast.walk() if ast[i].kind.name.startswith("omp_")]


def test_nested_directives_parse():
    ast = parse_source(body("""    var s: i64 = 0;
    //$omp parallel shared(s) default(none)
    {
        var i: i64 = 0;
        //$omp while schedule(dynamic, 8) reduction(+: s) nowait collapse(1)
        while (i < 10) : (i += 1) { s += i; }
    }"""))
    par, ws = directive_nodes(ast)
    assert ast[par].kind is NodeKind.omp_parallel and ast[ws].kind is NodeKind.omp_while
    pc = decode(ast.extra_data, ast[par].lhs)
    assert pc.default_kind is DefaultKind.none and [ast.name(n) for n in pc.shared] == ["s"]
    wc = decode(ast.extra_data, ast[ws].lhs)
    assert ast.extra_data[ast[ws].lhs] == 66
    assert wc.schedule.kind is ScheduleKind.dynamic and wc.schedule.chunk == 8
    assert wc.nowait and wc.collapse == 1
    assert [(op, ast.name(n)) for op, n in wc.reductions] == [(ReductionOp.add, "s")]
    assert ast[ast[ws].rhs].kind is NodeKind.while_loop


def test_directive_span_covers_governed_statement():
    src = body("    var x: i64 = 0;\n    //$omp atomic\n    x += 1;")
    ast = parse_source(src)
    (node,) = directive_nodes(ast)
    start, end = ast.node_span(node)
    assert src.encode()[start:end] == b"//$omp atomic\n    x += 1;"


def test_reduction_operator_spellings():
    ast = parse_source(body(
        "    var a: i64 = 0;\n    var b: bool = true;\n"
        "    //$omp parallel reduction(min: a) reduction(and: b)\n    { a = 1; b = false; }"))
    (node,) = directive_nodes(ast)
    ops = [op for op, _ in decode(ast.extra_data, ast[node].lhs).reductions]
    assert ops == [ReductionOp.min, ReductionOp.logical_and]


def test_omp_words_usable_as_identifiers():
    ast = parse_source(body("    var private: i64 = 1;\n    var static: i64 = private + 1;\n    print(static);"))
    assert not directive_nodes(ast)


def test_stripped_parse_ignores_directives():
    ast = parse_source(body("    //$omp bogus stuff\n    print(1);"), openmp=False)
    assert not directive_nodes(ast)


def test_eat_token_reinterprets_identifiers():
    p = Parser(tokenize("parallel x"), b"parallel x")
    assert eat_token(p, TokenTag.omp_private) is None
    tok = eat_token(p, TokenTag.omp_parallel)
    assert tok is not None and tok.text == "parallel"
    assert eat_token(p, TokenTag.omp_parallel) is None
    assert eat_token(p, TokenTag.identifier).text == "x"


@pytest.mark.parametrize("stmts, msg", [
    ("    //$omp teams\n    {}", "unknown directive 'teams'"),
    ("    //$omp parallel schedule(static)\n    {}", "not permitted on 'parallel'"),
    ("    //$omp parallel bogus(x)\n    {}", "unknown clause 'bogus'"),
    ("    var x: i64 = 0;\n    //$omp parallel private(x) shared(x)\n    { x = 1; }", "in both"),
    ("    var x: i64 = 0;\n    //$omp parallel private(x, x)\n    { x = 1; }", "twice"),
    ("    //$omp parallel default(none) default(shared)\n    {}", "duplicate clause"),
    ("    //$omp parallel private(\n    x)\n    {}", "must fit on one line"),
    ("    //$omp parallel reduction(%: x)\n    {}", "unknown reduction operator"),
    ("    //$omp parallel default(private)\n    {}", "default kind"),
    ("    //$omp parallel\n    {\n    var i: i64 = 0;\n    //$omp while schedule(fast)\n"
     "    while (i < 1) : (i += 1) {}\n    }", "unknown schedule kind"),
    ("    //$omp parallel\n    {\n    var i: i64 = 0;\n    //$omp while schedule(static, 0)\n"
     "    while (i < 1) : (i += 1) {}\n    }", "greater than 0"),
    ("    //$omp parallel\n    {\n    var i: i64 = 0;\n    //$omp while schedule(static, 536870912)\n"
     "    while (i < 1) : (i += 1) {}\n    }", "out of range"),
    ("    //$omp parallel\n    {\n    var i: i64 = 0;\n    //$omp while collapse(16)\n"
     "    while (i < 1) : (i += 1) {}\n    }", "out of range"),
    ("    //$omp parallel\n", "must be followed by a statement"),
    ("    //$omp", "directive ended before the directive name"),
])
def test_directive_errors(stmts, msg):
    with pytest.raises(ParseError) as info:
        parse_source(body(stmts))
    assert msg in str(info.value)
    assert info.value.line >= 2


def test_chunk_upper_boundary_accepted():
    ast = parse_source(body("    //$omp parallel\n    {\n    var i: i64 = 0;\n"
                            "    //$omp while schedule(guided, 536870911)\n    while (i < 1) : (i += 1) {}\n    }"))
    ws = directive_nodes(ast)[1]
    assert decode(ast.extra_data, ast[ws].lhs).schedule.chunk == 536870911


def test_directive_outside_function_rejected():
    with pytest.raises(ParseError, match="inside function bodies"):
        parse_source("//$omp parallel\nconst x: i64 = 1;\n")


@pytest.mark.parametrize("src, msg", [
    (body("    var x: i64 = 0;\n    { var x: i64 = 1; }"), "shadowing"),
    (body("    var __omp_x: i64 = 0;"), "reserved"),
    (body("    var len: i64 = 0;"), "builtin"),
    ("const g: i64 = 1;\nconst g: i64 = 2;\n", "redeclaration"),
    (body("    x = = 1;"), "expected an expression"),
    (body("    var a: i64 = 1 < 2 < 3;"), "chained"),
    ("fn main() void {\n", "before end of file"),
])
def test_syntax_errors(src, msg):
    with pytest.raises(ParseError, match=msg):
        parse_source(src)


def test_reserved_prefix_allowed_internally():
    parse_source(body("    var __omp_x: i64 = 0;\n    _ = __omp_x;"), internal=True)


def test_parse_requires_source():
    with pytest.raises(TypeError):
        parse(tokenize("fn main() void {}"))


def test_walk_is_preorder_with_root_first():
    ast = parse_source(body("    var x: i64 = 1 + 2;"))
    order = list(ast.walk())
    assert order[0] == 0
    kinds = [ast[i].kind for i in order]
    assert kinds.index(NodeKind.var_decl) < kinds.index(NodeKind.binary) < kinds.index(NodeKind.int_literal)
