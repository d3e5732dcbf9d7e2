"""Multi-pass source-to-source lowering of OpenMP directives.

Three passes run in order: ``parallel`` regions are outlined into functions
started by ``omp_fork_call``; worksharing ``while`` loops inside the outlined
functions become schedule-driven runtime calls; ``atomic`` statements become
atomic read-modify-write intrinsics. Every round re-parses the current text,
collects one payload per outermost directive of the pass's kind and splices
the replacements in from left to right, shifting later offsets by the size
change of each splice. A pass repeats until no directive of its kind is left,
which is how nested regions get handled.
"""

from __future__ import annotations

import dataclasses
import enum
import itertools
import re
from dataclasses import dataclass, field

from .ast import Ast, NodeKind, OMP_KINDS
from .clauses import ClauseSet, DefaultKind, ReductionOp, ScheduleKind, decode
from .errors import PreprocessError
from .parser import parse_source
from .tokens import SENTINEL, TokenTag, tokenize

GENERATED_PREFIX = "__omp_"
OUTLINED_PREFIX = "__omp_outlined_"
INDENT = "    "


class PassKind(enum.Enum):
    parallel = NodeKind.omp_parallel
    while_ws = NodeKind.omp_while
    atomic = NodeKind.omp_atomic


@dataclass(frozen=True)
class LoopBounds:
    counter: str
    lower: str
    upper: str
    comparison: str
    increment: str
    sign: int

    @property
    def exclusive_upper(self) -> str:
        """Upper bound with ``<=``/``>=`` turned into an exclusive bound."""
        if self.comparison == "<=":
            return f"({self.upper}) + 1"
        if self.comparison == ">=":
            return f"({self.upper}) - 1"
        return self.upper


@dataclass(frozen=True)
class Capture:
    name: str
    type: str               # value type of the variable
    pointer: bool = False   # bound to a shared reference cell (uses appear as ``name.*``)
    op: ReductionOp | None = None


@dataclass
class ReplacementPayload:
    kind: PassKind
    span: tuple[int, int]
    clauses: ClauseSet
    id: int
    node: int
    function: int
    bounds: tuple[LoopBounds, ...] = ()
    captures: dict[str, tuple[Capture, ...]] = field(default_factory=dict)


Edit = tuple[int, int, bytes]


def apply_edits(source: bytes, edits: list[Edit]) -> bytes:
    """Splice ``(start, end, text)`` edits into ``source`` left to right.

    Spans refer to the original buffer; each splice moves later spans by its
    size delta. Spans must be pairwise disjoint (insertions at one point keep
    their list order).
    """
    out = bytearray(source)
    delta = 0
    last_end = 0
    for start, end, text in sorted(edits, key=lambda e: (e[0], e[1])):
        if start < last_end or not 0 <= start <= end <= len(source):
            raise ValueError(f"overlapping or out-of-range edit [{start}, {end})")
        out[start + delta:end + delta] = text
        delta += len(text) - (end - start)
        last_end = end
    return bytes(out)


# -- syntax helpers ------------------------------------------------------------

class _Tree:
    """An AST plus the parent links and text access the passes need."""

    def __init__(self, ast: Ast):
        self.ast = ast
        self.src = ast.source
        self.parent = [0] * len(ast.nodes)
        for i in ast.walk(0):
            for c in ast.children(i):
                self.parent[c] = i
        for i, node in enumerate(ast.nodes):
            if node.kind in OMP_KINDS:
                for name_node in self.clause_nodes(i):
                    self.parent[name_node] = i

    def text(self, i: int) -> str:
        n = self.ast[i]
        return self.src[n.start:n.end].decode("utf-8")

    def kind(self, i: int) -> NodeKind:
        return self.ast[i].kind

    def clauses(self, directive: int) -> ClauseSet:
        return decode(self.ast.extra_data, self.ast[directive].lhs)

    def clause_nodes(self, directive: int) -> list[int]:
        cs = self.clauses(directive)
        return [*cs.private, *cs.firstprivate, *cs.shared, *(n for _, n in cs.reductions)]

    def ancestors(self, i: int):
        while i:
            i = self.parent[i]
            yield i

    def enclosing_fn(self, i: int) -> int:
        for a in self.ancestors(i):
            if self.kind(a) is NodeKind.fn_decl:
                return a
        return 0

    def walk(self, i: int, *, into_parallel: bool = True):
        stack = [i]
        while stack:
            j = stack.pop()
            yield j
            if j != i and not into_parallel and self.kind(j) is NodeKind.omp_parallel:
                continue
            stack.extend(reversed(self.ast.children(j)))

    def outermost(self, kind: NodeKind) -> list[int]:
        found = []
        for i, node in enumerate(self.ast.nodes):
            if node.kind is kind and not any(self.kind(a) is kind for a in self.ancestors(i)):
                found.append(i)
        return sorted(found, key=lambda i: self.ast[i].start)

    def visible(self, i: int) -> dict[str, int]:
        """Local declarations (and parameters) in scope at node ``i``."""
        names: dict[str, int] = {}
        child = i
        for a in self.ancestors(i):
            kind = self.kind(a)
            if kind is NodeKind.block:
                for stmt in self.ast.items(a):
                    if stmt == child:
                        break
                    if self.kind(stmt) in (NodeKind.var_decl, NodeKind.const_decl):
                        names[self.ast.name(stmt)] = stmt
            elif kind is NodeKind.fn_decl:
                for p in self.ast.fn_parts(a)[0]:
                    names[self.ast.name(p)] = p
                break
            child = a
        return names

    def globals(self) -> dict[str, int]:
        return {self.ast.name(d): d for d in self.ast.items(0)}

    def fail(self, i: int, message: str) -> PreprocessError:
        return PreprocessError(message, self.ast[i].start, self.src)

    def fail_at(self, offset: int, message: str) -> PreprocessError:
        return PreprocessError(message, offset, self.src)


_CALL_TYPES = {
    "float": "f64", "sqrt": "f64", "abs": None, "floor": "f64", "log": "f64", "exp": "f64",
    "now_seconds": "f64", "int": "i64", "len": "i64", "omp_trip_count": "i64",
}


def _infer_type(tree: _Tree, expr: int) -> str | None:
    ast = tree.ast
    kind = tree.kind(expr)
    if kind is NodeKind.int_literal:
        return "i64"
    if kind is NodeKind.float_literal:
        return "f64"
    if kind is NodeKind.bool_literal:
        return "bool"
    if kind in (NodeKind.unary, NodeKind.grouped):
        if kind is NodeKind.unary and ast.op(expr) == "!":
            return "bool"
        if kind is NodeKind.unary and ast.op(expr) == "&":
            inner = _infer_type(tree, ast[expr].lhs)
            return None if inner is None else "*" + inner
        return _infer_type(tree, ast[expr].lhs)
    if kind is NodeKind.binary:
        op = ast.op(expr)
        if op in ("==", "!=", "<", "<=", ">", ">=", "and", "or"):
            return "bool"
        left = _infer_type(tree, ast[expr].lhs)
        right = _infer_type(tree, ast[expr].rhs)
        if left is None or right is None:
            return None
        return "f64" if "f64" in (left, right) else left
    if kind is NodeKind.struct_init:
        return tree.text(ast[expr].lhs)
    if kind is NodeKind.array_init:
        type_node, items = ast.list_parts(expr)
        tn = ast[type_node]
        length = tree.text(tn.lhs) if tn.lhs else str(len(items))
        return f"[{length}]{tree.text(tn.rhs)}"
    if kind is NodeKind.call:
        callee, args = ast.list_parts(expr)
        if tree.kind(callee) is NodeKind.identifier:
            name = ast.name(callee)
            if name == "alloc" and len(args) == 2:
                return "[]" + tree.text(args[0])
            if name == "cast" and len(args) == 2:
                return tree.text(args[0])
            if name in ("min", "max", "abs") and args:
                return _infer_type(tree, args[0]) or (_infer_type(tree, args[1]) if len(args) > 1 else None)
            if name in _CALL_TYPES:
                return _CALL_TYPES[name]
            decl = tree.globals().get(name)
            if decl and tree.kind(decl) is NodeKind.fn_decl:
                return tree.text(ast.fn_parts(decl)[1])
        if tree.kind(callee) is NodeKind.field and tree.text(ast[callee].lhs) == "omp":
            return "f64" if ast.name(callee) == "get_wtime" else "i64"
    if kind is NodeKind.identifier:
        name = ast.name(expr)
        if name in ("i64_max", "i64_min"):
            return "i64"
        if name == "inf":
            return "f64"
        decl = tree.visible(expr).get(name)
        if decl is not None:
            try:
                return _binding(tree, decl, name)[0]
            except PreprocessError:
                return None
    if kind is NodeKind.index:
        base = _infer_type(tree, ast[expr].lhs)
        if base is not None:
            match = re.match(r"\*?\[[^\]]*\](.*)", base)
            return match.group(1) if match else None
    return None


def _binding(tree: _Tree, decl: int, name: str) -> tuple[str, bool]:
    """(value type text, is shared reference binding) of a declaration."""
    ast = tree.ast
    node = ast[decl]
    type_text = tree.text(node.lhs) if node.lhs else None
    if node.kind is NodeKind.param:
        type_text = tree.text(node.lhs)
    elif type_text is None:
        type_text = _infer_type(tree, node.rhs)
    if type_text is None:
        raise tree.fail(decl, f"cannot infer the type of '{name}' for data sharing; add a type annotation")
    pointer = (node.kind is NodeKind.const_decl and node.rhs
               and tree.text(node.rhs).startswith(GENERATED_PREFIX + "sh.") and type_text.startswith("*"))
    if pointer:
        return type_text[1:], True
    return type_text, False


def _identity(op: ReductionOp, type_text: str) -> str:
    if type_text == "bool":
        if op is ReductionOp.logical_and:
            return "true"
        if op is ReductionOp.logical_or:
            return "false"
        raise ValueError(f"reduction '{op.symbol}' is not defined on bool")
    if op in (ReductionOp.logical_and, ReductionOp.logical_or):
        raise ValueError(f"reduction '{op.symbol}' needs a bool variable, found {type_text}")
    if type_text == "f64":
        if op in (ReductionOp.bit_and, ReductionOp.bit_or, ReductionOp.bit_xor):
            raise ValueError(f"reduction '{op.symbol}' is not defined on f64")
        return {ReductionOp.multiply: "1.0", ReductionOp.min: "inf", ReductionOp.max: "-inf"}.get(op, "0.0")
    if type_text != "i64":
        raise ValueError(f"reduction variables must be i64, f64 or bool, found {type_text}")
    return {ReductionOp.multiply: "1", ReductionOp.min: "i64_max", ReductionOp.max: "i64_min",
            ReductionOp.bit_and: "-1"}.get(op, "0")


def combine_statement(op: ReductionOp, target: str, value: str) -> str:
    """Fold a thread-local partial result into the shared reduction cell."""
    if op is ReductionOp.subtract:
        op = ReductionOp.add  # partial differences are summed
    intrinsic = "omp_cas_reduce" if op in (ReductionOp.multiply, ReductionOp.logical_and,
                                           ReductionOp.logical_or) else "omp_atomic_rmw"
    return f"{intrinsic}({target}, .{op.name}, {value});"


def _line_indent(src: bytes, offset: int) -> str:
    start = src.rfind(b"\n", 0, offset) + 1
    prefix = src[start:offset].decode("utf-8")
    return prefix[:len(prefix) - len(prefix.lstrip(" \t"))]


def _dedent(text: str) -> list[str]:
    lines = [line.rstrip() for line in text.split("\n")]
    while lines and not lines[0].strip():
        lines.pop(0)
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        return []
    rest = [line for line in lines[1:] if line.strip()]
    widths = [len(line) - len(line.lstrip(" \t")) for line in rest]
    cut = min(widths) if widths else 0
    first = lines[0].lstrip(" \t")
    return [first] + [line[cut:] if line.strip() else "" for line in lines[1:]]


def _indent(lines: list[str], prefix: str) -> list[str]:
    return [prefix + line if line else "" for line in lines]


def _statement_lines(tree: _Tree, stmt: int, renames: dict[int, str]) -> list[str]:
    """Source lines of a governed statement (block braces removed) with node texts replaced."""
    n = tree.ast[stmt]
    start, end = n.start, n.end
    if n.kind is NodeKind.block:
        start, end = start + 1, end - 1
    edits = []
    for node, text in renames.items():
        nd = tree.ast[node]
        if start <= nd.start and nd.end <= end:
            edits.append((nd.start - start, nd.end - start, text.encode("utf-8")))
    body = apply_edits(tree.src[start:end], edits).decode("utf-8")
    return _dedent(body)


def _site(lines: list[str], indent: str) -> bytes:
    """A replacement that starts at the directive's column."""
    out = [lines[0]] + _indent(lines[1:], indent)
    return "\n".join(out).encode("utf-8")


def _identifiers(tree: _Tree, root: int) -> list[int]:
    return [i for i in tree.walk(root) if tree.kind(i) is NodeKind.identifier]


def _named(tree: _Tree, cs: ClauseSet) -> ClauseSet:
    name = tree.ast.name
    return dataclasses.replace(
        cs,
        private=tuple(name(n) for n in cs.private),
        firstprivate=tuple(name(n) for n in cs.firstprivate),
        shared=tuple(name(n) for n in cs.shared),
        reductions=tuple((op, name(n)) for op, n in cs.reductions),
    )


def _assigns_to(tree: _Tree, root: int, name: str) -> int:
    """A node in ``root`` that writes ``name`` (assignment target or address-of), or 0."""
    ast = tree.ast
    for i in tree.walk(root):
        kind = tree.kind(i)
        target = 0
        if kind is NodeKind.assign:
            target = ast[i].lhs
        elif kind is NodeKind.unary and ast.op(i) == "&":
            target = ast[i].lhs
        if target and tree.kind(target) is NodeKind.identifier and ast.name(target) == name:
            return i
    return 0


# -- parallel regions -----------------------------------------------------------

class Preprocessor:
    def __init__(self, source: bytes):
        self.source = source
        self.ids = itertools.count(1)

    def parse(self) -> _Tree:
        return _Tree(parse_source(self.source, internal=True))

    # Each round returns the edits for the outermost directives of one kind.
    def round(self, kind: PassKind) -> bool:
        tree = self.parse()
        nodes = tree.outermost(kind.value)
        if not nodes:
            return False
        edits: list[Edit] = []
        for node in nodes:
            payload = self.payload(tree, kind, node)
            if kind is PassKind.parallel:
                edits += outline_parallel(payload, tree)
            elif kind is PassKind.while_ws:
                edits += lower_worksharing(payload, tree)
            else:
                edits += lower_atomic(payload, tree)
        self.source = apply_edits(self.source, edits)
        return True

    def payload(self, tree: _Tree, kind: PassKind, node: int) -> ReplacementPayload:
        fn = tree.enclosing_fn(node)
        payload = ReplacementPayload(kind, tree.ast[node].span, _named(tree, tree.clauses(node)),
                                     next(self.ids), node, fn)
        if kind is PassKind.parallel:
            payload.captures = parallel_captures(tree, node)
        elif kind is PassKind.while_ws:
            payload.bounds = worksharing_bounds(tree, node)
            payload.captures = worksharing_captures(tree, node)
        return payload


def parallel_captures(tree: _Tree, directive: int) -> dict[str, tuple[Capture, ...]]:
    """Classify every enclosing-scope variable the region refers to."""
    ast = tree.ast
    cs = tree.clauses(directive)
    body = ast[directive].rhs
    visible = tree.visible(directive)
    global_names = tree.globals()

    for i in tree.walk(body):
        if tree.kind(i) is NodeKind.return_stmt:
            raise tree.fail(i, "return is not allowed inside a parallel region")

    listed: dict[str, tuple[str, ReductionOp | None, int]] = {}
    for cls, nodes in (("private", cs.private), ("firstprivate", cs.firstprivate), ("shared", cs.shared)):
        for n in nodes:
            listed[ast.name(n)] = (cls, None, n)
    for op, n in cs.reductions:
        listed[ast.name(n)] = ("reduction", op, n)
    for name, (cls, _, n) in listed.items():
        if name in visible:
            continue
        if name in global_names and cls == "shared":
            continue
        raise tree.fail(n, f"'{name}' in clause '{cls}' is not a local variable of the enclosing function")

    used: dict[str, int] = {}
    for i in _identifiers(tree, body):
        used.setdefault(ast.name(i), i)
    for i in tree.walk(body):
        if tree.kind(i) in OMP_KINDS:
            for n in tree.clause_nodes(i):
                used.setdefault(ast.name(n), n)

    counters = set()
    for i in tree.walk(body, into_parallel=False):
        if tree.kind(i) is NodeKind.omp_while:
            counters.update(b.counter for b in _loop_counters(tree, i))

    groups: dict[str, list[Capture]] = {"private": [], "firstprivate": [], "shared": [], "reduction": []}
    for name, first_use in used.items():
        if name not in visible:
            continue
        decl = visible[name]
        cls, op, _ = listed.get(name, (None, None, 0))
        if cls is None:
            if name in counters:
                cls = "firstprivate"
            elif cs.default_kind is DefaultKind.none:
                raise tree.fail(first_use, f"'{name}' must appear in a data-sharing clause (default(none))")
            else:
                cls = "shared"
        type_text, pointer = _binding(tree, decl, name)
        if op is not None:
            try:
                _identity(op, type_text)
            except ValueError as exc:
                raise tree.fail(listed[name][2], str(exc)) from None
        groups[cls].append(Capture(name, type_text, pointer, op))
    return {k: tuple(v) for k, v in groups.items()}


def _pointer_uses(tree: _Tree, root: int, names: set[str]) -> dict[int, str]:
    """``name.*`` dereference nodes of reference bindings, keyed by node."""
    ast = tree.ast
    out = {}
    for i in tree.walk(root):
        if tree.kind(i) is NodeKind.deref:
            inner = ast[i].lhs
            if tree.kind(inner) is NodeKind.identifier and ast.name(inner) in names:
                out[i] = ast.name(inner)
    return out


def rewrite_shared_accesses(tree: _Tree, body: int, names: set[str]) -> dict[int, str]:
    """Replacement texts turning each use of a shared variable into a dereference.

    Identity is syntactic: an identifier node whose text is a shared name is a
    use of it (shadowing is illegal). Member names after a period are field
    nodes, not identifiers, so they are never touched.
    """
    return {i: tree.ast.name(i) + ".*" for i in _identifiers(tree, body) if tree.ast.name(i) in names}


def outline_parallel(payload: ReplacementPayload, tree: _Tree) -> list[Edit]:
    ast = tree.ast
    uid = payload.id
    node = payload.node
    body = ast[node].rhs
    caps = payload.captures
    fp, sh, rd, priv = caps["firstprivate"], caps["shared"], caps["reduction"], caps["private"]

    renames = rewrite_shared_accesses(tree, body, {c.name for c in sh if not c.pointer})
    by_value = {c.name for c in (*fp, *rd, *priv) if c.pointer}
    renames.update({i: name for i, name in _pointer_uses(tree, body, by_value).items()})
    body_lines = _statement_lines(tree, body, renames)

    decls: list[str] = []
    prelude: list[str] = []
    site: list[str] = ["{"]
    args: list[str] = []
    for group, caps_ in (("fp", fp), ("sh", sh), ("rd", rd)):
        handle = f"{GENERATED_PREFIX}{group}_h"
        if not caps_:
            prelude.append(f"_ = {handle};")
            args.append("null")
            continue
        type_name = f"{GENERATED_PREFIX}{group}_t_{uid}"
        var = f"{GENERATED_PREFIX}{group}_{uid}"
        fields, inits = [], []
        for c in caps_:
            ftype = c.type if group == "fp" else "*" + c.type
            fields.append(f"{INDENT}{c.name}: {ftype},")
            if group == "fp":
                inits.append(f".{c.name} = {c.name}.*" if c.pointer else f".{c.name} = {c.name}")
            else:
                inits.append(f".{c.name} = {c.name}" if c.pointer else f".{c.name} = &{c.name}")
        decls.append(f"const {type_name} = struct {{\n" + "\n".join(fields) + "\n};")
        site.append(f"{INDENT}const {var} = {type_name}{{ {', '.join(inits)} }};")
        args.append("&" + var)
        local = f"{GENERATED_PREFIX}{group}"
        prelude.append(f"const {local} = cast(*{type_name}, {handle});")
    for c in fp:
        prelude.append(f"var {c.name}: {c.type} = {GENERATED_PREFIX}fp.{c.name};")
    for c in sh:
        prelude.append(f"const {c.name}: *{c.type} = {GENERATED_PREFIX}sh.{c.name};")
    for c in rd:
        prelude.append(f"var {c.name}: {c.type} = {_identity(c.op, c.type)};")
    for c in priv:
        prelude.append(f"var {c.name}: {c.type} = undefined;")
        if not c.pointer:
            site.append(f"{INDENT}_ = {c.name};")
    has_ws = any(tree.kind(i) is NodeKind.omp_while for i in tree.walk(body, into_parallel=False))
    if not has_ws:
        prelude.insert(0, f"_ = {GENERATED_PREFIX}ctx;")
    combine = [combine_statement(c.op, f"{GENERATED_PREFIX}rd.{c.name}", c.name) for c in rd]

    fn_name = f"{OUTLINED_PREFIX}{uid}"
    params = ", ".join([f"{GENERATED_PREFIX}ctx: omp_ctx"] +
                       [f"{GENERATED_PREFIX}{g}_h: *anyopaque" for g in ("fp", "sh", "rd")])
    fn_lines = [f"fn {fn_name}({params}) void {{"] + _indent(prelude + body_lines + combine, INDENT) + ["}"]
    decls.append("\n".join(fn_lines))

    site.append(f"{INDENT}omp_fork_call({fn_name}, {', '.join(args)});")
    site.append("}")
    indent = _line_indent(tree.src, payload.span[0])
    fn_end = ast[payload.function].end
    return [
        (payload.span[0], payload.span[1], _site(site, indent)),
        (fn_end, fn_end, ("".join("\n\n" + d for d in decls)).encode("utf-8")),
    ]


# -- worksharing loops -----------------------------------------------------------

def _loop_counters(tree: _Tree, directive: int) -> list[LoopBounds]:
    try:
        return list(worksharing_bounds(tree, directive, check=False))
    except PreprocessError:
        return []


def _preceding_init(tree: _Tree, stmt: int, counter: str) -> str | None:
    """Initializer text when the statement just before ``stmt`` sets ``counter``."""
    ast = tree.ast
    parent = tree.parent[stmt]
    if tree.kind(parent) is not NodeKind.block:
        return None
    items = ast.items(parent)
    k = items.index(stmt)
    if k == 0:
        return None
    prev = items[k - 1]
    kind = tree.kind(prev)
    if kind in (NodeKind.var_decl, NodeKind.const_decl) and ast.name(prev) == counter:
        init = ast[prev].rhs
        return None if tree.kind(init) is NodeKind.undefined_literal else tree.text(init)
    if kind is NodeKind.assign and ast.op(prev) == "=":
        target = ast[prev].lhs
        if tree.kind(target) is NodeKind.identifier and ast.name(target) == counter:
            return tree.text(ast[prev].rhs)
    return None


def _simple(text: str) -> bool:
    return re.fullmatch(r"[A-Za-z_0-9.]+", text) is not None


def _bounds_of(tree: _Tree, loop: int, at: int, lower: str | None) -> LoopBounds:
    ast = tree.ast
    cond, cont, _ = ast.while_parts(loop)
    if tree.kind(cond) is not NodeKind.binary or ast.op(cond) not in ("<", "<=", ">", ">="):
        raise tree.fail(cond, "worksharing loop condition must compare the counter with <, <=, > or >=")
    left = ast[cond].lhs
    if tree.kind(left) is not NodeKind.identifier:
        raise tree.fail(left, "worksharing loop condition must have the loop counter on the left")
    counter = ast.name(left)
    cmp = ast.op(cond)
    if not cont:
        raise tree.fail(at, "worksharing loop needs a continuation expression, e.g. ': (i += 1)'")
    step_text = None
    if tree.kind(cont) is NodeKind.assign:
        target, value = ast[cont].lhs, ast[cont].rhs
        if tree.kind(target) is NodeKind.identifier and ast.name(target) == counter:
            op = ast.op(cont)
            if op in ("+=", "-="):
                step_text = tree.text(value)
                negate = op == "-="
            elif op == "=" and tree.kind(value) is NodeKind.binary and ast.op(value) in ("+", "-"):
                vl = ast[value].lhs
                if tree.kind(vl) is NodeKind.identifier and ast.name(vl) == counter:
                    step_text = tree.text(ast[value].rhs)
                    negate = ast.op(value) == "-"
    if step_text is None:
        raise tree.fail(cont, f"worksharing loop continuation must be '{counter} += step' or '{counter} -= step'")
    if re.fullmatch(r"0+|0x0+", step_text):
        raise tree.fail(cont, "worksharing loop increment must not be zero")
    wrapped = step_text if _simple(step_text) else f"({step_text})"
    increment = f"-{wrapped}" if negate else step_text
    if negate and step_text.startswith("-") and _simple(step_text[1:]):
        increment = step_text[1:]
    sign = 1 if cmp in ("<", "<=") else -1
    if re.fullmatch(r"-?[0-9]+", increment) and (int(increment) > 0) != (sign > 0):
        raise tree.fail(cont, f"increment {increment} never reaches the bound of '{counter} {cmp} ...'")
    return LoopBounds(counter, lower if lower is not None else counter, tree.text(ast[cond].rhs),
                      cmp, increment, sign)


def worksharing_bounds(tree: _Tree, directive: int, *, check: bool = True) -> tuple[LoopBounds, ...]:
    ast = tree.ast
    cs = tree.clauses(directive)
    loop = ast[directive].rhs
    if tree.kind(loop) is not NodeKind.while_loop:
        raise tree.fail(loop, "worksharing directive must be followed by a while loop")
    if cs.collapse > 2:
        raise tree.fail(directive, f"collapse({cs.collapse}) is not supported (at most 2 loops)")
    outer = _bounds_of(tree, loop, directive, None)
    outer = dataclasses.replace(outer, lower=_preceding_init(tree, directive, outer.counter) or outer.counter)
    bounds = [outer]
    body = ast.while_parts(loop)[2]
    if cs.collapse == 2:
        items = ast.items(body)
        inner = items[-1] if items else 0
        if not items or tree.kind(inner) is not NodeKind.while_loop or len(items) > 2:
            raise tree.fail(loop, "collapse(2) needs a perfectly nested loop: the outer body may only "
                                  "set the inner counter and run the inner while loop")
        b2 = _bounds_of(tree, inner, inner, None)
        lower2 = _preceding_init(tree, inner, b2.counter)
        if len(items) == 2 and lower2 is None:
            raise tree.fail(items[0], "collapse(2): only the inner counter may be set between the loops")
        if lower2 is None:
            raise tree.fail(inner, f"collapse(2): inner counter '{b2.counter}' must be initialized "
                                   "right before the inner loop")
        b2 = dataclasses.replace(b2, lower=lower2)
        for text in (b2.lower, b2.upper, b2.increment):
            if re.search(rf"\b{re.escape(outer.counter)}\b", text):
                raise tree.fail(inner, "collapse(2) requires inner bounds that do not depend on the outer counter")
        bounds.append(b2)
    if check:
        for i in tree.walk(body):
            if tree.kind(i) is NodeKind.break_stmt:
                loops = [a for a in tree.ancestors(i) if tree.kind(a) is NodeKind.while_loop]
                innermost = loops[0] if loops else loop
                if innermost == loop or (len(bounds) == 2 and innermost == ast.items(body)[-1]):
                    raise tree.fail(i, "break is not allowed in a worksharing loop")
            if tree.kind(i) is NodeKind.omp_while:
                raise tree.fail(i, "worksharing loops may not be closely nested")
        inner_body = ast.while_parts(ast.items(body)[-1])[2] if len(bounds) == 2 else body
        for b in bounds:
            w = _assigns_to(tree, inner_body, b.counter)
            if w:
                raise tree.fail(w, f"loop counter '{b.counter}' must not be modified in a worksharing loop")
    return tuple(bounds)


def worksharing_captures(tree: _Tree, directive: int) -> dict[str, tuple[Capture, ...]]:
    ast = tree.ast
    cs = tree.clauses(directive)
    visible = tree.visible(directive)
    groups: dict[str, list[Capture]] = {"private": [], "firstprivate": [], "reduction": [], "shared": []}
    entries = ([("private", None, n) for n in cs.private] + [("firstprivate", None, n) for n in cs.firstprivate]
               + [("reduction", op, n) for op, n in cs.reductions])
    for cls, op, n in entries:
        name = ast.name(n)
        if name not in visible:
            raise tree.fail(n, f"'{name}' in clause '{cls}' is not a local variable of the enclosing function")
        type_text, pointer = _binding(tree, visible[name], name)
        if op is not None:
            try:
                _identity(op, type_text)
            except ValueError as exc:
                raise tree.fail(n, str(exc)) from None
        groups[cls].append(Capture(name, type_text, pointer, op))
    return {k: tuple(v) for k, v in groups.items()}


def lower_worksharing(payload: ReplacementPayload, tree: _Tree) -> list[Edit]:
    ast = tree.ast
    uid = payload.id
    fn_name = ast.name(payload.function) if payload.function else ""
    if not fn_name.startswith(OUTLINED_PREFIX):
        raise tree.fail(payload.node, "worksharing 'while' outside a parallel region (orphaned) is not supported")
    loop = ast[payload.node].rhs
    body = ast.while_parts(loop)[2]
    bounds = payload.bounds
    cs = payload.clauses
    caps = payload.captures
    g = GENERATED_PREFIX
    ctx = f"{g}ctx"

    # Clause variables become generated temporaries inside the loop.
    temps: dict[str, str] = {}
    lines: list[str] = ["{"]
    decl_lines: list[str] = []
    for cls, prefix in (("private", "priv"), ("firstprivate", "fpriv"), ("reduction", "red")):
        for c in caps[cls]:
            temp = f"{g}{prefix}_{uid}_{c.name}"
            temps[c.name] = temp
            if cls == "private":
                decl_lines.append(f"var {temp}: {c.type} = undefined;")
                decl_lines.append(f"_ = {c.name};")
            elif cls == "firstprivate":
                decl_lines.append(f"var {temp}: {c.type} = {c.name}.*;" if c.pointer
                                  else f"var {temp}: {c.type} = {c.name};")
            else:
                decl_lines.append(f"var {temp}: {c.type} = {_identity(c.op, c.type)};")
    pointer_names = {c.name for cls in ("private", "firstprivate", "reduction") for c in caps[cls] if c.pointer}
    renames: dict[int, str] = {}
    for i, name in _pointer_uses(tree, body, pointer_names).items():
        renames[i] = temps[name]
    for i in _identifiers(tree, body):
        name = ast.name(i)
        if name in temps and name not in pointer_names:
            renames[i] = temps[name]
    if len(bounds) == 2:
        inner_loop = ast.items(body)[-1]
        body_stmt = ast.while_parts(inner_loop)[2]
    else:
        body_stmt = body
    body_lines = _statement_lines(tree, body_stmt, renames)

    b1 = bounds[0]
    lb, inc = f"{g}lb_{uid}", f"{g}inc_{uid}"
    k = f"{g}k_{uid}"
    setup = [f"const {lb}: i64 = {b1.lower};", f"const {inc}: i64 = {b1.increment};"]
    if len(bounds) == 2:
        b2 = bounds[1]
        lb2, inc2, n2 = f"{g}lb2_{uid}", f"{g}inc2_{uid}", f"{g}n2_{uid}"
        total = f"{g}n_{uid}"
        setup += [
            f"const {lb2}: i64 = {b2.lower};",
            f"const {inc2}: i64 = {b2.increment};",
            f"const {n2}: i64 = omp_trip_count({lb2}, {b2.exclusive_upper}, {inc2});",
            f"const {total}: i64 = omp_trip_count({lb}, {b1.exclusive_upper}, {inc}) * {n2};",
        ]
        inner_decl = ast.items(body)[0] if len(ast.items(body)) == 2 else 0
        if inner_decl and tree.kind(inner_decl) in (NodeKind.var_decl, NodeKind.const_decl):
            setup.append(f"var {b2.counter}: i64 = {lb2};")
        space = ("0", total, "1")
        assign = [f"{b1.counter} = {lb} + ({k} / {n2}) * {inc};",
                  f"{b2.counter} = {lb2} + ({k} % {n2}) * {inc2};"]
    else:
        space = (lb, b1.exclusive_upper, inc)
        assign = [f"{b1.counter} = {lb} + {k} * {inc};"]

    iteration = assign + body_lines
    kind = cs.schedule.kind
    chunk = str(cs.schedule.chunk)
    reductions = caps["reduction"]
    combine = []
    for c in reductions:
        target = c.name if c.pointer else "&" + c.name
        combine.append(combine_statement(c.op, target, temps[c.name]))

    if kind in (ScheduleKind.unspecified, ScheduleKind.static):
        chunks, c_idx = f"{g}chunks_{uid}", f"{g}c_{uid}"
        loop_lines = [
            f"const {chunks}: []i64 = omp_static_init({ctx}, {', '.join(space)}, {chunk});",
            f"var {c_idx}: i64 = 0;",
            f"while ({c_idx} < len({chunks})) : ({c_idx} += 2) {{",
            f"{INDENT}var {k}: i64 = {chunks}[{c_idx}];",
            f"{INDENT}while ({k} < {chunks}[{c_idx} + 1]) : ({k} += 1) {{",
            *_indent(iteration, INDENT * 2),
            f"{INDENT}}}",
            "}",
        ]
        tail = combine + [f"omp_static_fini({ctx});"]
        if not cs.nowait:
            tail.append(f"omp_barrier({ctx});")
    else:
        lo, hi = f"{g}lo_{uid}", f"{g}hi_{uid}"
        defer_barrier = bool(reductions) and not cs.nowait
        nowait = "true" if cs.nowait or defer_barrier else "false"
        loop_lines = [
            f"var {lo}: i64 = 0;",
            f"var {hi}: i64 = 0;",
            f"omp_dispatch_init({ctx}, .{kind.name}, {', '.join(space)}, {chunk}, {nowait});",
            f"while (omp_dispatch_next({ctx}, &{lo}, &{hi})) {{",
            f"{INDENT}var {k}: i64 = {lo};",
            f"{INDENT}while ({k} < {hi}) : ({k} += 1) {{",
            *_indent(iteration, INDENT * 2),
            f"{INDENT}}}",
            "}",
        ]
        tail = combine + ([f"omp_barrier({ctx});"] if defer_barrier else [])

    lines += _indent(setup + decl_lines + loop_lines + tail, INDENT)
    lines.append("}")
    indent = _line_indent(tree.src, payload.span[0])
    return [(payload.span[0], payload.span[1], _site(lines, indent))]


# -- atomics -------------------------------------------------------------------

_ATOMIC_OPS = {"+=": ReductionOp.add, "-=": ReductionOp.subtract, "*=": ReductionOp.multiply,
               "&=": ReductionOp.bit_and, "|=": ReductionOp.bit_or, "^=": ReductionOp.bit_xor}
_ADDRESSABLE = (NodeKind.identifier, NodeKind.index, NodeKind.field, NodeKind.deref)


def lower_atomic(payload: ReplacementPayload, tree: _Tree) -> list[Edit]:
    ast = tree.ast
    stmt = ast[payload.node].rhs
    if tree.kind(stmt) is not NodeKind.assign:
        raise tree.fail(stmt, "atomic requires a compound assignment")
    target, value = ast[stmt].lhs, ast[stmt].rhs
    op_text = ast.op(stmt)
    if tree.kind(target) not in _ADDRESSABLE:
        raise tree.fail(target, "atomic target must be an addressable location")
    lhs = tree.text(target)
    if op_text in _ATOMIC_OPS:
        op = _ATOMIC_OPS[op_text]
        operand = tree.text(value)
    elif op_text == "=" and tree.kind(value) is NodeKind.call:
        callee, args = ast.list_parts(value)
        name = ast.name(callee) if tree.kind(callee) is NodeKind.identifier else ""
        texts = [tree.text(a) for a in args]
        if name not in ("min", "max") or len(args) != 2 or lhs not in texts:
            raise tree.fail(stmt, "atomic requires a compound assignment")
        op = ReductionOp[name]
        operand = texts[1] if texts[0] == lhs else texts[0]
    else:
        raise tree.fail(stmt, f"atomic does not support the '{op_text}' operator")
    if tree.kind(target) is NodeKind.deref:
        cell = tree.text(ast[target].lhs)
    else:
        cell = "&" + lhs
    intrinsic = "omp_cas_reduce" if op is ReductionOp.multiply else "omp_atomic_rmw"
    text = f"{intrinsic}({cell}, .{op.name}, {operand});"
    return [(payload.span[0], payload.span[1], text.encode("utf-8"))]


# -- driver --------------------------------------------------------------------

def validate(tree: _Tree) -> None:
    """Report unsupported constructs against the user's own text.

    Later passes see rewritten text, so everything that can be diagnosed up
    front is checked here to keep diagnostics in the original coordinates.
    """
    for node, n in enumerate(tree.ast.nodes):
        if n.kind is NodeKind.omp_parallel:
            parallel_captures(tree, node)
        elif n.kind is NodeKind.omp_while:
            if not any(tree.kind(a) is NodeKind.omp_parallel for a in tree.ancestors(node)):
                raise tree.fail(node, "worksharing 'while' outside a parallel region (orphaned) is not supported")
            worksharing_bounds(tree, node)
            worksharing_captures(tree, node)
        elif n.kind is NodeKind.omp_atomic:
            lower_atomic(ReplacementPayload(PassKind.atomic, n.span, tree.clauses(node), 0, node, 0), tree)


def preprocess_steps(source: str | bytes):
    """Yield ``(pass, text)`` after every splice round."""
    src = source.encode("utf-8") if isinstance(source, str) else source
    pre = Preprocessor(src)
    has_directives = any(t.tag is TokenTag.omp_sentinel for t in tokenize(src))
    # Directive-free text (including our own output) may use generated names.
    parse_source(src, internal=not has_directives)
    if not has_directives:
        return
    validate(_Tree(parse_source(src)))
    for kind in PassKind:
        while pre.round(kind):
            yield kind, pre.source
    if any(t.tag is TokenTag.omp_sentinel for t in tokenize(pre.source)):
        raise PreprocessError("directive left unprocessed", pre.source.find(SENTINEL), pre.source)


def preprocess(source: str | bytes) -> str | bytes:
    """Lower every directive; sentinel-free programs come back unchanged."""
    src = source.encode("utf-8") if isinstance(source, str) else source
    out = src
    for _, out in preprocess_steps(src):
        pass
    return out.decode("utf-8") if isinstance(source, str) else out
