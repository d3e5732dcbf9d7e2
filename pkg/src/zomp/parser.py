"""Recursive-descent parser producing :class:`~zomp.ast.Ast`.

OpenMP directives are statements introduced by an ``omp_sentinel`` token.
Their words arrive as plain identifiers (``while`` as the keyword) and are
recognised through :meth:`Parser.eat_token` with an OpenMP keyword tag.
"""

from __future__ import annotations

from .ast import Ast, AstNode, NodeKind, OMP_KINDS
from .clauses import (
    ClauseError,
    ClauseSet,
    DefaultKind,
    ReductionOp,
    ScheduleKind,
    ScheduleSpec,
    encode,
    pack_loop,
)
from .errors import ParseError
from .tokens import OMP_KEYWORDS, Token, TokenTag, tokenize

T = TokenTag

RESERVED_PREFIX = "__omp_"

BUILTIN_FUNCTIONS = frozenset({
    "print", "len", "sqrt", "abs", "floor", "now_seconds", "log", "exp",
    "float", "int", "min", "max", "alloc", "cast",
    "omp_fork_call", "omp_static_init", "omp_static_fini", "omp_dispatch_init",
    "omp_dispatch_next", "omp_barrier", "omp_atomic_rmw", "omp_cas_reduce",
    "omp_trip_count",
})
BUILTIN_VALUES = frozenset({"omp", "i64_max", "i64_min", "inf"})
PRIMITIVE_TYPES = frozenset({"i64", "f64", "bool", "void", "anyopaque", "omp_ctx"})
PREDECLARED = BUILTIN_FUNCTIONS | BUILTIN_VALUES | PRIMITIVE_TYPES

# builtins whose first argument is a type
TYPE_ARG_BUILTINS = frozenset({"alloc", "cast"})

DIRECTIVES = {
    T.omp_parallel: NodeKind.omp_parallel,
    T.omp_while_ws: NodeKind.omp_while,
    T.omp_atomic: NodeKind.omp_atomic,
}
DIRECTIVE_NAMES = {
    NodeKind.omp_parallel: "parallel",
    NodeKind.omp_while: "while",
    NodeKind.omp_atomic: "atomic",
}
CLAUSE_TAGS = (
    T.omp_private, T.omp_firstprivate, T.omp_shared, T.omp_reduction,
    T.omp_default, T.omp_nowait, T.omp_schedule, T.omp_collapse,
)
LEGAL_CLAUSES = {
    NodeKind.omp_parallel: {T.omp_private, T.omp_firstprivate, T.omp_shared,
                            T.omp_reduction, T.omp_default},
    NodeKind.omp_while: {T.omp_private, T.omp_firstprivate, T.omp_reduction,
                         T.omp_schedule, T.omp_collapse, T.omp_nowait},
    NodeKind.omp_atomic: set(),
}
SCHEDULE_TAGS = {
    T.omp_static: ScheduleKind.static,
    T.omp_dynamic: ScheduleKind.dynamic,
    T.omp_guided: ScheduleKind.guided,
    T.omp_runtime: ScheduleKind.runtime,
}
REDUCTION_TOKENS = {
    T.plus: ReductionOp.add,
    T.minus: ReductionOp.subtract,
    T.asterisk: ReductionOp.multiply,
    T.ampersand: ReductionOp.bit_and,
    T.pipe: ReductionOp.bit_or,
    T.caret: ReductionOp.bit_xor,
    T.kw_and: ReductionOp.logical_and,
    T.kw_or: ReductionOp.logical_or,
}

ASSIGN_OPS = frozenset({
    T.equal, T.plus_equal, T.minus_equal, T.asterisk_equal, T.slash_equal,
    T.percent_equal, T.ampersand_equal, T.pipe_equal, T.caret_equal,
    T.shift_left_equal, T.shift_right_equal,
})
COMPARE_OPS = frozenset({
    T.equal_equal, T.bang_equal, T.angle_left, T.angle_left_equal,
    T.angle_right, T.angle_right_equal,
})
# binary precedence levels below comparison, loosest first
BINARY_LEVELS = (
    frozenset({T.pipe}),
    frozenset({T.caret}),
    frozenset({T.ampersand}),
    frozenset({T.shift_left, T.shift_right}),
    frozenset({T.plus, T.minus, T.plus_percent, T.minus_percent}),
    frozenset({T.asterisk, T.slash, T.percent, T.asterisk_percent}),
)
PREFIX_OPS = frozenset({T.minus, T.bang, T.tilde, T.ampersand})


class Parser:
    def __init__(self, tokens: list[Token], source: bytes):
        self.tokens = tokens
        self.source = source
        self.pos = 0
        self.ast = Ast(source, tokens)

    # -- token cursor ------------------------------------------------------
    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def eat_token(self, tag: TokenTag) -> Token | None:
        """Consume and return the next token if it matches ``tag``.

        OpenMP keyword tags match an identifier (or keyword) token whose text
        maps to that tag.
        """
        token = self.peek()
        if tag.is_omp_keyword:
            if token.tag is T.identifier or token.tag.name.startswith("kw_"):
                if OMP_KEYWORDS.get(token.text) is tag:
                    self.pos += 1
                    return token
            return None
        if token.tag is tag:
            self.pos += 1
            return token
        return None

    def expect(self, tag: TokenTag, what: str | None = None) -> int:
        if self.eat_token(tag) is None:
            self.fail(f"expected {what or repr(tag.value)}, found {self.describe(self.peek())}")
        return self.pos - 1

    def describe(self, token: Token) -> str:
        return "end of file" if token.tag is T.eof else repr(token.text)

    def fail(self, message: str, token: Token | None = None):
        token = token or self.peek()
        raise ParseError(message, token.start, self.source)

    def add(self, kind: NodeKind, main: int, start: int, end: int, lhs: int = 0, rhs: int = 0) -> int:
        self.ast.nodes.append(AstNode(kind, main, start, end, lhs, rhs))
        return len(self.ast.nodes) - 1

    def span_end(self) -> int:
        return self.tokens[self.pos - 1].end

    def node(self, index: int) -> AstNode:
        return self.ast.nodes[index]

    def push_extra(self, words) -> int:
        start = len(self.ast.extra_data)
        self.ast.extra_data.extend(words)
        return start

    def push_slice(self, items: list[int]) -> tuple[int, int]:
        start = self.push_extra(items)
        return start, len(self.ast.extra_data)

    # -- top level ---------------------------------------------------------
    def parse_root(self) -> Ast:
        self.add(NodeKind.root, 0, 0, len(self.source))
        decls = []
        while self.peek().tag is not T.eof:
            tok = self.peek()
            if tok.tag is T.kw_fn:
                decls.append(self.parse_fn())
            elif tok.tag in (T.kw_var, T.kw_const):
                decls.append(self.parse_var_decl(top_level=True))
            elif tok.tag is T.omp_sentinel:
                self.fail("directives are only allowed inside function bodies")
            else:
                self.fail(f"expected a declaration, found {self.describe(tok)}")
        start, end = self.push_slice(decls)
        root = self.ast.nodes[0]
        root.lhs, root.rhs = start, end
        return self.ast

    def parse_fn(self) -> int:
        fn_tok = self.tokens[self.pos]
        self.expect(T.kw_fn)
        name = self.expect(T.identifier, "function name")
        self.expect(T.l_paren)
        params = []
        while self.peek().tag is not T.r_paren:
            pname = self.expect(T.identifier, "parameter name")
            self.expect(T.colon)
            ptype = self.parse_type()
            params.append(self.add(NodeKind.param, pname, self.tokens[pname].start,
                                   self.node(ptype).end, ptype))
            if self.eat_token(T.comma) is None:
                break
        self.expect(T.r_paren)
        ret = self.parse_type()
        body = self.parse_block()
        p_start, p_end = self.push_slice(params)
        proto = self.push_extra([p_start, p_end, ret])
        return self.add(NodeKind.fn_decl, name, fn_tok.start, self.node(body).end, proto, body)

    def parse_var_decl(self, top_level: bool = False) -> int:
        first = self.peek()
        kind = NodeKind.var_decl if first.tag is T.kw_var else NodeKind.const_decl
        self.pos += 1
        name = self.expect(T.identifier, "variable name")
        type_node = 0
        if self.eat_token(T.colon):
            type_node = self.parse_type()
        self.expect(T.equal, "'=' (declarations need an initializer)")
        if self.peek().tag is T.kw_struct:
            if not (top_level and kind is NodeKind.const_decl):
                self.fail("struct types may only be declared with a top-level const")
            init = self.parse_struct_type()
        else:
            init = self.parse_expr()
        self.expect(T.semicolon)
        return self.add(kind, name, first.start, self.span_end(), type_node, init)

    def parse_struct_type(self) -> int:
        first = self.tokens[self.pos]
        self.expect(T.kw_struct)
        self.expect(T.l_brace)
        fields = []
        while self.peek().tag is not T.r_brace:
            fname = self.expect(T.identifier, "field name")
            self.expect(T.colon)
            ftype = self.parse_type()
            fields.append(self.add(NodeKind.container_field, fname, self.tokens[fname].start,
                                   self.node(ftype).end, ftype))
            if self.eat_token(T.comma) is None:
                break
        self.expect(T.r_brace)
        start, end = self.push_slice(fields)
        return self.add(NodeKind.struct_type, self.pos - 1, first.start, self.span_end(), start, end)

    # -- types -------------------------------------------------------------
    def parse_type(self) -> int:
        tok = self.peek()
        if self.eat_token(T.l_bracket):
            if self.eat_token(T.r_bracket):
                elem = self.parse_type()
                return self.add(NodeKind.slice_type, self.pos, tok.start, self.node(elem).end, elem)
            length = 0
            if self.peek().tag is T.identifier and self.peek().text == "_":
                self.pos += 1
            else:
                lit = self.expect(T.int_literal, "array length")
                length = self.add(NodeKind.int_literal, lit, self.tokens[lit].start, self.tokens[lit].end)
            self.expect(T.r_bracket)
            elem = self.parse_type()
            return self.add(NodeKind.array_type, self.pos, tok.start, self.node(elem).end, length, elem)
        if self.eat_token(T.asterisk):
            elem = self.parse_type()
            return self.add(NodeKind.ptr_type, self.pos, tok.start, self.node(elem).end, elem)
        if tok.tag is T.identifier:
            self.pos += 1
            return self.add(NodeKind.type_name, self.pos - 1, tok.start, tok.end)
        self.fail(f"expected a type, found {self.describe(tok)}")

    # -- statements --------------------------------------------------------
    def parse_block(self) -> int:
        first = self.peek()
        self.expect(T.l_brace)
        stmts = []
        while self.peek().tag is not T.r_brace:
            if self.peek().tag is T.eof:
                self.fail("expected '}' before end of file", first)
            stmts.append(self.parse_statement())
        self.expect(T.r_brace)
        start, end = self.push_slice(stmts)
        return self.add(NodeKind.block, self.pos - 1, first.start, self.span_end(), start, end)

    def parse_statement(self) -> int:
        tok = self.peek()
        tag = tok.tag
        if tag is T.omp_sentinel:
            return self.parse_directive()
        if tag in (T.kw_var, T.kw_const):
            return self.parse_var_decl()
        if tag is T.l_brace:
            return self.parse_block()
        if tag is T.kw_while:
            return self.parse_while()
        if tag is T.kw_if:
            return self.parse_if()
        if tag is T.kw_return:
            self.pos += 1
            value = 0 if self.peek().tag is T.semicolon else self.parse_expr()
            self.expect(T.semicolon)
            return self.add(NodeKind.return_stmt, self.pos - 1, tok.start, self.span_end(), value)
        if tag in (T.kw_break, T.kw_continue):
            self.pos += 1
            self.expect(T.semicolon)
            kind = NodeKind.break_stmt if tag is T.kw_break else NodeKind.continue_stmt
            return self.add(kind, self.pos - 2, tok.start, self.span_end())
        if tag is T.identifier and tok.text == "_" and self.peek(1).tag is T.equal:
            self.pos += 2
            value = self.parse_expr()
            self.expect(T.semicolon)
            return self.add(NodeKind.discard, self.pos - 1, tok.start, self.span_end(), value)
        stmt = self.parse_assign_or_expr()
        self.expect(T.semicolon)
        node = self.node(stmt)
        node.end = self.span_end()
        return stmt

    def parse_assign_or_expr(self) -> int:
        target = self.parse_expr()
        op_tok = self.peek()
        if op_tok.tag in ASSIGN_OPS:
            if self.node(target).kind not in (NodeKind.identifier, NodeKind.index,
                                              NodeKind.field, NodeKind.deref):
                self.fail("invalid assignment target", op_tok)
            op_index = self.pos
            self.pos += 1
            value = self.parse_expr()
            return self.add(NodeKind.assign, op_index, self.node(target).start,
                            self.node(value).end, target, value)
        return self.add(NodeKind.expr_stmt, self.node(target).main_token, self.node(target).start,
                        self.node(target).end, target)

    def parse_while(self) -> int:
        first_index = self.pos
        first = self.peek()
        self.expect(T.kw_while)
        self.expect(T.l_paren)
        cond = self.parse_expr()
        self.expect(T.r_paren)
        cont = 0
        if self.eat_token(T.colon):
            self.expect(T.l_paren)
            cont = self.parse_assign_or_expr()
            self.expect(T.r_paren)
        body = self.parse_block()
        extra = self.push_extra([cont, body])
        return self.add(NodeKind.while_loop, first_index, first.start, self.node(body).end, cond, extra)

    def parse_if(self) -> int:
        first_index = self.pos
        first = self.peek()
        self.expect(T.kw_if)
        self.expect(T.l_paren)
        cond = self.parse_expr()
        self.expect(T.r_paren)
        then = self.parse_block()
        other = 0
        if self.eat_token(T.kw_else):
            other = self.parse_if() if self.peek().tag is T.kw_if else self.parse_block()
        extra = self.push_extra([then, other])
        end = self.node(other or then).end
        return self.add(NodeKind.if_stmt, first_index, first.start, end, cond, extra)

    # -- directives --------------------------------------------------------
    def parse_directive(self) -> int:
        sentinel_index = self.pos
        sentinel = self.tokens[self.pos]
        self.pos += 1
        line_end = self.source.find(b"\n", sentinel.start)
        if line_end == -1:
            line_end = len(self.source)

        def on_line() -> bool:
            tok = self.peek()
            return tok.tag is not T.eof and tok.start < line_end

        def need_on_line(what: str) -> None:
            if not on_line():
                self.fail(f"directive ended before {what} (directives must fit on one line)")

        need_on_line("the directive name")
        for tag, kind in DIRECTIVES.items():
            if self.eat_token(tag):
                break
        else:
            self.fail(f"unknown directive '{self.peek().text}'")
        directive = DIRECTIVE_NAMES[kind]

        lists: dict[TokenTag, list[int]] = {T.omp_private: [], T.omp_firstprivate: [], T.omp_shared: []}
        reductions: list[tuple[ReductionOp, int]] = []
        owner: dict[str, str] = {}
        seen: set[TokenTag] = set()
        schedule = ScheduleSpec()
        default_kind = DefaultKind.unspecified
        nowait = False
        collapse = 0

        def list_item(clause: str) -> int:
            need_on_line("the end of the clause")
            ident = self.expect(T.identifier, "variable name")
            name = self.tokens[ident].text
            if name in owner:
                where = owner[name]
                detail = "twice in" if where == clause else f"in both '{where}' and"
                self.fail(f"'{name}' appears {detail} '{clause}'", self.tokens[ident])
            owner[name] = clause
            tok = self.tokens[ident]
            return self.add(NodeKind.identifier, ident, tok.start, tok.end)

        while on_line():
            if self.eat_token(T.comma) and not on_line():
                break
            clause_tok = self.peek()
            for ctag in CLAUSE_TAGS:
                if self.eat_token(ctag):
                    break
            else:
                self.fail(f"unknown clause '{clause_tok.text}'")
            if ctag not in LEGAL_CLAUSES[kind]:
                self.fail(f"clause '{ctag.value}' not permitted on '{directive}'", clause_tok)
            scalar = ctag in (T.omp_schedule, T.omp_default, T.omp_nowait, T.omp_collapse)
            if scalar and ctag in seen:
                self.fail(f"duplicate clause '{ctag.value}'", clause_tok)
            seen.add(ctag)

            if ctag is T.omp_nowait:
                nowait = True
                continue
            need_on_line("'('")
            self.expect(T.l_paren)
            if ctag in lists:
                lists[ctag].append(list_item(ctag.value))
                while self.eat_token(T.comma):
                    lists[ctag].append(list_item(ctag.value))
            elif ctag is T.omp_reduction:
                need_on_line("the reduction operator")
                op_tok = self.peek()
                op = REDUCTION_TOKENS.get(op_tok.tag)
                if op is None and op_tok.tag is T.identifier and op_tok.text in ("min", "max"):
                    op = ReductionOp[op_tok.text]
                if op is None:
                    self.fail(f"unknown reduction operator '{op_tok.text}'")
                self.pos += 1
                need_on_line("':'")
                self.expect(T.colon)
                reductions.append((op, list_item("reduction")))
                while self.eat_token(T.comma):
                    reductions.append((op, list_item("reduction")))
            elif ctag is T.omp_default:
                need_on_line("the default kind")
                if self.eat_token(T.omp_shared):
                    default_kind = DefaultKind.shared
                elif self.eat_token(T.omp_none):
                    default_kind = DefaultKind.none
                else:
                    self.fail(f"default kind must be 'shared' or 'none', found {self.describe(self.peek())}")
            elif ctag is T.omp_schedule:
                need_on_line("the schedule kind")
                for stag, skind in SCHEDULE_TAGS.items():
                    if self.eat_token(stag):
                        break
                else:
                    self.fail(f"unknown schedule kind '{self.peek().text}'")
                chunk = 0
                if self.eat_token(T.comma):
                    need_on_line("the chunk size")
                    chunk_tok = self.peek()
                    chunk = self.parse_int_token("chunk size")
                    if chunk <= 0:
                        self.fail("chunk size must be greater than 0", chunk_tok)
                    try:
                        pack_loop(ScheduleSpec(skind, chunk))
                    except ClauseError as exc:
                        self.fail(str(exc), chunk_tok)
                schedule = ScheduleSpec(skind, chunk)
            elif ctag is T.omp_collapse:
                need_on_line("the collapse depth")
                depth_tok = self.peek()
                collapse = self.parse_int_token("collapse depth")
                if collapse <= 0:
                    self.fail("collapse depth must be positive", depth_tok)
                if collapse >= 16:
                    self.fail(f"collapse({collapse}) out of range (maximum 15)", depth_tok)
            need_on_line("')'")
            self.expect(T.r_paren)

        if self.peek().tag in (T.r_brace, T.eof):
            self.fail(f"'{directive}' directive must be followed by a statement")
        governed = self.parse_statement()
        clauses = ClauseSet(
            private=tuple(lists[T.omp_private]),
            firstprivate=tuple(lists[T.omp_firstprivate]),
            shared=tuple(lists[T.omp_shared]),
            reductions=tuple(reductions),
            schedule=schedule,
            default_kind=default_kind,
            nowait=nowait,
            collapse=collapse,
        )
        record = encode(clauses, self.ast.extra_data)
        return self.add(kind, sentinel_index, sentinel.start, self.node(governed).end, record, governed)

    def parse_int_token(self, what: str) -> int:
        index = self.expect(T.int_literal, what)
        return int(self.tokens[index].text, 0)

    # -- expressions -------------------------------------------------------
    def parse_expr(self) -> int:
        return self.parse_or()

    def _binary(self, lhs: int, op_index: int, rhs: int) -> int:
        return self.add(NodeKind.binary, op_index, self.node(lhs).start, self.node(rhs).end, lhs, rhs)

    def parse_or(self) -> int:
        lhs = self.parse_and()
        while self.eat_token(T.kw_or):
            op = self.pos - 1
            lhs = self._binary(lhs, op, self.parse_and())
        return lhs

    def parse_and(self) -> int:
        lhs = self.parse_compare()
        while self.eat_token(T.kw_and):
            op = self.pos - 1
            lhs = self._binary(lhs, op, self.parse_compare())
        return lhs

    def parse_compare(self) -> int:
        lhs = self.parse_level(0)
        if self.peek().tag in COMPARE_OPS:
            op = self.pos
            self.pos += 1
            lhs = self._binary(lhs, op, self.parse_level(0))
            if self.peek().tag in COMPARE_OPS:
                self.fail("comparison operators cannot be chained")
        return lhs

    def parse_level(self, level: int) -> int:
        if level == len(BINARY_LEVELS):
            return self.parse_prefix()
        ops = BINARY_LEVELS[level]
        lhs = self.parse_level(level + 1)
        while self.peek().tag in ops:
            op = self.pos
            self.pos += 1
            lhs = self._binary(lhs, op, self.parse_level(level + 1))
        return lhs

    def parse_prefix(self) -> int:
        tok = self.peek()
        if tok.tag in PREFIX_OPS:
            op = self.pos
            self.pos += 1
            operand = self.parse_prefix()
            return self.add(NodeKind.unary, op, tok.start, self.node(operand).end, operand)
        return self.parse_postfix()

    def parse_postfix(self) -> int:
        node = self.parse_primary()
        while True:
            here = self.pos
            if self.eat_token(T.l_bracket):
                index = self.parse_expr()
                self.expect(T.r_bracket)
                node = self.add(NodeKind.index, self.pos - 1, self.node(node).start, self.span_end(), node, index)
            elif self.eat_token(T.period_asterisk):
                node = self.add(NodeKind.deref, self.pos - 1, self.node(node).start, self.span_end(), node)
            elif self.eat_token(T.period):
                name = self.expect(T.identifier, "field name")
                node = self.add(NodeKind.field, name, self.node(node).start, self.span_end(), node)
            elif self.eat_token(T.l_paren):
                callee = self.node(node)
                args = []
                type_first = (callee.kind is NodeKind.identifier
                              and self.tokens[callee.main_token].text in TYPE_ARG_BUILTINS)
                while self.peek().tag is not T.r_paren:
                    args.append(self.parse_type() if type_first and not args else self.parse_expr())
                    if self.eat_token(T.comma) is None:
                        break
                self.expect(T.r_paren)
                start, end = self.push_slice(args)
                extra = self.push_extra([start, end])
                node = self.add(NodeKind.call, here, callee.start, self.span_end(), node, extra)
            else:
                return node

    def parse_primary(self) -> int:
        tok = self.peek()
        tag = tok.tag
        here = self.pos
        if tag is T.int_literal:
            self.pos += 1
            return self.add(NodeKind.int_literal, here, tok.start, tok.end)
        if tag is T.float_literal:
            self.pos += 1
            return self.add(NodeKind.float_literal, here, tok.start, tok.end)
        if tag is T.string_literal:
            self.pos += 1
            return self.add(NodeKind.string_literal, here, tok.start, tok.end)
        if tag in (T.kw_true, T.kw_false):
            self.pos += 1
            return self.add(NodeKind.bool_literal, here, tok.start, tok.end)
        if tag is T.kw_undefined:
            self.pos += 1
            return self.add(NodeKind.undefined_literal, here, tok.start, tok.end)
        if tag is T.kw_null:
            self.pos += 1
            return self.add(NodeKind.null_literal, here, tok.start, tok.end)
        if tag is T.identifier:
            self.pos += 1
            ident = self.add(NodeKind.identifier, here, tok.start, tok.end)
            nxt, after = self.peek(), self.peek(1)
            if nxt.tag is T.l_brace and (after.tag is T.r_brace or
                                         (after.tag is T.period and self.peek(2).tag is T.identifier)):
                type_node = self.add(NodeKind.type_name, here, tok.start, tok.end)
                return self.parse_init_list(NodeKind.struct_init, type_node)
            return ident
        if tag is T.l_paren:
            self.pos += 1
            inner = self.parse_expr()
            self.expect(T.r_paren)
            return self.add(NodeKind.grouped, here, tok.start, self.span_end(), inner)
        if tag is T.period:
            self.pos += 1
            name = self.expect(T.identifier, "enum literal name")
            return self.add(NodeKind.enum_literal, name, tok.start, self.span_end())
        if tag is T.l_bracket:
            type_node = self.parse_type()
            if self.node(type_node).kind is not NodeKind.array_type:
                self.fail("expected an array literal", tok)
            return self.parse_init_list(NodeKind.array_init, type_node)
        self.fail(f"expected an expression, found {self.describe(tok)}")

    def parse_init_list(self, kind: NodeKind, type_node: int) -> int:
        brace = self.expect(T.l_brace)
        items = []
        while self.peek().tag is not T.r_brace:
            if kind is NodeKind.struct_init:
                dot = self.peek()
                self.expect(T.period, "'.field'")
                name = self.expect(T.identifier, "field name")
                self.expect(T.equal)
                value = self.parse_expr()
                items.append(self.add(NodeKind.field_init, name, dot.start, self.node(value).end, value))
            else:
                items.append(self.parse_expr())
            if self.eat_token(T.comma) is None:
                break
        self.expect(T.r_brace)
        start, end = self.push_slice(items)
        extra = self.push_extra([start, end])
        return self.add(kind, brace, self.node(type_node).start, self.span_end(), type_node, extra)


def eat_token(parser: Parser, tag: TokenTag) -> Token | None:
    return parser.eat_token(tag)


def parse(tokens: list[Token], source: str | bytes | None = None, *, internal: bool = False) -> Ast:
    """Parse a token stream into an :class:`Ast`.

    ``internal`` admits identifiers with the reserved ``__omp_`` prefix, which
    only generated code may use.
    """
    if source is None:
        raise TypeError("parse() needs the source buffer the tokens came from")
    src = source.encode("utf-8") if isinstance(source, str) else source
    ast = Parser(tokens, src).parse_root()
    check_names(ast, internal=internal)
    return ast


def parse_source(source: str | bytes, *, openmp: bool = True, internal: bool = False) -> Ast:
    src = source.encode("utf-8") if isinstance(source, str) else source
    return parse(tokenize(src, openmp=openmp), src, internal=internal)


def node_span(ast: Ast, index: int) -> tuple[int, int]:
    return ast.node_span(index)


# -- name rules --------------------------------------------------------------

def check_names(ast: Ast, *, internal: bool = False) -> None:
    """Reject reserved names, duplicate globals and shadowing declarations."""
    src = ast.source
    if not internal:
        for tok in ast.tokens:
            if tok.tag is T.identifier and tok.text.startswith(RESERVED_PREFIX):
                raise ParseError(f"identifiers starting with '{RESERVED_PREFIX}' are reserved", tok.start, src)

    globals_: dict[str, int] = {}
    for decl in ast.items(0):
        name = ast.name(decl)
        tok = ast.tokens[ast[decl].main_token]
        if name in PREDECLARED:
            raise ParseError(f"'{name}' is a builtin name and cannot be redeclared", tok.start, src)
        if name in globals_:
            raise ParseError(f"redeclaration of '{name}'", tok.start, src)
        globals_[name] = decl

    def declare(scopes: list[set[str]], index: int) -> None:
        name = ast.name(index)
        tok = ast.tokens[ast[index].main_token]
        if name in PREDECLARED:
            raise ParseError(f"'{name}' is a builtin name and cannot be redeclared", tok.start, src)
        if name in globals_ or any(name in s for s in scopes):
            raise ParseError(f"redeclaration of '{name}' (shadowing is not allowed)", tok.start, src)
        scopes[-1].add(name)

    def visit(index: int, scopes: list[set[str]]) -> None:
        node = ast[index]
        kind = node.kind
        if kind is NodeKind.block:
            scopes.append(set())
            for stmt in ast.items(index):
                visit(stmt, scopes)
            scopes.pop()
        elif kind in (NodeKind.var_decl, NodeKind.const_decl):
            declare(scopes, index)
        elif kind is NodeKind.while_loop:
            visit(ast.while_parts(index)[2], scopes)
        elif kind is NodeKind.if_stmt:
            _, then, other = ast.if_parts(index)
            visit(then, scopes)
            if other:
                visit(other, scopes)
        elif kind in OMP_KINDS:
            visit(node.rhs, scopes)

    for decl in ast.items(0):
        if ast[decl].kind is NodeKind.fn_decl:
            params, _, body = ast.fn_parts(decl)
            scopes: list[set[str]] = [set()]
            for p in params:
                declare(scopes, p)
            visit(body, scopes)
