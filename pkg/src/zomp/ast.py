"""Compact AST: a flat node list plus a side array of 32-bit words.

Node data is two integers whose meaning depends on the node kind. Index 0 is
always the root, so 0 doubles as "absent" for optional children.

    root, block, struct_type   lhs..rhs: extra slice of children
    fn_decl       lhs: extra -> [params_start, params_end, return_type]; rhs: body
    param, container_field, field_init      main: name; lhs: type / value
    var_decl, const_decl       main: name; lhs: type or 0; rhs: initializer
    while_loop    lhs: condition; rhs: extra -> [continuation or 0, body]
    if_stmt       lhs: condition; rhs: extra -> [then, else or 0]
    assign        main: operator token; lhs: target; rhs: value
    discard, expr_stmt, grouped, deref, unary, slice_type, ptr_type   lhs: operand
    return_stmt   lhs: value or 0
    binary        main: operator token; lhs, rhs
    call          lhs: callee; rhs: extra -> [args_start, args_end]
    index         lhs: object; rhs: index
    field         lhs: object; main: field name token
    struct_init, array_init    lhs: type; rhs: extra -> [items_start, items_end]
    array_type    lhs: length expression or 0 for ``_``; rhs: element type
    omp_*         main: sentinel token; lhs: clause record in extra; rhs: governed statement
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .tokens import Token


class NodeKind(enum.Enum):
    root = enum.auto()
    fn_decl = enum.auto()
    param = enum.auto()
    var_decl = enum.auto()
    const_decl = enum.auto()
    block = enum.auto()
    while_loop = enum.auto()
    if_stmt = enum.auto()
    assign = enum.auto()
    discard = enum.auto()
    expr_stmt = enum.auto()
    return_stmt = enum.auto()
    break_stmt = enum.auto()
    continue_stmt = enum.auto()
    binary = enum.auto()
    unary = enum.auto()
    deref = enum.auto()
    grouped = enum.auto()
    call = enum.auto()
    index = enum.auto()
    field = enum.auto()
    identifier = enum.auto()
    int_literal = enum.auto()
    float_literal = enum.auto()
    string_literal = enum.auto()
    bool_literal = enum.auto()
    undefined_literal = enum.auto()
    null_literal = enum.auto()
    enum_literal = enum.auto()
    struct_init = enum.auto()
    field_init = enum.auto()
    array_init = enum.auto()
    struct_type = enum.auto()
    container_field = enum.auto()
    type_name = enum.auto()
    array_type = enum.auto()
    slice_type = enum.auto()
    ptr_type = enum.auto()
    omp_parallel = enum.auto()
    omp_while = enum.auto()
    omp_atomic = enum.auto()


OMP_KINDS = frozenset({NodeKind.omp_parallel, NodeKind.omp_while, NodeKind.omp_atomic})
STATEMENT_DECLS = frozenset({NodeKind.var_decl, NodeKind.const_decl})


@dataclass(slots=True)
class AstNode:
    kind: NodeKind
    main_token: int
    start: int
    end: int
    lhs: int = 0
    rhs: int = 0

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass
class Ast:
    source: bytes
    tokens: list[Token]
    nodes: list[AstNode] = field(default_factory=list)
    extra_data: list[int] = field(default_factory=list)

    # -- raw access --------------------------------------------------------
    def __getitem__(self, index: int) -> AstNode:
        return self.nodes[index]

    def node_span(self, index: int) -> tuple[int, int]:
        if not 0 <= index < len(self.nodes):
            raise IndexError(f"node index {index} out of range")
        node = self.nodes[index]
        return (node.start, node.end)

    def text(self, index: int) -> str:
        node = self.nodes[index]
        return self.source[node.start:node.end].decode("utf-8")

    def token_text(self, token_index: int) -> str:
        return self.tokens[token_index].text

    def name(self, index: int) -> str:
        """Text of a node's main token (identifiers, declarations, fields)."""
        return self.tokens[self.nodes[index].main_token].text

    def extra_slice(self, start: int, end: int) -> list[int]:
        return self.extra_data[start:end]

    # -- structured views --------------------------------------------------
    def items(self, index: int) -> list[int]:
        """Children stored as an extra slice (root, block, struct_type)."""
        node = self.nodes[index]
        return self.extra_data[node.lhs:node.rhs]

    def fn_parts(self, index: int) -> tuple[list[int], int, int]:
        node = self.nodes[index]
        p_start, p_end, ret = self.extra_data[node.lhs:node.lhs + 3]
        return self.extra_data[p_start:p_end], ret, node.rhs

    def while_parts(self, index: int) -> tuple[int, int, int]:
        node = self.nodes[index]
        cont, body = self.extra_data[node.rhs:node.rhs + 2]
        return node.lhs, cont, body

    def if_parts(self, index: int) -> tuple[int, int, int]:
        node = self.nodes[index]
        then, other = self.extra_data[node.rhs:node.rhs + 2]
        return node.lhs, then, other

    def list_parts(self, index: int) -> tuple[int, list[int]]:
        """(callee/type, items) of call, struct_init and array_init nodes."""
        node = self.nodes[index]
        start, end = self.extra_data[node.rhs:node.rhs + 2]
        return node.lhs, self.extra_data[start:end]

    def op(self, index: int) -> str:
        return self.tokens[self.nodes[index].main_token].text

    def children(self, index: int) -> list[int]:
        """Syntactic children in source order; clause lists are not children."""
        node = self.nodes[index]
        kind = node.kind
        if kind in (NodeKind.root, NodeKind.block, NodeKind.struct_type):
            return self.items(index)
        if kind is NodeKind.fn_decl:
            params, ret, body = self.fn_parts(index)
            return [*params, *([ret] if ret else []), body]
        if kind is NodeKind.while_loop:
            cond, cont, body = self.while_parts(index)
            return [c for c in (cond, cont, body) if c]
        if kind is NodeKind.if_stmt:
            cond, then, other = self.if_parts(index)
            return [c for c in (cond, then, other) if c]
        if kind in (NodeKind.call, NodeKind.struct_init, NodeKind.array_init):
            head, items = self.list_parts(index)
            return [head, *items]
        if kind in OMP_KINDS:
            return [node.rhs]
        if kind is NodeKind.field:
            return [node.lhs]
        return [c for c in (node.lhs, node.rhs) if c]

    def walk(self, index: int = 0):
        """Pre-order traversal yielding node indices."""
        stack = [index]
        while stack:
            i = stack.pop()
            yield i
            stack.extend(reversed(self.children(i)))
