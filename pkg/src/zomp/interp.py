"""Multithreaded evaluator for kernel-language programs.

The AST is checked and turned into Python closures once; every closure takes
the current frame (a list of slots) so the compiled program is shared
read-only by all threads of a team. Pure expressions are rendered as inline
Python expressions to keep per-node call overhead low; statements are
closures driven by small generated block and loop functions.

Two execution modes mirror safe and fast builds: ``debug`` checks integer
overflow, array bounds and reads of ``undefined`` locals; ``release`` wraps
integers and skips the checks.
"""

from __future__ import annotations

import ast as pyast
import itertools
import math
import threading
from dataclasses import dataclass

from . import runtime as rt
from .ast import Ast, NodeKind, OMP_KINDS
from .clauses import ReductionOp, ScheduleKind
from .errors import CheckError, KernelRuntimeError, Located
from .parser import BUILTIN_FUNCTIONS
from .types import (
    BOOL, CTX, ENUM, F64, I64, NAMESPACE, NULL, OPAQUE, PRIMITIVES, STRING, VOID,
    ArrayT, FnT, PtrT, SliceT, StructT, Type, assignable, copier, has_value_semantics,
    zero_value,
)

BREAK, CONTINUE, RETURN = 1, 2, 3
I64_MIN, I64_MAX = rt.I64_MIN, rt.I64_MAX


class _Undefined:
    __slots__ = ()

    def __repr__(self) -> str:
        return "undefined"


UNDEF = _Undefined()

_STRIPES = tuple(threading.Lock() for _ in range(64))


class SlotRef(rt.AtomicCell):
    """Pointer to a variable slot (a frame or the globals list)."""

    __slots__ = ("store", "index")

    def __init__(self, store: list, index: int):
        self.store = store
        self.index = index
        self._lock = _STRIPES[(id(store) >> 4 ^ index) & 63]

    def _get(self):
        return self.store[self.index]

    def _set(self, value) -> None:
        self.store[self.index] = value

    get = _get
    set = _set


class ElemRef(SlotRef):
    """Pointer to an array element or struct field."""

    __slots__ = ()


@dataclass
class Expr:
    """A compiled expression: inline Python source plus the names it needs."""

    src: str
    env: dict
    type: Type
    const: object = None
    is_const: bool = False
    literal: bool = False      # untyped integer literal, may coerce to f64
    place: bool = False        # denotes storage (needs a copy for value types)
    _fn: object = None

    @property
    def fn(self):
        if self._fn is None:
            self._fn = _make_lambda(self.src, self.env)
        return self._fn


@dataclass
class Local:
    name: str
    slot: int
    type: Type
    mutable: bool
    node: int
    undefined: bool = False
    used: bool = False
    is_param: bool = False


@dataclass
class GlobalVar:
    name: str
    slot: int
    type: Type
    mutable: bool


class Function:
    """A compiled user function; ``entry(*args)`` runs it on a fresh frame."""

    def __init__(self, name: str, type_: FnT, node: int):
        self.name = name
        self.type = type_
        self.node = node
        self.entry = None

    def __repr__(self) -> str:
        return f"<fn {self.name}>"


@dataclass
class RunResult:
    status: int
    output: str
    value: object = None
    error: Located | None = None


def _make_lambda(src: str, env: dict):
    return eval(compile(f"lambda f: {src}", "<kernel>", "eval"), dict(env))


def _define(name: str, lines: list[str], env: dict, args: str = "f"):
    body = "\n".join("    " + line for line in lines) or "    pass"
    code = compile(f"def {name}({args}):\n{body}\n", "<kernel>", "exec")
    namespace = dict(env)
    exec(code, namespace)
    return namespace[name]


def _format_value(value, t: Type) -> str:
    if t is BOOL:
        return "true" if value else "false"
    if t is F64:
        return repr(float(value))
    if isinstance(t, (ArrayT, SliceT)):
        return "[" + ", ".join(_format_value(v, t.elem) for v in value) + "]"
    return str(value)


def _formatter(t: Type):
    if t is I64:
        return str
    if t is STRING:
        return lambda v: v
    return lambda v: _format_value(v, t)


def _fdiv(x: float, y: float) -> float:
    if y:
        return x / y
    if x != x or x == 0:
        return math.nan
    negative = (x < 0) != (math.copysign(1.0, y) < 0)
    return -math.inf if negative else math.inf


def _sqrt(x: float) -> float:
    return math.sqrt(x) if x >= 0 else (math.nan if x == x and x != 0 else x)


def _log(x: float) -> float:
    if x > 0:
        return math.log(x)
    if x == 0:
        return -math.inf
    return math.nan


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


class Compiler:
    def __init__(self, ast: Ast, mode: str = "debug"):
        if mode not in ("debug", "release"):
            raise ValueError(f"unknown mode {mode!r}")
        self.ast = ast
        self.src = ast.source
        self.debug = mode == "debug"
        self.structs: dict[str, StructT] = {}
        self.struct_nodes: dict[str, int] = {}
        self.functions: dict[str, Function] = {}
        self.globals: list = []
        self.global_vars: dict[str, GlobalVar] = {}
        self.global_inits: list[tuple[int, object]] = []
        self.counter = itertools.count()
        self.output: list[str] = []
        self.output_lock = threading.Lock()
        self.threads: int | None = None
        self._fn: Function | None = None
        self.scopes: list[dict[str, Local]] = []
        self.all_locals: list[Local] = []
        self.nslots = 0

    # -- diagnostics -------------------------------------------------------
    def error(self, node: int, message: str) -> CheckError:
        return CheckError(message, self.ast[node].start, self.src)

    def runtime_error(self, node: int, message: str) -> KernelRuntimeError:
        return KernelRuntimeError(message, self.ast[node].start, self.src)

    def raiser(self, node: int, message: str):
        def fail(*_):
            raise self.runtime_error(node, message)
        return fail

    def fresh(self, prefix: str = "_k") -> str:
        return f"{prefix}{next(self.counter)}"

    def operand(self, e: Expr, env: dict) -> str:
        env.update(e.env)
        return e.src

    def wrap_fn(self, fn, type_: Type, **kw) -> Expr:
        name = self.fresh("_c")
        return Expr(f"{name}(f)", {name: fn}, type_, **kw)

    def const_expr(self, value, type_: Type, literal: bool = False) -> Expr:
        if type(value) in (int, bool) or (type(value) is float and math.isfinite(value)):
            return Expr(repr(value), {}, type_, value, True, literal)
        name = self.fresh("_v")
        return Expr(name, {name: value}, type_, value, True, literal)

    # -- program -----------------------------------------------------------
    def compile_program(self) -> None:
        ast = self.ast
        decls = ast.items(0)
        for decl in decls:
            node = ast[decl]
            if node.kind is NodeKind.const_decl and ast[node.rhs].kind is NodeKind.struct_type:
                self.struct_nodes[ast.name(decl)] = decl
        for name in self.struct_nodes:
            self.struct_type(name, self.struct_nodes[name])
        for decl in decls:
            if ast[decl].kind is NodeKind.fn_decl:
                params, ret, _ = ast.fn_parts(decl)
                ftype = FnT(tuple(self.resolve_type(ast[p].lhs) for p in params), self.resolve_type(ret))
                self.functions[ast.name(decl)] = Function(ast.name(decl), ftype, decl)
        for decl in decls:
            node = ast[decl]
            if node.kind in (NodeKind.var_decl, NodeKind.const_decl) and ast.name(decl) not in self.struct_nodes:
                self.compile_global(decl)
        for fn in self.functions.values():
            self.compile_function(fn)

    def struct_type(self, name: str, decl: int, stack: tuple = ()) -> StructT:
        if name in self.structs:
            return self.structs[name]
        if name in stack:
            raise self.error(decl, f"struct '{name}' contains itself")
        fields = []
        for fnode in self.ast.items(self.ast[decl].rhs):
            fname = self.ast.name(fnode)
            if any(fname == f for f, _ in fields):
                raise self.error(fnode, f"duplicate field '{fname}'")
            fields.append((fname, self.resolve_type(self.ast[fnode].lhs, stack + (name,))))
        st = StructT(name, tuple(fields))
        self.structs[name] = st
        return st

    def resolve_type(self, node: int, stack: tuple = ()) -> Type:
        ast = self.ast
        n = ast[node]
        if n.kind is NodeKind.type_name:
            name = ast.name(node)
            if name in PRIMITIVES:
                return PRIMITIVES[name]
            if name in self.struct_nodes:
                return self.struct_type(name, self.struct_nodes[name], stack)
            raise self.error(node, f"unknown type '{name}'")
        if n.kind is NodeKind.array_type:
            if n.lhs == 0:
                raise self.error(node, "array length '_' is only allowed in array literals")
            length = int(ast.text(n.lhs), 0)
            return ArrayT(self.resolve_type(n.rhs, stack), length)
        if n.kind is NodeKind.slice_type:
            return SliceT(self.resolve_type(n.lhs, stack))
        if n.kind is NodeKind.ptr_type:
            return PtrT(self.resolve_type(n.lhs, ()))
        raise self.error(node, "expected a type")

    def compile_global(self, decl: int) -> None:
        ast = self.ast
        node = ast[decl]
        name = ast.name(decl)
        self.begin_function(None)
        declared = self.resolve_type(node.lhs) if node.lhs else None
        if ast[node.rhs].kind is NodeKind.undefined_literal:
            if declared is None:
                raise self.error(decl, f"'{name}' needs a type to be undefined")
            init = self.const_expr(zero_value(declared), declared)
            value_type = declared
        else:
            init = self.expr(node.rhs)
            value_type = declared or self.concrete(init, node.rhs)
            init = self.coerce(init, value_type, node.rhs)
        init = self.copy_if_place(init)
        slot = len(self.globals)
        self.globals.append(None)
        nslots = self.nslots
        fn = init.fn
        self.global_inits.append((slot, lambda: fn([None] * nslots)))
        self.global_vars[name] = GlobalVar(name, slot, value_type, node.kind is NodeKind.var_decl)

    # -- functions ---------------------------------------------------------
    def begin_function(self, fn: Function | None) -> None:
        self._fn = fn
        self.scopes = [{}]
        self.all_locals = []
        self.nslots = 1  # slot 0 holds the return value

    def declare(self, name: str, type_: Type, mutable: bool, node: int, **kw) -> Local:
        local = Local(name, self.nslots, type_, mutable, node, **kw)
        self.nslots += 1
        self.scopes[-1][name] = local
        self.all_locals.append(local)
        return local

    def compile_function(self, fn: Function) -> None:
        ast = self.ast
        params, _, body = ast.fn_parts(fn.node)
        self.begin_function(fn)
        for p, ptype in zip(params, fn.type.params):
            self.declare(ast.name(p), ptype, False, p, is_param=True)
        body_fn, _ = self.block(body)
        for local in self.all_locals:
            if not local.used:
                what = "function parameter" if local.is_param else "local variable"
                raise self.error(local.node, f"unused {what} '{local.name}'")
        nparams = len(params)
        args = ", ".join(f"a{i}" for i in range(nparams))
        frame = ["None", *(f"a{i}" for i in range(nparams))] + ["None"] * (self.nslots - 1 - nparams)
        line, col = _line_col(self.src, ast[fn.node].start)
        where = f"{fn.name} ({line}:{col})"
        lines = [
            f"fr = [{', '.join(frame)}]",
            "try:",
            "    r = _body(fr)",
            "except _Located as e:",
            "    if isinstance(e, _KRE): e.trace.append(_where)",
            "    raise",
            "except (_TeamAborted, _CheckError):",
            "    raise",
            "except RecursionError:",
            "    raise _err('stack overflow') from None",
            "except Exception as e:",
            "    raise _err(f'{type(e).__name__}: {e}') from e",
        ]
        if fn.type.ret is not VOID:
            lines += ["if r != 3:", "    raise _err(_noret)"]
        lines.append("return fr[0]")

        def err(message, node=fn.node, where=where):
            exc = self.runtime_error(node, message)
            exc.trace.append(where)
            return exc

        env = {
            "_body": body_fn, "_Located": Located, "_KRE": KernelRuntimeError, "_where": where,
            "_TeamAborted": rt.TeamAborted, "_CheckError": CheckError, "_err": err,
            "_noret": f"function '{fn.name}' ended without returning a value",
        }
        fn.entry = _define("entry", lines, env, args)
        fn.nslots = self.nslots

    def lookup(self, name: str):
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        return None

    # -- statements ----------------------------------------------------------
    def block(self, node: int):
        """Compile a block into one function; returns (fn, may_signal)."""
        self.scopes.append({})
        lines: list[str] = []
        env: dict = {}
        may_signal = False
        for stmt in self.ast.items(node):
            stmt_lines, signal = self.statement(stmt, env)
            lines.extend(stmt_lines)
            may_signal |= signal
        self.scopes.pop()
        return _define(self.fresh("_b"), lines, env), may_signal

    def call_stmt(self, fn, signal: bool, env: dict) -> list[str]:
        name = self.fresh("_s")
        env[name] = fn
        if signal:
            return [f"_r = {name}(f)", "if _r: return _r"]
        return [f"{name}(f)"]

    def statement(self, node: int, env: dict) -> tuple[list[str], bool]:
        """Lines of Python for one statement, and whether it can emit a signal."""
        ast = self.ast
        n = ast[node]
        kind = n.kind
        if kind in (NodeKind.var_decl, NodeKind.const_decl):
            return self.var_decl(node, env), False
        if kind is NodeKind.assign:
            return self.assign(node, env), False
        if kind is NodeKind.expr_stmt:
            e = self.expr(n.lhs)
            if e.type not in (VOID,) and ast[n.lhs].kind is not NodeKind.call:
                raise self.error(node, "expression value is ignored; use '_ = ...' to discard it")
            return [self.operand(e, env)], False
        if kind is NodeKind.discard:
            e = self.expr(n.lhs)
            return [self.operand(e, env)], False
        if kind is NodeKind.block:
            fn, signal = self.block(node)
            return self.call_stmt(fn, signal, env), signal
        if kind is NodeKind.while_loop:
            fn, signal = self.while_loop(node)
            return self.call_stmt(fn, signal, env), signal
        if kind is NodeKind.if_stmt:
            fn, signal = self.if_stmt(node)
            return self.call_stmt(fn, signal, env), signal
        if kind is NodeKind.return_stmt:
            if self._fn is None:
                raise self.error(node, "return outside a function")
            ret = self._fn.type.ret
            if n.lhs:
                if ret is VOID:
                    raise self.error(node, "void function cannot return a value")
                e = self.copy_if_place(self.coerce(self.expr(n.lhs), ret, n.lhs))
                return [f"f[0] = {self.operand(e, env)}", "return 3"], True
            if ret is not VOID:
                raise self.error(node, f"missing return value of type {ret}")
            return ["return 3"], True
        if kind is NodeKind.break_stmt:
            self.require_loop(node)
            return ["return 1"], True
        if kind is NodeKind.continue_stmt:
            self.require_loop(node)
            return ["return 2"], True
        if kind in OMP_KINDS:
            raise self.error(node, "OpenMP directives must be preprocessed before execution")
        raise self.error(node, f"unexpected {kind.name}")

    def require_loop(self, node: int) -> None:
        if not getattr(self, "_loop_depth", 0):
            raise self.error(node, "break/continue outside a loop")

    def var_decl(self, node: int, env: dict) -> list[str]:
        ast = self.ast
        n = ast[node]
        name = ast.name(node)
        declared = self.resolve_type(n.lhs) if n.lhs else None
        mutable = n.kind is NodeKind.var_decl
        if ast[n.rhs].kind is NodeKind.undefined_literal:
            if declared is None:
                raise self.error(node, f"'{name}' needs a type to be undefined")
            local = self.declare(name, declared, mutable, node,
                                 undefined=self.debug and not has_value_semantics(declared)
                                 and not isinstance(declared, SliceT))
            if has_value_semantics(declared):
                zname = self.fresh("_z")
                env[zname] = lambda t=declared: zero_value(t)
                return [f"f[{local.slot}] = {zname}()"]
            fill = "_UNDEF" if local.undefined else repr(zero_value(declared))
            env["_UNDEF"] = UNDEF
            return [f"f[{local.slot}] = {fill}"]
        init = self.expr(n.rhs)
        value_type = declared or self.concrete(init, n.rhs)
        init = self.copy_if_place(self.coerce(init, value_type, n.rhs))
        if value_type in (VOID, NULL, ENUM, STRING, NAMESPACE):
            raise self.error(node, f"cannot declare a variable of type {value_type}")
        local = self.declare(name, value_type, mutable, node)
        return [f"f[{local.slot}] = {self.operand(init, env)}"]

    def assign(self, node: int, env: dict) -> list[str]:
        ast = self.ast
        n = ast[node]
        op = ast.op(node)
        target = n.lhs
        tkind = ast[target].kind
        value = self.expr(n.rhs)
        lines: list[str] = []

        if tkind is NodeKind.identifier:
            name = ast.name(target)
            local = self.lookup(name)
            if local is not None:
                local.used = True
                if not local.mutable:
                    raise self.error(target, f"cannot assign to constant '{name}'")
                store, ttype = f"f[{local.slot}]", local.type
                current = self.read_local(local, target)
            elif name in self.global_vars:
                gv = self.global_vars[name]
                if not gv.mutable:
                    raise self.error(target, f"cannot assign to constant '{name}'")
                env["_G"] = self.globals
                store, ttype = f"_G[{gv.slot}]", gv.type
                current = Expr(store, {"_G": self.globals}, ttype)
            else:
                raise self.error(target, f"use of undeclared identifier '{name}'")
        elif tkind is NodeKind.index:
            arr, idx, ttype = self.index_parts(target)
            lines += [f"_a = {self.operand(arr, env)}", f"_i = {self.operand(idx, env)}"]
            if self.debug:
                chk = self.fresh("_ck")
                env[chk] = self.bounds_checker(target)
                lines.append(f"{chk}(_a, _i)")
            store = "_a[_i]"
            current = Expr(store, {}, ttype)
        elif tkind is NodeKind.field:
            obj, k, ttype, via_ptr = self.field_parts(target)
            src = self.operand(obj, env)
            lines.append(f"_o = {src}.get()" if via_ptr else f"_o = {src}")
            store = f"_o[{k}]"
            current = Expr(store, {}, ttype)
        elif tkind is NodeKind.deref:
            ptr = self.expr(ast[target].lhs)
            if not isinstance(ptr.type, PtrT) or ptr.type.elem is OPAQUE:
                raise self.error(target, f"cannot dereference {ptr.type}")
            ttype = ptr.type.elem
            lines.append(f"_p = {self.operand(ptr, env)}")
            current = Expr("_p.get()", {}, ttype)
            store = None
        else:
            raise self.error(target, "invalid assignment target")

        if op == "=":
            result = self.copy_if_place(self.coerce(value, ttype, n.rhs))
        else:
            result = self.binary_op(op[:-1], current, value, node)
            result = self.coerce(result, ttype, node)
        if result.type != ttype and not assignable(ttype, result.type):
            raise self.error(node, f"cannot assign {result.type} to {ttype}")
        rsrc = self.operand(result, env)
        if store is None:
            lines.append(f"_p.set({rsrc})")
        else:
            lines.append(f"{store} = {rsrc}")
        return lines

    def while_loop(self, node: int):
        ast = self.ast
        cond_node, cont, body = ast.while_parts(node)
        cond = self.expr(cond_node)
        if cond.type is not BOOL:
            raise self.error(cond_node, f"loop condition must be bool, found {cond.type}")
        env: dict = {}
        csrc = self.operand(cond, env)
        self._loop_depth = getattr(self, "_loop_depth", 0) + 1
        body_fn, signal = self.block(body)
        self._loop_depth -= 1
        env["_body"] = body_fn
        cont_lines: list[str] = []
        if cont:
            if ast[cont].kind is NodeKind.assign:
                cont_lines = self.assign(cont, env)
            else:
                cont_lines, _ = self.statement(cont, env)
        if signal:
            lines = [f"while {csrc}:", "    _r = _body(f)", "    if _r:",
                     "        if _r == 1: break", "        if _r == 3: return 3"]
        else:
            lines = [f"while {csrc}:", "    _body(f)"]
        lines += ["    " + c for c in cont_lines]
        returns = signal and self.contains(body, NodeKind.return_stmt)
        return _define(self.fresh("_w"), lines, env), returns

    def contains(self, node: int, kind: NodeKind) -> bool:
        return any(self.ast[i].kind is kind for i in self.ast.walk(node))

    def if_stmt(self, node: int):
        ast = self.ast
        cond_node, then, other = ast.if_parts(node)
        cond = self.expr(cond_node)
        if cond.type is not BOOL:
            raise self.error(cond_node, f"if condition must be bool, found {cond.type}")
        env: dict = {}
        then_fn, s1 = self.block(then)
        env["_then"] = then_fn
        lines = [f"if {self.operand(cond, env)}:", "    return _then(f)"]
        signal = s1
        if other:
            if ast[other].kind is NodeKind.if_stmt:
                else_fn, s2 = self.if_stmt(other)
            else:
                else_fn, s2 = self.block(other)
            env["_else"] = else_fn
            lines += ["return _else(f)"]
            signal |= s2
        return _define(self.fresh("_if"), lines, env), signal

    # -- expressions ---------------------------------------------------------
    def expr(self, node: int) -> Expr:
        kind = self.ast[node].kind
        handler = getattr(self, "expr_" + kind.name, None)
        if handler is None:
            raise self.error(node, f"{kind.name.replace('_', ' ')} is not an expression")
        return handler(node)

    def concrete(self, e: Expr, node: int) -> Type:
        if e.type is NULL:
            raise self.error(node, "cannot infer a type from null")
        if e.type is ENUM:
            raise self.error(node, "cannot infer a type from an enum literal")
        return e.type

    def coerce(self, e: Expr, target: Type, node: int) -> Expr:
        if e.type == target:
            return e
        if e.literal and target is F64:
            return self.const_expr(float(e.const), F64)
        if assignable(target, e.type):
            return Expr(e.src, e.env, target, e.const, e.is_const, place=e.place)
        raise self.error(node, f"expected {target}, found {e.type}")

    def copy_if_place(self, e: Expr) -> Expr:
        if e.place and has_value_semantics(e.type):
            name = self.fresh("_cp")
            env = dict(e.env)
            env[name] = copier(e.type)
            return Expr(f"{name}({e.src})", env, e.type)
        return e

    def read_local(self, local: Local, node: int) -> Expr:
        s = local.slot
        if local.undefined:
            u, err = self.fresh("_u"), self.fresh("_e")
            env = {"_UNDEF": UNDEF, err: self.raiser(node, f"read of undefined variable '{local.name}'")}
            return Expr(f"({u} if ({u} := f[{s}]) is not _UNDEF else {err}())", env, local.type, place=True)
        return Expr(f"f[{s}]", {}, local.type, place=True)

    def expr_identifier(self, node: int) -> Expr:
        name = self.ast.name(node)
        local = self.lookup(name)
        if local is not None:
            local.used = True
            return self.read_local(local, node)
        if name in self.global_vars:
            gv = self.global_vars[name]
            return Expr(f"_G[{gv.slot}]", {"_G": self.globals}, gv.type, place=True)
        if name in self.functions:
            fn = self.functions[name]
            return self.const_expr(fn, fn.type)
        if name == "i64_max":
            return self.const_expr(I64_MAX, I64)
        if name == "i64_min":
            return self.const_expr(I64_MIN, I64)
        if name == "inf":
            return self.const_expr(math.inf, F64)
        if name == "omp":
            return Expr("None", {}, NAMESPACE)
        if name in BUILTIN_FUNCTIONS:
            raise self.error(node, f"builtin '{name}' can only be called")
        raise self.error(node, f"use of undeclared identifier '{name}'")

    def expr_int_literal(self, node: int) -> Expr:
        value = int(self.ast.text(node), 0)
        if value > I64_MAX + 1:
            raise self.error(node, "integer literal does not fit in i64")
        return self.const_expr(value, I64, literal=True)

    def expr_float_literal(self, node: int) -> Expr:
        return self.const_expr(float(self.ast.text(node)), F64)

    def expr_bool_literal(self, node: int) -> Expr:
        return self.const_expr(self.ast.text(node) == "true", BOOL)

    def expr_string_literal(self, node: int) -> Expr:
        return self.const_expr(pyast.literal_eval(self.ast.text(node)), STRING)

    def expr_null_literal(self, node: int) -> Expr:
        return Expr("None", {}, NULL, None, True)

    def expr_enum_literal(self, node: int) -> Expr:
        return self.const_expr(self.ast.name(node), ENUM)

    def expr_undefined_literal(self, node: int) -> Expr:
        raise self.error(node, "'undefined' is only allowed as a variable initializer")

    def expr_grouped(self, node: int) -> Expr:
        inner = self.expr(self.ast[node].lhs)
        if inner.const is not None and inner.is_const and inner.src.isidentifier():
            return inner
        return Expr(f"({inner.src})", inner.env, inner.type, inner.const, inner.is_const, inner.literal)

    def check_i64(self, src: str, env: dict, node: int) -> str:
        r = self.fresh("_r")
        if self.debug:
            fail = self.fresh("_ov")
            env[fail] = self.raiser(node, "integer overflow")
            return f"({r} if {I64_MIN} <= ({r} := {src}) <= {I64_MAX} else {fail}())"
        env["_wrap"] = rt.wrap_i64
        return f"({r} if {I64_MIN} <= ({r} := {src}) <= {I64_MAX} else _wrap({r}))"

    def expr_unary(self, node: int) -> Expr:
        ast = self.ast
        op = ast.op(node)
        operand_node = ast[node].lhs
        if op == "&":
            return self.address_of(operand_node)
        e = self.expr(operand_node)
        env = dict(e.env)
        if op == "-":
            if e.literal:
                return self.const_expr(-e.const, I64, literal=True)
            if e.type is F64:
                return Expr(f"(-{e.src})", env, F64)
            if e.type is I64:
                if e.is_const and e.const > I64_MAX:
                    raise self.error(node, "integer literal does not fit in i64")
                return Expr(self.check_i64(f"-{e.src}", env, node), env, I64)
            raise self.error(node, f"cannot negate {e.type}")
        if e.is_const and e.const == I64_MAX + 1:
            raise self.error(operand_node, "integer literal does not fit in i64")
        if op == "!":
            if e.type is not BOOL:
                raise self.error(node, f"'!' needs bool, found {e.type}")
            return Expr(f"(not {e.src})", env, BOOL)
        if op == "~":
            if e.type is not I64:
                raise self.error(node, f"'~' needs i64, found {e.type}")
            return Expr(f"(~{e.src})", env, I64)
        raise self.error(node, f"unknown operator '{op}'")

    def binary_op(self, op: str, a: Expr, b: Expr, node: int) -> Expr:
        for e in (a, b):
            if e.is_const and e.type is I64 and not I64_MIN <= e.const <= I64_MAX:
                raise self.error(node, "integer literal does not fit in i64")
        if op in ("and", "or"):
            if a.type is not BOOL or b.type is not BOOL:
                raise self.error(node, f"'{op}' needs bool operands, found {a.type} and {b.type}")
            env = {**a.env, **b.env}
            return Expr(f"({a.src} {op} {b.src})", env, BOOL)
        if a.literal and b.type is F64:
            a = self.coerce(a, F64, node)
        if b.literal and a.type is F64:
            b = self.coerce(b, F64, node)
        if a.type != b.type:
            raise self.error(node, f"mismatched operand types {a.type} and {b.type} for '{op}'"
                                   " (convert explicitly with float() or int())")
        t = a.type
        env = {**a.env, **b.env}
        x, y = a.src, b.src
        if op in ("==", "!="):
            if t not in (I64, F64, BOOL):
                raise self.error(node, f"cannot compare {t}")
            return Expr(f"({x} {op} {y})", env, BOOL)
        if op in ("<", "<=", ">", ">="):
            if t not in (I64, F64):
                raise self.error(node, f"cannot order {t}")
            return Expr(f"({x} {op} {y})", env, BOOL)
        if t is F64:
            if op in ("+", "-", "*"):
                return Expr(f"({x} {op} {y})", env, F64)
            if op == "/":
                env["_fdiv"] = _fdiv
                return Expr(f"_fdiv({x}, {y})", env, F64)
            raise self.error(node, f"operator '{op}' is not defined on f64")
        if t is not I64:
            raise self.error(node, f"operator '{op}' is not defined on {t}")
        if op in ("+", "-", "*"):
            if a.is_const and b.is_const:
                value = {"+": a.const + b.const, "-": a.const - b.const, "*": a.const * b.const}[op]
                if not I64_MIN <= value <= I64_MAX:
                    raise self.error(node, "integer overflow in constant expression")
                return self.const_expr(value, I64, literal=a.literal and b.literal)
            return Expr(self.check_i64(f"{x} {op} {y}", env, node), env, I64)
        if op in ("+%", "-%", "*%"):
            env["_wrap"] = rt.wrap_i64
            r = self.fresh("_r")
            return Expr(f"({r} if {I64_MIN} <= ({r} := {x} {op[0]} {y}) <= {I64_MAX} else _wrap({r}))",
                        env, I64)
        if op in ("&", "|", "^"):
            return Expr(f"({x} {op} {y})", env, I64)
        helper = self.fresh("_h")
        env[helper] = self.int_helper(op, node)
        return Expr(f"{helper}({x}, {y})", env, I64)

    def int_helper(self, op: str, node: int):
        zero = self.raiser(node, "division by zero")
        overflow = self.raiser(node, "integer overflow")
        bad_shift = self.raiser(node, "shift amount out of range")
        debug = self.debug

        def fix(r):
            if I64_MIN <= r <= I64_MAX:
                return r
            return overflow() if debug else rt.wrap_i64(r)

        if op == "/":
            def div(x, y):
                if y == 0:
                    zero()
                q = abs(x) // abs(y)
                return fix(-q if (x < 0) != (y < 0) else q)
            return div
        if op == "%":
            def rem(x, y):
                if y == 0:
                    zero()
                r = abs(x) % abs(y)
                return -r if x < 0 else r
            return rem
        if op == "<<":
            def shl(x, s):
                if not 0 <= s < 64:
                    bad_shift()
                return fix(x << s)
            return shl
        if op == ">>":
            def shr(x, s):
                if not 0 <= s < 64:
                    bad_shift()
                return x >> s
            return shr
        raise self.error(node, f"unknown operator '{op}'")

    def expr_binary(self, node: int) -> Expr:
        n = self.ast[node]
        return self.binary_op(self.ast.op(node), self.expr(n.lhs), self.expr(n.rhs), node)

    def bounds_checker(self, node: int):
        src = self.src
        offset = self.ast[node].start

        def check(a, i):
            if not 0 <= i < len(a):
                raise KernelRuntimeError(f"index {i} out of bounds for length {len(a)}", offset, src)
        return check

    def index_parts(self, node: int):
        n = self.ast[node]
        arr = self.expr(n.lhs)
        t = arr.type
        if isinstance(t, PtrT) and isinstance(t.elem, (ArrayT, SliceT)):
            arr = Expr(f"{arr.src}.get()", arr.env, t.elem, place=True)
            t = t.elem
        if not isinstance(t, (ArrayT, SliceT)):
            raise self.error(node, f"cannot index {t}")
        idx = self.coerce(self.expr(n.rhs), I64, n.rhs)
        return arr, idx, t.elem

    def expr_index(self, node: int) -> Expr:
        arr, idx, elem = self.index_parts(node)
        env = {**arr.env, **idx.env}
        if self.debug:
            helper = self.fresh("_ix")
            check = self.bounds_checker(node)

            def load(a, i, check=check):
                if 0 <= i < len(a):
                    return a[i]
                check(a, i)
            env[helper] = load
            return Expr(f"{helper}({arr.src}, {idx.src})", env, elem, place=True)
        return Expr(f"{arr.src}[{idx.src}]", env, elem, place=True)

    def field_parts(self, node: int):
        n = self.ast[node]
        obj = self.expr(n.lhs)
        t = obj.type
        via_ptr = isinstance(t, PtrT) and isinstance(t.elem, StructT)
        st = t.elem if via_ptr else t
        if not isinstance(st, StructT):
            raise self.error(node, f"{t} has no fields")
        fname = self.ast.name(node)
        k = st.field_index(fname)
        if k < 0:
            raise self.error(node, f"struct '{st.name}' has no field '{fname}'")
        return obj, k, st.fields[k][1], via_ptr

    def expr_field(self, node: int) -> Expr:
        if self.ast[self.ast[node].lhs].kind is NodeKind.identifier and \
                self.ast.name(self.ast[node].lhs) == "omp" and self.lookup("omp") is None:
            raise self.error(node, "omp functions can only be called")
        obj, k, ftype, via_ptr = self.field_parts(node)
        src = f"{obj.src}.get()[{k}]" if via_ptr else f"{obj.src}[{k}]"
        return Expr(src, dict(obj.env), ftype, place=True)

    def expr_deref(self, node: int) -> Expr:
        ptr = self.expr(self.ast[node].lhs)
        if not isinstance(ptr.type, PtrT) or ptr.type.elem is OPAQUE:
            raise self.error(node, f"cannot dereference {ptr.type}")
        return Expr(f"{ptr.src}.get()", dict(ptr.env), ptr.type.elem, place=True)

    def address_of(self, node: int) -> Expr:
        ast = self.ast
        n = ast[node]
        if n.kind is NodeKind.identifier:
            name = ast.name(node)
            local = self.lookup(name)
            env = {"_Ref": SlotRef}
            if local is not None:
                local.used = True
                return Expr(f"_Ref(f, {local.slot})", env, PtrT(local.type))
            if name in self.global_vars:
                gv = self.global_vars[name]
                env["_G"] = self.globals
                return Expr(f"_Ref(_G, {gv.slot})", env, PtrT(gv.type))
            raise self.error(node, f"cannot take the address of '{name}'")
        if n.kind is NodeKind.index:
            arr, idx, elem = self.index_parts(node)
            env = {**arr.env, **idx.env}
            helper = self.fresh("_ar")
            check = self.bounds_checker(node)

            def ref(a, i, check=check):
                check(a, i)
                return ElemRef(a, i)
            env[helper] = ref
            return Expr(f"{helper}({arr.src}, {idx.src})", env, PtrT(elem))
        if n.kind is NodeKind.field:
            obj, k, ftype, via_ptr = self.field_parts(node)
            env = dict(obj.env)
            env["_ERef"] = ElemRef
            src = f"{obj.src}.get()" if via_ptr else obj.src
            return Expr(f"_ERef({src}, {k})", env, PtrT(ftype))
        if n.kind is NodeKind.deref:
            ptr = self.expr(n.lhs)
            if not isinstance(ptr.type, PtrT):
                raise self.error(node, f"cannot dereference {ptr.type}")
            return ptr
        if n.kind is NodeKind.grouped:
            return self.address_of(n.lhs)
        raise self.error(node, "cannot take the address of a temporary value")

    def expr_struct_init(self, node: int) -> Expr:
        ast = self.ast
        type_node, items = ast.list_parts(node)
        st = self.resolve_type(type_node)
        if not isinstance(st, StructT):
            raise self.error(node, f"{st} is not a struct type")
        values: list[str | None] = [None] * len(st.fields)
        env: dict = {}
        for item in items:
            fname = ast.name(item)
            k = st.field_index(fname)
            if k < 0:
                raise self.error(item, f"struct '{st.name}' has no field '{fname}'")
            if values[k] is not None:
                raise self.error(item, f"field '{fname}' initialized twice")
            e = self.copy_if_place(self.coerce(self.expr(ast[item].lhs), st.fields[k][1], item))
            values[k] = self.operand(e, env)
        missing = [st.fields[k][0] for k, v in enumerate(values) if v is None]
        if missing:
            raise self.error(node, f"missing field(s) {', '.join(missing)} in '{st.name}' literal")
        return Expr(f"[{', '.join(values)}]", env, st)

    def expr_array_init(self, node: int) -> Expr:
        ast = self.ast
        type_node, items = ast.list_parts(node)
        tn = ast[type_node]
        elem = self.resolve_type(tn.rhs)
        length = int(ast.text(tn.lhs), 0) if tn.lhs else len(items)
        if length != len(items):
            raise self.error(node, f"array literal has {len(items)} elements, expected {length}")
        env: dict = {}
        parts = [self.operand(self.copy_if_place(self.coerce(self.expr(i), elem, i)), env) for i in items]
        return Expr(f"[{', '.join(parts)}]", env, ArrayT(elem, length))

    # -- calls ---------------------------------------------------------------
    def args(self, node: int) -> list[int]:
        return self.ast.list_parts(node)[1]

    def expr_call(self, node: int) -> Expr:
        ast = self.ast
        callee, args = ast.list_parts(node)
        cn = ast[callee]
        if cn.kind is NodeKind.field and ast[cn.lhs].kind is NodeKind.identifier and \
                ast.name(cn.lhs) == "omp" and self.lookup("omp") is None:
            return self.omp_api(ast.name(callee), args, node)
        if cn.kind is NodeKind.identifier:
            name = ast.name(callee)
            if self.lookup(name) is None and name not in self.global_vars:
                if name in BUILTIN_FUNCTIONS:
                    return getattr(self, "builtin_" + name)(args, node)
        fexpr = self.expr(callee)
        if not isinstance(fexpr.type, FnT):
            raise self.error(callee, f"{fexpr.type} is not callable")
        ftype = fexpr.type
        if len(args) != len(ftype.params):
            raise self.error(node, f"expected {len(ftype.params)} argument(s), found {len(args)}")
        env = dict(fexpr.env)
        parts = [self.operand(self.copy_if_place(self.coerce(self.expr(a), t, a)), env)
                 for a, t in zip(args, ftype.params)]
        return Expr(f"{fexpr.src}.entry({', '.join(parts)})", env, ftype.ret)

    def typed_args(self, args: list[int], types: tuple, node: int, name: str) -> tuple[list[Expr], dict]:
        if len(args) != len(types):
            raise self.error(node, f"'{name}' expects {len(types)} argument(s), found {len(args)}")
        exprs, env = [], {}
        for a, t in zip(args, types):
            e = self.expr(a)
            if t is not None:
                e = self.coerce(e, t, a)
            env.update(e.env)
            exprs.append(e)
        return exprs, env

    def call_helper(self, fn, exprs: list[Expr], env: dict, type_: Type, node: int | None = None) -> Expr:
        name = self.fresh("_f")
        if node is not None:
            fn = self.located(fn, node)
        env[name] = fn
        return Expr(f"{name}({', '.join(e.src for e in exprs)})", env, type_)

    def located(self, fn, node: int):
        src = self.src
        offset = self.ast[node].start

        def call(*a):
            try:
                return fn(*a)
            except (Located, rt.TeamAborted):
                raise
            except (ValueError, TypeError, ArithmeticError, IndexError, rt.ContractError) as exc:
                raise KernelRuntimeError(str(exc), offset, src) from None
        return call

    def numeric_arg(self, args, node, name) -> Expr:
        if len(args) != 1:
            raise self.error(node, f"'{name}' expects 1 argument, found {len(args)}")
        e = self.expr(args[0])
        if e.literal:
            e = self.coerce(e, F64, args[0])
        return e

    def builtin_print(self, args, node) -> Expr:
        env: dict = {}
        parts = []
        for a in args:
            e = self.expr(a)
            if e.type in (VOID, NULL, ENUM, NAMESPACE):
                raise self.error(a, f"cannot print {e.type}")
            fmt = self.fresh("_fmt")
            env[fmt] = _formatter(e.type)
            parts.append(f"{fmt}({self.operand(e, env)})")
        out, lock = self.output, self.output_lock

        def emit(line: str) -> None:
            with lock:
                out.append(line)
        env["_emit"] = emit
        joined = " + ' ' + ".join(parts) if parts else "''"
        return Expr(f"_emit({joined})", env, VOID)

    def builtin_len(self, args, node) -> Expr:
        exprs, env = self.typed_args(args, (None,), node, "len")
        t = exprs[0].type
        src = exprs[0].src
        if isinstance(t, PtrT) and isinstance(t.elem, (ArrayT, SliceT)):
            src, t = f"{src}.get()", t.elem
        if not isinstance(t, (ArrayT, SliceT)):
            raise self.error(node, f"len() needs an array or slice, found {t}")
        return Expr(f"len({src})", env, I64)

    def _float_fn(self, args, node, name, fn) -> Expr:
        e = self.numeric_arg(args, node, name)
        if e.type is not F64:
            raise self.error(node, f"'{name}' needs f64, found {e.type}")
        return self.call_helper(fn, [e], dict(e.env), F64)

    def builtin_sqrt(self, args, node) -> Expr:
        return self._float_fn(args, node, "sqrt", _sqrt)

    def builtin_log(self, args, node) -> Expr:
        return self._float_fn(args, node, "log", _log)

    def builtin_exp(self, args, node) -> Expr:
        return self._float_fn(args, node, "exp", _exp)

    def builtin_floor(self, args, node) -> Expr:
        return self._float_fn(args, node, "floor", lambda x: float(math.floor(x)) if math.isfinite(x) else x)

    def builtin_abs(self, args, node) -> Expr:
        e = self.expr(args[0]) if len(args) == 1 else None
        if e is None:
            raise self.error(node, "'abs' expects 1 argument")
        env = dict(e.env)
        if e.type is F64:
            return Expr(f"abs({e.src})", env, F64)
        if e.type is I64:
            return Expr(self.check_i64(f"abs({e.src})", env, node), env, I64)
        raise self.error(node, f"'abs' needs a number, found {e.type}")

    def builtin_float(self, args, node) -> Expr:
        exprs, env = self.typed_args(args, (None,), node, "float")
        if exprs[0].type is not I64:
            raise self.error(node, f"float() converts i64, found {exprs[0].type}")
        return Expr(f"float({exprs[0].src})", env, F64)

    def builtin_int(self, args, node) -> Expr:
        exprs, env = self.typed_args(args, (F64,), node, "int")
        debug = self.debug
        fail = self.raiser(node, "float value out of i64 range")

        def to_int(x):
            if x != x or x in (math.inf, -math.inf):
                return fail() if debug else 0
            r = int(x)
            if I64_MIN <= r <= I64_MAX:
                return r
            return fail() if debug else rt.wrap_i64(r)
        return self.call_helper(to_int, exprs, env, I64)

    def _minmax(self, args, node, name) -> Expr:
        if len(args) != 2:
            raise self.error(node, f"'{name}' expects 2 arguments")
        a, b = self.expr(args[0]), self.expr(args[1])
        if a.literal and b.type is F64:
            a = self.coerce(a, F64, args[0])
        if b.literal and a.type is F64:
            b = self.coerce(b, F64, args[1])
        if a.type != b.type or a.type not in (I64, F64):
            raise self.error(node, f"'{name}' needs two numbers of the same type, found {a.type} and {b.type}")
        op = ReductionOp[name]
        return self.call_helper(lambda x, y: rt.apply_op(op, x, y), [a, b], {**a.env, **b.env}, a.type)

    def builtin_min(self, args, node) -> Expr:
        return self._minmax(args, node, "min")

    def builtin_max(self, args, node) -> Expr:
        return self._minmax(args, node, "max")

    def builtin_now_seconds(self, args, node) -> Expr:
        self.typed_args(args, (), node, "now_seconds")
        return Expr("_wt()", {"_wt": rt.get_wtime}, F64)

    def builtin_alloc(self, args, node) -> Expr:
        if len(args) != 2:
            raise self.error(node, "'alloc' expects a type and a length")
        elem = self.resolve_type(args[0])
        n = self.coerce(self.expr(args[1]), I64, args[1])
        fail = self.raiser(node, "negative allocation length")

        def alloc(count, elem=elem):
            if count < 0:
                fail()
            if has_value_semantics(elem):
                return [zero_value(elem) for _ in range(count)]
            return [zero_value(elem)] * count
        return self.call_helper(alloc, [n], dict(n.env), SliceT(elem))

    def builtin_cast(self, args, node) -> Expr:
        if len(args) != 2:
            raise self.error(node, "'cast' expects a pointer type and a value")
        target = self.resolve_type(args[0])
        value = self.expr(args[1])
        if not isinstance(target, PtrT) or not isinstance(value.type, PtrT):
            raise self.error(node, f"cast() converts between pointer types, found {value.type} -> {target}")
        return Expr(value.src, dict(value.env), target)

    # -- OpenMP intrinsics -----------------------------------------------------
    def omp_api(self, name: str, args: list[int], node: int) -> Expr:
        table = {
            "get_thread_num": ((), I64, rt.get_thread_num),
            "get_num_threads": ((), I64, rt.get_num_threads),
            "get_max_threads": ((), I64, rt.get_max_threads),
            "get_wtime": ((), F64, rt.get_wtime),
            "set_num_threads": ((I64,), VOID, rt.set_num_threads),
        }
        if name not in table:
            raise self.error(node, f"unknown function 'omp.{name}'")
        params, ret, fn = table[name]
        exprs, env = self.typed_args(args, params, node, f"omp.{name}")
        return self.call_helper(fn, exprs, env, ret, node)

    def enum_arg(self, e: Expr, enum_type, node: int):
        if e.type is not ENUM:
            raise self.error(node, f"expected an enum literal, found {e.type}")
        try:
            return enum_type[e.const]
        except KeyError:
            raise self.error(node, f"unknown {enum_type.__name__} '.{e.const}'") from None

    def builtin_omp_fork_call(self, args, node) -> Expr:
        exprs, env = self.typed_args(args, (None, None, None, None), node, "omp_fork_call")
        ftype = exprs[0].type
        want = FnT((CTX, PtrT(OPAQUE), PtrT(OPAQUE), PtrT(OPAQUE)), VOID)
        if ftype != want:
            raise self.error(args[0], f"outlined function must have type {want}, found {ftype}")
        for a, e in zip(args[1:], exprs[1:]):
            if not (isinstance(e.type, PtrT) or e.type is NULL):
                raise self.error(a, f"argument groups are passed as pointers, found {e.type}")
        interp = self

        def fork(fn, fp, sh, rd):
            rt.fork_call(lambda ctx, a, b, c: interp.invoke_outlined(fn, ctx, a, b, c), fp, sh, rd)
        return self.call_helper(fork, exprs, env, VOID)

    def invoke_outlined(self, fn: Function, ctx, firstprivate, shared, reduction) -> None:
        fn.entry(ctx, firstprivate, shared, reduction)

    def builtin_omp_static_init(self, args, node) -> Expr:
        exprs, env = self.typed_args(args, (CTX, I64, I64, I64, I64), node, "omp_static_init")

        def static_init(ctx, lower, upper, increment, chunk):
            return [k for rng in rt.static_init(ctx, lower, upper, increment, chunk) for k in rng]
        return self.call_helper(static_init, exprs, env, SliceT(I64), node)

    def builtin_omp_static_fini(self, args, node) -> Expr:
        exprs, env = self.typed_args(args, (CTX,), node, "omp_static_fini")
        return self.call_helper(rt.static_fini, exprs, env, VOID, node)

    def builtin_omp_dispatch_init(self, args, node) -> Expr:
        exprs, env = self.typed_args(args, (CTX, None, I64, I64, I64, I64, BOOL), node, "omp_dispatch_init")
        kind = self.enum_arg(exprs[1], ScheduleKind, args[1])
        exprs[1] = self.const_expr(int(kind), I64)
        env.update(exprs[1].env)
        return self.call_helper(rt.dispatch_init, exprs, env, VOID, node)

    def builtin_omp_dispatch_next(self, args, node) -> Expr:
        exprs, env = self.typed_args(args, (CTX, PtrT(I64), PtrT(I64)), node, "omp_dispatch_next")

        def dispatch_next(ctx, lo_ref, hi_ref):
            got = rt.dispatch_next(ctx)
            if got is None:
                return False
            lo_ref.set(got[0])
            hi_ref.set(got[1])
            return True
        return self.call_helper(dispatch_next, exprs, env, BOOL, node)

    def builtin_omp_barrier(self, args, node) -> Expr:
        exprs, env = self.typed_args(args, (CTX,), node, "omp_barrier")
        return self.call_helper(rt.barrier, exprs, env, VOID, node)

    def _atomic_args(self, args, node, name):
        if len(args) != 3:
            raise self.error(node, f"'{name}' expects 3 arguments")
        ptr = self.expr(args[0])
        if not isinstance(ptr.type, PtrT) or ptr.type.elem not in (I64, F64, BOOL):
            raise self.error(args[0], f"'{name}' needs a pointer to i64, f64 or bool, found {ptr.type}")
        op = self.enum_arg(self.expr(args[1]), ReductionOp, args[1])
        value = self.coerce(self.expr(args[2]), ptr.type.elem, args[2])
        try:
            rt.identity(op, {I64: int, F64: float, BOOL: bool}[ptr.type.elem])
        except TypeError as exc:
            raise self.error(node, str(exc)) from None
        opc = self.const_expr(int(op), I64)
        return [ptr, opc, value], {**ptr.env, **value.env, **opc.env}, ptr.type.elem

    def builtin_omp_atomic_rmw(self, args, node) -> Expr:
        exprs, env, _ = self._atomic_args(args, node, "omp_atomic_rmw")
        return self.call_helper(lambda c, op, v: rt.atomic_rmw(c, ReductionOp(op), v), exprs, env, VOID, node)

    def builtin_omp_cas_reduce(self, args, node) -> Expr:
        exprs, env, _ = self._atomic_args(args, node, "omp_cas_reduce")
        return self.call_helper(lambda c, op, v: rt.cas_reduce(c, ReductionOp(op), v), exprs, env, VOID, node)

    def builtin_omp_trip_count(self, args, node) -> Expr:
        exprs, env = self.typed_args(args, (I64, I64, I64), node, "omp_trip_count")
        return self.call_helper(rt.trip_count, exprs, env, I64, node)


def _line_col(source: bytes, offset: int) -> tuple[int, int]:
    from .errors import line_col
    return line_col(source, offset)


class Program:
    """A checked, compiled program ready to run any number of times."""

    def __init__(self, ast: Ast, mode: str = "debug"):
        self.compiler = Compiler(ast, mode)
        self.compiler.compile_program()
        self.mode = mode

    @property
    def functions(self) -> dict[str, Function]:
        return self.compiler.functions

    def run(self, entry: str = "main", args=(), *, threads: int | None = None) -> RunResult:
        c = self.compiler
        c.output.clear()
        fn = c.functions.get(entry)
        if fn is None:
            raise CheckError(f"no function named '{entry}'", 0, c.src)
        if len(args) != len(fn.type.params):
            raise CheckError(f"'{entry}' expects {len(fn.type.params)} argument(s), got {len(args)}", 0, c.src)
        saved = rt._requested_threads
        if threads is not None:
            rt.set_num_threads(threads)
        try:
            for slot, init in c.global_inits:
                c.globals[slot] = init()
            value = fn.entry(*args)
        except KernelRuntimeError as exc:
            return RunResult(1, _joined(c.output), None, exc)
        finally:
            rt._requested_threads = saved
        return RunResult(0, _joined(c.output), value)


def _joined(lines: list[str]) -> str:
    return "".join(line + "\n" for line in lines)


def run_program(ast: Ast, entry: str = "main", args=(), *, mode: str = "debug",
                threads: int | None = None) -> RunResult:
    """Check, compile and run ``entry``; output is whatever ``print`` produced."""
    return Program(ast, mode).run(entry, args, threads=threads)
