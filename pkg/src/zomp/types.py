"""Static types of the kernel language."""

from __future__ import annotations

from dataclasses import dataclass


class Type:
    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, eq=True)
class Prim(Type):
    name: str


I64 = Prim("i64")
F64 = Prim("f64")
BOOL = Prim("bool")
VOID = Prim("void")
OPAQUE = Prim("anyopaque")
CTX = Prim("omp_ctx")
STRING = Prim("string")
ENUM = Prim("enum literal")
NULL = Prim("null")
NAMESPACE = Prim("namespace")

PRIMITIVES = {t.name: t for t in (I64, F64, BOOL, VOID, OPAQUE, CTX)}
NUMERIC = (I64, F64)


@dataclass(frozen=True)
class ArrayT(Type):
    elem: Type
    length: int

    @property
    def name(self) -> str:
        return f"[{self.length}]{self.elem}"


@dataclass(frozen=True)
class SliceT(Type):
    elem: Type

    @property
    def name(self) -> str:
        return f"[]{self.elem}"


@dataclass(frozen=True)
class PtrT(Type):
    elem: Type

    @property
    def name(self) -> str:
        return f"*{self.elem}"


@dataclass(frozen=True, eq=False)
class StructT(Type):
    name: str
    fields: tuple[tuple[str, Type], ...]

    def field_index(self, field: str) -> int:
        for i, (fname, _) in enumerate(self.fields):
            if fname == field:
                return i
        return -1


@dataclass(frozen=True)
class FnT(Type):
    params: tuple[Type, ...]
    ret: Type

    @property
    def name(self) -> str:
        return f"fn({', '.join(map(str, self.params))}) {self.ret}"


def is_indexable(t: Type) -> bool:
    return isinstance(t, (ArrayT, SliceT))


def elem_type(t: Type) -> Type:
    return t.elem  # type: ignore[attr-defined]


def assignable(dst: Type, src: Type) -> bool:
    if dst == src:
        return True
    if isinstance(dst, PtrT):
        if src is NULL:
            return True
        if dst.elem is OPAQUE and isinstance(src, PtrT):
            return True
    if isinstance(dst, SliceT) and isinstance(src, ArrayT):
        return dst.elem == src.elem
    return False


def has_value_semantics(t: Type) -> bool:
    return isinstance(t, (ArrayT, StructT))


def zero_value(t: Type):
    """Storage for a fresh value of type ``t`` (arrays and structs zero-filled)."""
    if t is I64:
        return 0
    if t is F64:
        return 0.0
    if t is BOOL:
        return False
    if isinstance(t, ArrayT):
        if isinstance(t.elem, (ArrayT, StructT)):
            return [zero_value(t.elem) for _ in range(t.length)]
        return [zero_value(t.elem)] * t.length
    if isinstance(t, StructT):
        return [zero_value(ft) for _, ft in t.fields]
    return None


def copier(t: Type):
    """A function copying values of ``t`` (identity for reference-like types)."""
    if isinstance(t, ArrayT):
        if has_value_semantics(t.elem):
            inner = copier(t.elem)
            return lambda v: [inner(x) for x in v]
        return lambda v: v[:]
    if isinstance(t, StructT):
        parts = [copier(ft) if has_value_semantics(ft) else None for _, ft in t.fields]
        if not any(parts):
            return lambda v: v[:]
        return lambda v: [p(x) if p else x for p, x in zip(parts, v)]
    return None
