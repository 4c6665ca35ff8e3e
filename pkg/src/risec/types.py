"""Types of the source language: general types, storable data types, kinds.

Data types (the memory-representable subset) are kept structurally separate
from function types, so a function can never end up inside an array or tuple.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from . import nat
from .errors import KindError


class Kind(enum.Enum):
    NAT = "Nat"
    DATA = "DataType"
    ADDRESS = "AddrSp"

    def __str__(self):
        return self.value


class AddressSpace(enum.Enum):
    GLOBAL = "Global"
    LOCAL = "Local"
    PRIVATE = "Private"

    def __str__(self):
        return self.value


class Type:
    """Base class for all types."""


class DataType(Type):
    """Base class for storable types (never contains a function type)."""


@dataclass(frozen=True)
class TypeIdentifier(Type):
    name: str


@dataclass(frozen=True)
class FunType(Type):
    inp: Type
    out: Type


@dataclass(frozen=True)
class DepFunType(Type):
    kind: Kind
    param: str
    body: Type
    implicit: bool = False


@dataclass(frozen=True)
class ScalarType(DataType):
    name: str  # f32 | i32 | bool


F32 = ScalarType("f32")
I32 = ScalarType("i32")
BOOL = ScalarType("bool")


@dataclass(frozen=True)
class IndexType(DataType):
    size: nat.Nat


@dataclass(frozen=True)
class ArrayType(DataType):
    size: nat.Nat
    elem: DataType


@dataclass(frozen=True)
class TupleType(DataType):
    fst: DataType
    snd: DataType


@dataclass(frozen=True)
class DataTypeVar(DataType):
    """A type variable of data kind (scheme parameter or inference hole)."""

    name: str


def contains_fun_type(t: Type) -> bool:
    """Recursive checker for the storability invariant."""
    if isinstance(t, (FunType, DepFunType)):
        return True
    if isinstance(t, ArrayType):
        return contains_fun_type(t.elem)
    if isinstance(t, TupleType):
        return contains_fun_type(t.fst) or contains_fun_type(t.snd)
    return False


def type_to_text(t: Type) -> str:
    if isinstance(t, TypeIdentifier):
        return t.name
    if isinstance(t, DataTypeVar):
        return t.name
    if isinstance(t, ScalarType):
        return t.name
    if isinstance(t, IndexType):
        return f"Idx[{nat.to_text(t.size)}]"
    if isinstance(t, ArrayType):
        return f"Array[{nat.to_text(t.size)}, {type_to_text(t.elem)}]"
    if isinstance(t, TupleType):
        return f"Tuple[{type_to_text(t.fst)}, {type_to_text(t.snd)}]"
    if isinstance(t, FunType):
        left = type_to_text(t.inp)
        if isinstance(t.inp, (FunType, DepFunType)):
            left = f"({left})"
        return f"{left} -> {type_to_text(t.out)}"
    if isinstance(t, DepFunType):
        braces = "{{{}: {}}}" if t.implicit else "({}: {})"
        return braces.format(t.param, t.kind) + f" -> {type_to_text(t.body)}"
    raise TypeError(f"unknown type node: {t!r}")


def substitute_type(t: Type, name: str, replacement, kind: Kind) -> Type:
    """Capture-avoiding substitution of a type-level variable.

    `replacement` must match `kind`: a Nat, a DataType, or an AddressSpace.
    """
    _check_kind(replacement, kind)
    return _subst(t, name, replacement, kind)


def _check_kind(replacement, kind):
    if kind is Kind.NAT and not isinstance(replacement, nat.Nat):
        raise KindError(f"expected a Nat, got {replacement!r}")
    if kind is Kind.DATA and not isinstance(replacement, DataType):
        raise KindError(f"expected a DataType, got {replacement!r}")
    if kind is Kind.ADDRESS and not isinstance(replacement, AddressSpace):
        raise KindError(f"expected an address space, got {replacement!r}")


def _subst_nat(n: nat.Nat, name, replacement, kind) -> nat.Nat:
    if kind is not Kind.NAT:
        return n
    return nat.substitute(n, {name: replacement})


def _subst(t, name, replacement, kind):
    if isinstance(t, TypeIdentifier):
        if kind is Kind.DATA and t.name == name:
            return replacement
        return t
    if isinstance(t, DataTypeVar):
        if kind is Kind.DATA and t.name == name:
            return replacement
        return t
    if isinstance(t, ScalarType):
        return t
    if isinstance(t, IndexType):
        return IndexType(_subst_nat(t.size, name, replacement, kind))
    if isinstance(t, ArrayType):
        return ArrayType(
            _subst_nat(t.size, name, replacement, kind),
            _subst(t.elem, name, replacement, kind),
        )
    if isinstance(t, TupleType):
        return TupleType(
            _subst(t.fst, name, replacement, kind),
            _subst(t.snd, name, replacement, kind),
        )
    if isinstance(t, FunType):
        return FunType(
            _subst(t.inp, name, replacement, kind),
            _subst(t.out, name, replacement, kind),
        )
    if isinstance(t, DepFunType):
        if t.kind is kind and t.param == name:
            return t  # shadowed
        return DepFunType(
            t.kind, t.param, _subst(t.body, name, replacement, kind), t.implicit
        )
    raise TypeError(f"unknown type node: {t!r}")


def type_free_nat_vars(t: Type, bound=frozenset()) -> set:
    """Free Nat variable names appearing in a type."""
    if isinstance(t, IndexType):
        return nat.free_vars(t.size) - bound
    if isinstance(t, ArrayType):
        return (nat.free_vars(t.size) - bound) | type_free_nat_vars(t.elem, bound)
    if isinstance(t, TupleType):
        return type_free_nat_vars(t.fst, bound) | type_free_nat_vars(t.snd, bound)
    if isinstance(t, FunType):
        return type_free_nat_vars(t.inp, bound) | type_free_nat_vars(t.out, bound)
    if isinstance(t, DepFunType):
        inner = bound | {t.param} if t.kind is Kind.NAT else bound
        return type_free_nat_vars(t.body, inner)
    return set()
