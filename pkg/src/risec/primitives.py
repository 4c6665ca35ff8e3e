"""Primitive signature registry for the functional source language.

The whole table is data: each scheme is written in the surface type notation
and parsed at import time.  Parameters in curly braces are implicit and
solved by type inference; parenthesized leading binders are explicit
dependent arguments supplied at the call site.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InferenceError
from .parser import parse_scheme
from .types import DepFunType, Type


@dataclass(frozen=True)
class PrimitiveSignature:
    name: str
    scheme: Type
    surface: str  # how the primitive is spelled in source text


# fmt: off
BUILTIN_SCHEMES = {
    # data-parallel patterns; the map variants pin an implementation choice
    "map":          "{n: Nat} -> {s: DataType} -> {t: DataType} -> (s -> t) -> Array[n, s] -> Array[n, t]",
    "mapSeq":       "{n: Nat} -> {s: DataType} -> {t: DataType} -> (s -> t) -> Array[n, s] -> Array[n, t]",
    "mapGlobal":    "{n: Nat} -> {s: DataType} -> {t: DataType} -> (s -> t) -> Array[n, s] -> Array[n, t]",
    "mapWorkGroup": "{n: Nat} -> {s: DataType} -> {t: DataType} -> (s -> t) -> Array[n, s] -> Array[n, t]",
    "mapLocal":     "{n: Nat} -> {s: DataType} -> {t: DataType} -> (s -> t) -> Array[n, s] -> Array[n, t]",
    "reduce":       "{n: Nat} -> {t: DataType} -> (t -> t -> t) -> t -> Array[n, t] -> t",
    # sequential reduction before/after the accumulator address space is chosen
    "reduceSeq":    "{n: Nat} -> {s: DataType} -> {t: DataType} -> (t -> s -> t) -> t -> Array[n, s] -> t",
    "reduceSeqIn":  "(a: AddrSp) -> {n: Nat} -> {s: DataType} -> {t: DataType} -> (t -> s -> t) -> t -> Array[n, s] -> t",
    "zip":          "{n: Nat} -> {s: DataType} -> {t: DataType} -> Array[n, s] -> Array[n, t] -> Array[n, Tuple[s, t]]",
    "fst":          "{s: DataType} -> {t: DataType} -> Tuple[s, t] -> s",
    "snd":          "{s: DataType} -> {t: DataType} -> Tuple[s, t] -> t",
    "split":        "(s: Nat) -> {q: Nat} -> {t: DataType} -> Array[s * q, t] -> Array[q, Array[s, t]]",
    "join":         "{a: Nat} -> {b: Nat} -> {t: DataType} -> Array[a, Array[b, t]] -> Array[a * b, t]",
    "toMem":        "(a: AddrSp) -> {t: DataType} -> t -> t",
    "iterate":      "(k: Nat) -> {n: Nat} -> {m: Nat} -> {t: DataType} -> ((l: Nat) -> Array[l * n, t] -> Array[l, t]) -> Array[(n^k) * m, t] -> Array[m, t]",
    # scalar operations; `+`, `-` and `*` in source text desugar to these
    "add":          "{t: DataType} -> t -> t -> t",
    "sub":          "{t: DataType} -> t -> t -> t",
    "mul":          "{t: DataType} -> t -> t -> t",
    "id":           "{t: DataType} -> t -> t",
}
# fmt: on

# primitives that gain an address-space argument when lowered; the scoped
# variant shares the surface spelling and is selected by the call shape
ADDRESS_SPACE_VARIANTS = {"reduceSeq": "reduceSeqIn"}

SURFACE_NAMES = {"reduceSeqIn": "reduceSeq"}


class Registry:
    """Write-once-per-name table of primitive signatures."""

    def __init__(self, builtin=True):
        self._sigs: dict[str, PrimitiveSignature] = {}
        if builtin:
            for name, scheme in BUILTIN_SCHEMES.items():
                self.register(
                    PrimitiveSignature(name, parse_scheme(scheme), SURFACE_NAMES.get(name, name))
                )

    def register(self, sig: PrimitiveSignature):
        if sig.name in self._sigs:
            raise InferenceError(f"primitive {sig.name!r} is already registered")
        _validate_scheme(sig)
        self._sigs[sig.name] = sig

    def register_scheme(self, name: str, scheme_text: str, surface=None):
        self.register(PrimitiveSignature(name, parse_scheme(scheme_text), surface or name))

    def get(self, name: str) -> PrimitiveSignature | None:
        return self._sigs.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self._sigs

    def names(self):
        return list(self._sigs)

    def surface_name(self, name: str) -> str:
        sig = self._sigs.get(name)
        return sig.surface if sig else name

    def address_space_variant(self, name: str) -> str | None:
        variant = ADDRESS_SPACE_VARIANTS.get(name)
        return variant if variant in self._sigs else None


def _validate_scheme(sig: PrimitiveSignature):
    # every implicit binder must occur in the scheme body, or it could never
    # be inferred
    scheme = sig.scheme
    from .types import type_free_nat_vars, type_to_text

    binders = []
    while isinstance(scheme, DepFunType):
        binders.append((scheme.param, scheme.kind, scheme.implicit))
        scheme = scheme.body
    body_text = type_to_text(scheme)
    for param, kind, implicit in binders:
        if implicit and not _occurs(param, body_text):
            raise InferenceError(
                f"implicit parameter {param!r} of {sig.name!r} does not occur in the scheme body"
            )


def _occurs(name, text):
    import re

    return re.search(rf"\b{re.escape(name)}\b", text) is not None


_default = None


def default_registry() -> Registry:
    global _default
    if _default is None:
        _default = Registry()
    return _default
