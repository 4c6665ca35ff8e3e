"""Printers for expressions: surface syntax and an annotated tree dump.

The surface printer emits canonical, re-parseable text: applications are
juxtaposed, scalar operators print infix inside parentheses, and parameter
annotations appear on the leading binder spine (the form the parser needs to
reconstruct types).  Binder names are disambiguated deterministically when
shadowed, so output never depends on internal ids.
"""

from __future__ import annotations

from . import nat
from .expr import Apply, DepApply, DepLambda, Expr, Identifier, Lambda, Literal, Primitive
from .types import AddressSpace, DataType, Kind, type_to_text

_BINOPS = {"add": "+", "sub": "-", "mul": "*"}


def print_expr(e: Expr, surface_names=None) -> str:
    names = surface_names or {}
    return _print(e, {}, set(), names, spine=True)


def _pick_name(name, used):
    if name not in used:
        return name
    i = 1
    while f"{name}{i}" in used:
        i += 1
    return f"{name}{i}"


def _print(e, renames, used, surface, spine):
    if isinstance(e, Identifier):
        return renames.get(e.uid, e.name)
    if isinstance(e, Literal):
        return e.text
    if isinstance(e, Primitive):
        return surface.get(e.name, e.name)
    if isinstance(e, Lambda):
        shown = _pick_name(e.param.name, used)
        renames2 = {**renames, e.param.uid: shown}
        ann = ""
        if spine and e.param.type is not None and isinstance(e.param.type, DataType):
            ann = f": {type_to_text(e.param.type)}"
        body = _print(e.body, renames2, used | {shown}, surface, spine)
        return f"fun({shown}{ann} => {body})"
    if isinstance(e, DepLambda):
        shown = _pick_name(e.param, used)
        body = e.body
        if shown != e.param:
            from .expr import substitute_type_var
            from .types import DataTypeVar

            repl = nat.Var(shown) if e.kind is Kind.NAT else DataTypeVar(shown)
            body = substitute_type_var(body, e.param, repl, e.kind)
        inner = _print(body, renames, used | {shown}, surface, spine)
        return f"depFun(({shown}: {e.kind}) => {inner})"
    if isinstance(e, Apply):
        op = _binop(e)
        if op is not None:
            lhs, rhs = op
            l = _print(lhs, renames, used, surface, False)
            r = _print(rhs, renames, used, surface, False)
            return f"({l} {_BINOPS[e.fn.fn.name]} {r})"
        fn = _print(e.fn, renames, used, surface, False)
        if isinstance(e.fn, (Lambda, DepLambda)):
            fn = f"({fn})"
        arg = _print(e.arg, renames, used, surface, False)
        return f"{fn}({arg})"
    if isinstance(e, DepApply):
        fn = _print(e.fn, renames, used, surface, False)
        if isinstance(e.fn, (Lambda, DepLambda)):
            fn = f"({fn})"
        return f"{fn}({_dep_arg_text(e.arg)})"
    raise TypeError(f"unknown expression node: {e!r}")


def _binop(e):
    if (
        isinstance(e, Apply)
        and isinstance(e.fn, Apply)
        and isinstance(e.fn.fn, Primitive)
        and e.fn.fn.name in _BINOPS
    ):
        return e.fn.arg, e.arg
    return None


def _dep_arg_text(arg):
    if isinstance(arg, nat.Nat):
        return nat.to_text(arg)
    if isinstance(arg, AddressSpace):
        return str(arg)
    if isinstance(arg, DataType):
        return type_to_text(arg)
    raise TypeError(f"unknown dependent argument: {arg!r}")


def print_typed(e: Expr, indent=0) -> str:
    """Annotated tree dump, one node per line with its inferred type."""
    pad = "  " * indent
    t = f" : {type_to_text(e.type)}" if e.type is not None else ""
    if isinstance(e, Identifier):
        return f"{pad}var {e.name}{t}"
    if isinstance(e, Literal):
        return f"{pad}literal {e.text}{t}"
    if isinstance(e, Primitive):
        return f"{pad}primitive {e.name}{t}"
    if isinstance(e, Lambda):
        return f"{pad}fun {e.param.name}{t}\n" + print_typed(e.body, indent + 1)
    if isinstance(e, DepLambda):
        return f"{pad}depFun {e.param}: {e.kind}{t}\n" + print_typed(e.body, indent + 1)
    if isinstance(e, Apply):
        return (
            f"{pad}apply{t}\n"
            + print_typed(e.fn, indent + 1)
            + "\n"
            + print_typed(e.arg, indent + 1)
        )
    if isinstance(e, DepApply):
        return f"{pad}depApply {_dep_arg_text(e.arg)}{t}\n" + print_typed(e.fn, indent + 1)
    raise TypeError(f"unknown expression node: {e!r}")
