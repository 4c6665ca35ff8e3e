"""Expression AST of the source language.

Every node carries an optional `type` slot: absent after parsing, filled in
by inference, which rebuilds nodes rather than mutating them.  Identifiers
pair a display name with a globally fresh integer id, so alpha-renaming is
cheap and printing stays deterministic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

from . import nat
from .errors import KindError
from .types import AddressSpace, DataType, DataTypeVar, Kind, Type, substitute_type

_ids = itertools.count(1)


def fresh_id() -> int:
    return next(_ids)


class Expr:
    """Base class; concrete nodes are the dataclasses below."""


@dataclass(frozen=True)
class Identifier(Expr):
    name: str
    uid: int = field(default_factory=fresh_id)
    type: Type | None = None

    def fresh(self):
        return Identifier(self.name, fresh_id(), self.type)


@dataclass(frozen=True)
class Literal(Expr):
    text: str  # spelled exactly as in the source, printed back verbatim
    value: object
    type: Type | None = None


@dataclass(frozen=True)
class Lambda(Expr):
    param: Identifier
    body: Expr
    type: Type | None = None


@dataclass(frozen=True)
class Apply(Expr):
    fn: Expr
    arg: Expr
    type: Type | None = None


@dataclass(frozen=True)
class DepLambda(Expr):
    kind: Kind
    param: str
    body: Expr
    type: Type | None = None


@dataclass(frozen=True)
class DepApply(Expr):
    fn: Expr
    arg: object  # Nat | DataType | AddressSpace
    type: Type | None = None


@dataclass(frozen=True)
class Primitive(Expr):
    name: str
    type: Type | None = None


def with_type(e: Expr, t: Type) -> Expr:
    return replace(e, type=t)


def children(e: Expr) -> tuple:
    """Rewritable child subterms, in fixed left-to-right order."""
    if isinstance(e, Lambda):
        return (e.body,)
    if isinstance(e, Apply):
        return (e.fn, e.arg)
    if isinstance(e, DepLambda):
        return (e.body,)
    if isinstance(e, DepApply):
        return (e.fn,)
    return ()


def rebuild(e: Expr, new_children: tuple) -> Expr:
    if isinstance(e, Lambda):
        return Lambda(e.param, new_children[0], e.type)
    if isinstance(e, Apply):
        return Apply(new_children[0], new_children[1], e.type)
    if isinstance(e, DepLambda):
        return DepLambda(e.kind, e.param, new_children[0], e.type)
    if isinstance(e, DepApply):
        return DepApply(new_children[0], e.arg, e.type)
    return e


def subterm_at(e: Expr, path: tuple) -> Expr:
    for i in path:
        e = children(e)[i]
    return e


def replace_at(e: Expr, path: tuple, sub: Expr) -> Expr:
    if not path:
        return sub
    cs = list(children(e))
    cs[path[0]] = replace_at(cs[path[0]], path[1:], sub)
    return rebuild(e, tuple(cs))


def head(e: Expr) -> Expr | None:
    """The primitive (or other atom) heading an application chain."""
    while isinstance(e, (Apply, DepApply)):
        e = e.fn
    return e


def head_primitive(e: Expr) -> str | None:
    h = head(e)
    return h.name if isinstance(h, Primitive) else None


def spine(e: Expr):
    """Split an application chain into (head, [("app"|"dep", arg), ...])."""
    args = []
    while isinstance(e, (Apply, DepApply)):
        if isinstance(e, Apply):
            args.append(("app", e.arg))
        else:
            args.append(("dep", e.arg))
        e = e.fn
    args.reverse()
    return e, args


def node_count(e: Expr) -> int:
    return 1 + sum(node_count(c) for c in children(e))


def free_identifiers(e: Expr, bound=frozenset()) -> dict:
    """Free term variables, keyed by uid (insertion ordered)."""
    out = {}
    if isinstance(e, Identifier):
        if e.uid not in bound:
            out[e.uid] = e
    elif isinstance(e, Lambda):
        out.update(free_identifiers(e.body, bound | {e.param.uid}))
    else:
        for c in children(e):
            for uid, ident in free_identifiers(c, bound).items():
                out.setdefault(uid, ident)
    return out


def substitute_expr(e: Expr, var: Identifier, replacement: Expr) -> Expr:
    """Capture-avoiding substitution of a term variable."""
    if isinstance(e, Identifier):
        return replacement if e.uid == var.uid else e
    if isinstance(e, Lambda):
        if e.param.uid == var.uid:
            return e
        if e.param.uid in free_identifiers(replacement):
            renamed = e.param.fresh()
            body = substitute_expr(e.body, e.param, renamed)
            return Lambda(renamed, substitute_expr(body, var, replacement), e.type)
        return Lambda(e.param, substitute_expr(e.body, var, replacement), e.type)
    cs = tuple(substitute_expr(c, var, replacement) for c in children(e))
    return rebuild(e, cs) if cs else e


def substitute_type_var(e: Expr, name: str, replacement, kind: Kind) -> Expr:
    """Substitute a type-level variable throughout an expression tree.

    Walks both the structure (DepLambda binders shadow) and every type
    annotation, including Nat arguments of dependent applications.
    """

    def in_type(t):
        return substitute_type(t, name, replacement, kind) if t is not None else None

    if isinstance(e, Identifier):
        return Identifier(e.name, e.uid, in_type(e.type))
    if isinstance(e, Literal):
        return Literal(e.text, e.value, in_type(e.type))
    if isinstance(e, Primitive):
        return Primitive(e.name, in_type(e.type))
    if isinstance(e, Lambda):
        return Lambda(
            substitute_type_var(e.param, name, replacement, kind),
            substitute_type_var(e.body, name, replacement, kind),
            in_type(e.type),
        )
    if isinstance(e, Apply):
        return Apply(
            substitute_type_var(e.fn, name, replacement, kind),
            substitute_type_var(e.arg, name, replacement, kind),
            in_type(e.type),
        )
    if isinstance(e, DepLambda):
        if e.kind is kind and e.param == name:
            return e  # shadowed
        return DepLambda(
            e.kind, e.param, substitute_type_var(e.body, name, replacement, kind), in_type(e.type)
        )
    if isinstance(e, DepApply):
        arg = e.arg
        if kind is Kind.NAT and isinstance(arg, nat.Nat):
            arg = nat.substitute(arg, {name: replacement})
        elif kind is Kind.DATA and isinstance(arg, DataType):
            arg = substitute_type(arg, name, replacement, kind)
        return DepApply(substitute_type_var(e.fn, name, replacement, kind), arg, in_type(e.type))
    raise TypeError(f"unknown expression node: {e!r}")


def substitute(target, var, replacement):
    """Unified substitution entry point.

    Dispatches on the categories: a term variable (Identifier) replaced by an
    expression, or a type-level variable ((name, kind) pair) replaced by a
    Nat / DataType / AddressSpace inside an expression or a type.
    """
    if isinstance(var, Identifier):
        if not isinstance(replacement, Expr):
            raise KindError("term variables must be replaced by expressions")
        if not isinstance(target, Expr):
            raise KindError("term substitution applies to expressions")
        return substitute_expr(target, var, replacement)
    if isinstance(var, tuple) and len(var) == 2:
        name, kind = var
        if isinstance(target, Expr):
            return substitute_type_var(target, name, replacement, kind)
        return substitute_type(target, name, replacement, kind)
    raise KindError(f"cannot substitute for {var!r}")


def alpha_equivalent(a: Expr, b: Expr) -> bool:
    """Structural equality modulo bound names; type annotations ignored."""
    return _alpha(a, b, {}, {})


def _alpha(a, b, env_ab, tenv_ab):
    if isinstance(a, Identifier) and isinstance(b, Identifier):
        if a.uid in env_ab:
            return env_ab[a.uid] == b.uid
        return a.name == b.name and a.uid == b.uid
    if isinstance(a, Literal) and isinstance(b, Literal):
        return a.text == b.text
    if isinstance(a, Primitive) and isinstance(b, Primitive):
        return a.name == b.name
    if isinstance(a, Lambda) and isinstance(b, Lambda):
        return _alpha(a.body, b.body, {**env_ab, a.param.uid: b.param.uid}, tenv_ab)
    if isinstance(a, Apply) and isinstance(b, Apply):
        return _alpha(a.fn, b.fn, env_ab, tenv_ab) and _alpha(a.arg, b.arg, env_ab, tenv_ab)
    if isinstance(a, DepLambda) and isinstance(b, DepLambda):
        if a.kind is not b.kind:
            return False
        return _alpha(a.body, b.body, env_ab, {**tenv_ab, (a.kind, a.param): b.param})
    if isinstance(a, DepApply) and isinstance(b, DepApply):
        if not _alpha(a.fn, b.fn, env_ab, tenv_ab):
            return False
        return _dep_arg_equal(a.arg, b.arg, tenv_ab)
    return False


def _dep_arg_equal(x, y, tenv_ab):
    if isinstance(x, nat.Nat) and isinstance(y, nat.Nat):
        mapping = {n: nat.Var(tenv_ab.get((Kind.NAT, n), n)) for n in nat.free_vars(x)}
        return nat.equal(nat.substitute(x, mapping), y)
    if isinstance(x, AddressSpace) and isinstance(y, AddressSpace):
        return x is y
    if isinstance(x, DataType) and isinstance(y, DataType):
        renamed = x
        for (kind, old), new in tenv_ab.items():
            if kind is Kind.NAT:
                renamed = substitute_type(renamed, old, nat.Var(new), Kind.NAT)
            elif kind is Kind.DATA:
                renamed = substitute_type(renamed, old, DataTypeVar(new), Kind.DATA)
        return renamed == y
    return False
