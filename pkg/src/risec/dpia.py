"""The code-generation IR: phrases typed as expressions, acceptors, or
commands.

Primitives are fully applied values; each node records the type-level
arguments (sizes, data types, address spaces, read/write markers) that
instantiate its signature.  Signatures are data, written in the same
notation used throughout the compiler and parsed at import time.

The checker validates every argument slot up to size equality and rejects
inconsistent read/write annotations: a value still to be materialized (Wr)
can only reach a reading position through toMem, which is exactly where a
missing address-space choice surfaces.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

from . import nat
from .errors import PhraseError, RWMismatch
from .parser import KINDS, TokenStream, _parse_type_atom, parse_nat, tokenize
from .types import (
    AddressSpace,
    ArrayType,
    DataType,
    DataTypeVar,
    IndexType,
    Kind,
    ScalarType,
    TupleType,
    type_to_text,
)
from .typecheck import types_equal

# ---------------------------------------------------------------------------
# read/write annotations

RD = "Rd"
WR = "Wr"


@dataclass(frozen=True)
class RWVar:
    name: str


def rw_text(rw):
    return rw.name if isinstance(rw, RWVar) else rw


# ---------------------------------------------------------------------------
# phrase types


class PhraseType:
    pass


@dataclass(frozen=True)
class ExpType(PhraseType):
    dt: DataType
    rw: object  # RD | WR | RWVar


@dataclass(frozen=True)
class AccType(PhraseType):
    dt: DataType


@dataclass(frozen=True)
class CommType(PhraseType):
    pass


COMM = CommType()


@dataclass(frozen=True)
class PhraseFunType(PhraseType):
    inp: PhraseType
    out: PhraseType


@dataclass(frozen=True)
class DepPhraseFunType(PhraseType):
    kind: Kind
    param: str
    body: PhraseType


@dataclass(frozen=True)
class PhrasePairType(PhraseType):
    fst: PhraseType
    snd: PhraseType


def ptype_text(t: PhraseType) -> str:
    if isinstance(t, ExpType):
        return f"Exp[{type_to_text(t.dt)}, {rw_text(t.rw)}]"
    if isinstance(t, AccType):
        return f"Acc[{type_to_text(t.dt)}]"
    if isinstance(t, CommType):
        return "Comm"
    if isinstance(t, PhraseFunType):
        left = ptype_text(t.inp)
        if isinstance(t.inp, (PhraseFunType, DepPhraseFunType)):
            left = f"({left})"
        return f"{left} -> {ptype_text(t.out)}"
    if isinstance(t, DepPhraseFunType):
        return f"({t.param}: {t.kind}) -> {ptype_text(t.body)}"
    if isinstance(t, PhrasePairType):
        return f"({ptype_text(t.fst)} x {ptype_text(t.snd)})"
    raise TypeError(f"unknown phrase type: {t!r}")


# ---------------------------------------------------------------------------
# phrases

_ids = itertools.count(1)


class Phrase:
    pass


@dataclass(frozen=True)
class PhraseVar(Phrase):
    name: str
    uid: int = field(default_factory=lambda: next(_ids))
    ptype: PhraseType | None = None

    def fresh(self):
        return PhraseVar(self.name, next(_ids), self.ptype)


@dataclass(frozen=True)
class PhraseLiteral(Phrase):
    text: str
    value: object
    dtype: DataType
    rw: object = RD  # literals adapt: Rd when read, Wr when they initialize memory

    @property
    def ptype(self):
        return ExpType(self.dtype, self.rw)


@dataclass(frozen=True)
class PhraseLambda(Phrase):
    param: PhraseVar
    body: Phrase

    @property
    def ptype(self):
        return PhraseFunType(self.param.ptype, self.body.ptype)


@dataclass(frozen=True)
class PhraseApply(Phrase):
    fn: Phrase
    arg: Phrase
    ptype: PhraseType | None = None


@dataclass(frozen=True)
class PhraseDepLambda(Phrase):
    kind: Kind
    param: str
    body: Phrase

    @property
    def ptype(self):
        return DepPhraseFunType(self.kind, self.param, self.body.ptype)


@dataclass(frozen=True)
class PhraseDepApply(Phrase):
    fn: Phrase
    arg: object
    ptype: PhraseType | None = None


@dataclass(frozen=True)
class PhrasePair(Phrase):
    fst: Phrase
    snd: Phrase

    @property
    def ptype(self):
        return PhrasePairType(self.fst.ptype, self.snd.ptype)


@dataclass(frozen=True)
class PhraseProj(Phrase):
    index: int  # 1 | 2
    pair: Phrase
    ptype: PhraseType | None = None


@dataclass(frozen=True)
class FunPrim(Phrase):
    tag: str
    type_args: tuple
    args: tuple
    ptype: PhraseType | None = None


@dataclass(frozen=True)
class ImpPrim(Phrase):
    tag: str
    type_args: tuple
    args: tuple
    ptype: PhraseType = COMM


# ---------------------------------------------------------------------------
# signatures


@dataclass(frozen=True)
class DpiaSignature:
    tag: str
    type_params: tuple  # (name, Kind | "ReadWrite")
    value_params: tuple  # (name, PhraseType template)
    result: PhraseType


# fmt: off
SIGNATURE_TEXT = {
    # functional primitives
    "mapSeq":       "(n: Nat, s: DataType, t: DataType, f: Exp[s,Rd] -> Exp[t,Wr], x: Exp[Array[n,s],Rd]): Exp[Array[n,t],Wr]",
    "mapGlobal":    "(n: Nat, s: DataType, t: DataType, f: Exp[s,Rd] -> Exp[t,Wr], x: Exp[Array[n,s],Rd]): Exp[Array[n,t],Wr]",
    "mapWorkGroup": "(n: Nat, s: DataType, t: DataType, f: Exp[s,Rd] -> Exp[t,Wr], x: Exp[Array[n,s],Rd]): Exp[Array[n,t],Wr]",
    "mapLocal":     "(n: Nat, s: DataType, t: DataType, f: Exp[s,Rd] -> Exp[t,Wr], x: Exp[Array[n,s],Rd]): Exp[Array[n,t],Wr]",
    "reduceSeq":    "(n: Nat, a: AddrSp, s: DataType, t: DataType, w: ReadWrite, f: Exp[t,Rd] -> Exp[s,Rd] -> Exp[t,Wr], init: Exp[t,Wr], x: Exp[Array[n,s],Rd]): Exp[t,w]",
    "zip":          "(n: Nat, s: DataType, t: DataType, w: ReadWrite, lhs: Exp[Array[n,s],w], rhs: Exp[Array[n,t],w]): Exp[Array[n,Tuple[s,t]],w]",
    "fst":          "(s: DataType, t: DataType, w: ReadWrite, x: Exp[Tuple[s,t],w]): Exp[s,w]",
    "snd":          "(s: DataType, t: DataType, w: ReadWrite, x: Exp[Tuple[s,t],w]): Exp[t,w]",
    "join":         "(n: Nat, m: Nat, t: DataType, w: ReadWrite, x: Exp[Array[n,Array[m,t]],w]): Exp[Array[n*m,t],w]",
    "split":        "(n: Nat, m: Nat, t: DataType, w: ReadWrite, x: Exp[Array[n*m,t],w]): Exp[Array[m,Array[n,t]],w]",
    "take":         "(k: Nat, l: Nat, t: DataType, x: Exp[Array[l,t],Rd]): Exp[Array[k,t],Rd]",
    "toMem":        "(a: AddrSp, t: DataType, x: Exp[t,Wr]): Exp[t,Rd]",
    "idx":          "(n: Nat, t: DataType, i: Exp[Idx[n],Rd], arr: Exp[Array[n,t],Rd]): Exp[t,Rd]",
    "iterate":      "(n: Nat, m: Nat, k: Nat, t: DataType, body: (l: Nat) -> Exp[Array[l*n,t],Rd] -> Exp[Array[l,t],Wr], arr: Exp[Array[(n^k)*m,t],Rd]): Exp[Array[m,t],Wr]",
    "add":          "(t: DataType, w: ReadWrite, a: Exp[t,Rd], b: Exp[t,Rd]): Exp[t,w]",
    "sub":          "(t: DataType, w: ReadWrite, a: Exp[t,Rd], b: Exp[t,Rd]): Exp[t,w]",
    "mul":          "(t: DataType, w: ReadWrite, a: Exp[t,Rd], b: Exp[t,Rd]): Exp[t,w]",
    # imperative primitives
    "assign":          "(t: DataType, lhs: Acc[t], rhs: Exp[t,Rd]): Comm",
    "seq":             "(c1: Comm, c2: Comm): Comm",
    "new":             "(a: AddrSp, t: DataType, body: (Exp[t,Rd] x Acc[t]) -> Comm): Comm",
    "for":             "(n: Nat, body: Exp[Idx[n],Rd] -> Comm): Comm",
    "parForWorkGroup": "(n: Nat, t: DataType, out: Acc[Array[n,t]], body: Exp[Idx[n],Rd] -> Acc[t] -> Comm): Comm",
    "parForLocal":     "(n: Nat, t: DataType, out: Acc[Array[n,t]], body: Exp[Idx[n],Rd] -> Acc[t] -> Comm): Comm",
    "parForGlobal":    "(n: Nat, t: DataType, out: Acc[Array[n,t]], body: Exp[Idx[n],Rd] -> Acc[t] -> Comm): Comm",
    "zipAcc1":         "(n: Nat, s: DataType, t: DataType, array: Acc[Array[n,Tuple[s,t]]]): Acc[Array[n,s]]",
    "zipAcc2":         "(n: Nat, s: DataType, t: DataType, array: Acc[Array[n,Tuple[s,t]]]): Acc[Array[n,t]]",
    "joinAcc":         "(n: Nat, m: Nat, t: DataType, array: Acc[Array[n*m,t]]): Acc[Array[n,Array[m,t]]]",
    "splitAcc":        "(n: Nat, m: Nat, t: DataType, array: Acc[Array[m,Array[n,t]]]): Acc[Array[n*m,t]]",
    "idxAcc":          "(n: Nat, t: DataType, i: Exp[Idx[n],Rd], array: Acc[Array[n,t]]): Acc[t]",
    "takeAcc":         "(k: Nat, l: Nat, t: DataType, array: Acc[Array[l,t]]): Acc[Array[k,t]]",
    "newDoubleBuffer": "(t: DataType, n: Nat, m: Nat, k: Nat, input: Exp[Array[k,t],Rd], output: Acc[Array[m,t]], body: (Acc[Array[n,t]] x Exp[Array[n,t],Rd] x Comm x Comm) -> Comm): Comm",
    "ifLess":          "(n: Nat, c: Nat, i: Exp[Idx[n],Rd], onTrue: Comm, onFalse: Comm): Comm",
}
# fmt: on

_TYPE_PARAM_KINDS = dict(KINDS)
_TYPE_PARAM_KINDS["ReadWrite"] = "ReadWrite"


def _parse_ptype(ts: TokenStream) -> PhraseType:
    left = _parse_ptype_arrow(ts)
    while ts.peek().kind == "ident" and ts.peek().text == "x":
        ts.next()
        left = PhrasePairType(left, _parse_ptype_arrow(ts))
    return left


def _parse_ptype_arrow(ts) -> PhraseType:
    if (
        ts.at("(")
        and ts.peek(1).kind == "ident"
        and ts.peek(2).text == ":"
        and ts.peek(3).text in KINDS
    ):
        ts.next()
        name = ts.next().text
        ts.expect(":")
        kind = KINDS[ts.next().text]
        ts.expect(")")
        ts.expect("->")
        return DepPhraseFunType(kind, name, _parse_ptype_arrow(ts))
    left = _parse_ptype_atom(ts)
    if ts.at("->"):
        ts.next()
        return PhraseFunType(left, _parse_ptype_arrow(ts))
    return left


def _parse_ptype_atom(ts) -> PhraseType:
    tok = ts.peek()
    if tok.text == "(":
        ts.next()
        out = _parse_ptype(ts)
        ts.expect(")")
        return out
    if tok.text == "Exp":
        ts.next()
        ts.expect("[")
        dt = _parse_type_atom(ts)
        ts.expect(",")
        rw_tok = ts.next().text
        rw = {"Rd": RD, "Wr": WR}.get(rw_tok, RWVar(rw_tok))
        ts.expect("]")
        return ExpType(dt, rw)
    if tok.text == "Acc":
        ts.next()
        ts.expect("[")
        dt = _parse_type_atom(ts)
        ts.expect("]")
        return AccType(dt)
    if tok.text == "Comm":
        ts.next()
        return COMM
    ts.error(f"expected a phrase type, found {tok.text!r}")


def _parse_signature(tag: str, text: str) -> DpiaSignature:
    ts = TokenStream(tokenize(text))
    ts.expect("(")
    type_params, value_params = [], []
    while not ts.at(")"):
        name = ts.next().text
        ts.expect(":")
        if ts.peek().text in _TYPE_PARAM_KINDS and ts.peek(1).text in (",", ")"):
            kind_name = ts.next().text
            type_params.append((name, _TYPE_PARAM_KINDS[kind_name]))
        else:
            value_params.append((name, _parse_ptype(ts)))
        if ts.at(","):
            ts.next()
    ts.expect(")")
    ts.expect(":")
    result = _parse_ptype(ts)
    return DpiaSignature(tag, tuple(type_params), tuple(value_params), result)


SIGNATURES = {tag: _parse_signature(tag, text) for tag, text in SIGNATURE_TEXT.items()}


# ---------------------------------------------------------------------------
# instantiation

def _subst_dt(dt: DataType, mapping) -> DataType:
    if isinstance(dt, DataTypeVar) and dt.name in mapping:
        return mapping[dt.name]
    if isinstance(dt, ScalarType):
        return dt
    if isinstance(dt, IndexType):
        return IndexType(_subst_size(dt.size, mapping))
    if isinstance(dt, ArrayType):
        return ArrayType(_subst_size(dt.size, mapping), _subst_dt(dt.elem, mapping))
    if isinstance(dt, TupleType):
        return TupleType(_subst_dt(dt.fst, mapping), _subst_dt(dt.snd, mapping))
    return dt


def _subst_size(n: nat.Nat, mapping) -> nat.Nat:
    sizes = {k: v for k, v in mapping.items() if isinstance(v, nat.Nat)}
    return nat.substitute(n, sizes)


def subst_ptype(t: PhraseType, mapping) -> PhraseType:
    if isinstance(t, ExpType):
        rw = t.rw
        if isinstance(rw, RWVar) and rw.name in mapping:
            rw = mapping[rw.name]
        return ExpType(_subst_dt(t.dt, mapping), rw)
    if isinstance(t, AccType):
        return AccType(_subst_dt(t.dt, mapping))
    if isinstance(t, CommType):
        return t
    if isinstance(t, PhraseFunType):
        return PhraseFunType(subst_ptype(t.inp, mapping), subst_ptype(t.out, mapping))
    if isinstance(t, DepPhraseFunType):
        inner = {k: v for k, v in mapping.items() if k != t.param}
        return DepPhraseFunType(t.kind, t.param, subst_ptype(t.body, inner))
    if isinstance(t, PhrasePairType):
        return PhrasePairType(subst_ptype(t.fst, mapping), subst_ptype(t.snd, mapping))
    raise TypeError(f"unknown phrase type: {t!r}")


def instantiate(tag: str, type_args) -> tuple:
    """Slot types and result type of `tag` under the given type arguments."""
    sig = SIGNATURES.get(tag)
    if sig is None:
        raise PhraseError(f"unknown primitive {tag!r}")
    if len(type_args) != len(sig.type_params):
        raise PhraseError(
            f"{tag} expects {len(sig.type_params)} type arguments, got {len(type_args)}"
        )
    mapping = {}
    for (name, kind), value in zip(sig.type_params, type_args):
        _check_type_arg(tag, name, kind, value)
        mapping[name] = value
    slots = [(name, subst_ptype(t, mapping)) for name, t in sig.value_params]
    return slots, subst_ptype(sig.result, mapping)


def _check_type_arg(tag, name, kind, value):
    if kind == "ReadWrite":
        if not (value in (RD, WR) or isinstance(value, RWVar)):
            raise PhraseError(f"{tag}: {name} must be a read/write marker")
    elif kind is Kind.NAT:
        if not isinstance(value, nat.Nat):
            raise PhraseError(f"{tag}: {name} must be a size")
    elif kind is Kind.DATA:
        if not isinstance(value, DataType):
            raise PhraseError(f"{tag}: {name} must be a data type")
    elif kind is Kind.ADDRESS:
        if not isinstance(value, AddressSpace):
            raise PhraseError(f"{tag}: {name} must be an address space")


# ---------------------------------------------------------------------------
# read/write inference

class _RWSolver:
    def __init__(self):
        self.binding = {}

    def find(self, rw):
        while isinstance(rw, RWVar) and rw.name in self.binding:
            rw = self.binding[rw.name]
        return rw

    def unify(self, got, want, loc=None):
        got, want = self.find(got), self.find(want)
        if got == want:
            return
        if isinstance(got, RWVar):
            self.binding[got.name] = want
            return
        if isinstance(want, RWVar):
            self.binding[want.name] = got
            return
        raise RWMismatch(rw_text(want), rw_text(got), loc)

    def resolve(self, rw):
        out = self.find(rw)
        return RD if isinstance(out, RWVar) else out  # unconstrained defaults to Rd


def _pair_rw(solver, got: PhraseType, want: PhraseType, loc):
    """Collect read/write constraints from two structurally parallel types."""
    if isinstance(got, ExpType) and isinstance(want, ExpType):
        solver.unify(got.rw, want.rw, loc)
        return
    if isinstance(got, PhraseFunType) and isinstance(want, PhraseFunType):
        _pair_rw(solver, got.inp, want.inp, loc)
        _pair_rw(solver, got.out, want.out, loc)
        return
    if isinstance(got, DepPhraseFunType) and isinstance(want, DepPhraseFunType):
        _pair_rw(solver, got.body, want.body, loc)
        return
    if isinstance(got, PhrasePairType) and isinstance(want, PhrasePairType):
        _pair_rw(solver, got.fst, want.fst, loc)
        _pair_rw(solver, got.snd, want.snd, loc)
        return
    # shapes either match without read/write content or the checker reports
    # the mismatch with full context later


def children(p: Phrase):
    if isinstance(p, PhraseLambda):
        return (p.body,)
    if isinstance(p, PhraseApply):
        return (p.fn, p.arg)
    if isinstance(p, PhraseDepLambda):
        return (p.body,)
    if isinstance(p, PhraseDepApply):
        return (p.fn,)
    if isinstance(p, PhrasePair):
        return (p.fst, p.snd)
    if isinstance(p, PhraseProj):
        return (p.pair,)
    if isinstance(p, (FunPrim, ImpPrim)):
        return p.args
    return ()


def _collect_rw(p: Phrase, solver: _RWSolver):
    for c in children(p):
        _collect_rw(c, solver)
    if isinstance(p, (FunPrim, ImpPrim)):
        slots, result = instantiate(p.tag, p.type_args)
        for (pname, slot), arg in zip(slots, p.args):
            loc = _slot_loc(p.tag, pname, arg)
            _pair_rw(solver, _ptype_of(arg), slot, loc)
        if p.ptype is not None:
            _pair_rw(solver, p.ptype, result, p.tag)


def _slot_loc(tag, pname, arg):
    produced = ""
    if isinstance(arg, (FunPrim, ImpPrim)):
        produced = f" (a {arg.tag} result)"
    return f"argument {pname!r} of {tag}{produced}"


def _ptype_of(p: Phrase) -> PhraseType:
    t = p.ptype
    if t is None:
        raise PhraseError(f"phrase is missing its type: {p!r}")
    return t


def _resolve_rw_tree(p: Phrase, solver) -> Phrase:
    def fix_type(t):
        return _resolve_ptype(t, solver) if t is not None else None

    if isinstance(p, PhraseVar):
        return PhraseVar(p.name, p.uid, fix_type(p.ptype))
    if isinstance(p, PhraseLiteral):
        rw = solver.resolve(p.rw) if isinstance(p.rw, RWVar) else p.rw
        return PhraseLiteral(p.text, p.value, p.dtype, rw)
    if isinstance(p, PhraseLambda):
        return PhraseLambda(_resolve_rw_tree(p.param, solver), _resolve_rw_tree(p.body, solver))
    if isinstance(p, PhraseApply):
        return PhraseApply(
            _resolve_rw_tree(p.fn, solver), _resolve_rw_tree(p.arg, solver), fix_type(p.ptype)
        )
    if isinstance(p, PhraseDepLambda):
        return PhraseDepLambda(p.kind, p.param, _resolve_rw_tree(p.body, solver))
    if isinstance(p, PhraseDepApply):
        return PhraseDepApply(_resolve_rw_tree(p.fn, solver), p.arg, fix_type(p.ptype))
    if isinstance(p, PhrasePair):
        return PhrasePair(_resolve_rw_tree(p.fst, solver), _resolve_rw_tree(p.snd, solver))
    if isinstance(p, PhraseProj):
        return PhraseProj(p.index, _resolve_rw_tree(p.pair, solver), fix_type(p.ptype))
    if isinstance(p, FunPrim):
        targs = tuple(solver.resolve(a) if isinstance(a, RWVar) else a for a in p.type_args)
        return FunPrim(p.tag, targs, tuple(_resolve_rw_tree(a, solver) for a in p.args), fix_type(p.ptype))
    if isinstance(p, ImpPrim):
        targs = tuple(solver.resolve(a) if isinstance(a, RWVar) else a for a in p.type_args)
        return ImpPrim(p.tag, targs, tuple(_resolve_rw_tree(a, solver) for a in p.args), p.ptype)
    raise PhraseError(f"unknown phrase node: {p!r}")


def _resolve_ptype(t: PhraseType, solver) -> PhraseType:
    if isinstance(t, ExpType):
        rw = solver.resolve(t.rw) if isinstance(t.rw, RWVar) else t.rw
        return ExpType(t.dt, rw)
    if isinstance(t, AccType) or isinstance(t, CommType):
        return t
    if isinstance(t, PhraseFunType):
        return PhraseFunType(_resolve_ptype(t.inp, solver), _resolve_ptype(t.out, solver))
    if isinstance(t, DepPhraseFunType):
        return DepPhraseFunType(t.kind, t.param, _resolve_ptype(t.body, solver))
    if isinstance(t, PhrasePairType):
        return PhrasePairType(_resolve_ptype(t.fst, solver), _resolve_ptype(t.snd, solver))
    raise PhraseError(f"unknown phrase type: {t!r}")


def rw_infer(p: Phrase, expected_rw=None) -> Phrase:
    """Solve read/write variables from context; unconstrained ones default
    to Rd.  `expected_rw` pins the root (a compilation unit's result must
    still be written, so translation passes Wr)."""
    solver = _RWSolver()
    _collect_rw(p, solver)
    if expected_rw is not None:
        root = _ptype_of(p)
        if isinstance(root, ExpType):
            solver.unify(root.rw, expected_rw, "the program result")
    return _resolve_rw_tree(p, solver)


# ---------------------------------------------------------------------------
# phrase checking


def _ptype_equal(a: PhraseType, b: PhraseType, assumptions=()) -> bool:
    if isinstance(a, ExpType) and isinstance(b, ExpType):
        return a.rw == b.rw and types_equal(a.dt, b.dt, assumptions)
    if isinstance(a, AccType) and isinstance(b, AccType):
        return types_equal(a.dt, b.dt, assumptions)
    if isinstance(a, CommType) and isinstance(b, CommType):
        return True
    if isinstance(a, PhraseFunType) and isinstance(b, PhraseFunType):
        return _ptype_equal(a.inp, b.inp, assumptions) and _ptype_equal(a.out, b.out, assumptions)
    if isinstance(a, DepPhraseFunType) and isinstance(b, DepPhraseFunType):
        if a.kind is not b.kind:
            return False
        body_b = b.body
        if a.param != b.param and b.kind is Kind.NAT:
            body_b = subst_ptype(b.body, {b.param: nat.Var(a.param)})
        return _ptype_equal(a.body, body_b, assumptions)
    if isinstance(a, PhrasePairType) and isinstance(b, PhrasePairType):
        return _ptype_equal(a.fst, b.fst, assumptions) and _ptype_equal(a.snd, b.snd, assumptions)
    return False


def _contains_rw_var(t: PhraseType) -> bool:
    if isinstance(t, ExpType):
        return isinstance(t.rw, RWVar)
    if isinstance(t, PhraseFunType):
        return _contains_rw_var(t.inp) or _contains_rw_var(t.out)
    if isinstance(t, DepPhraseFunType):
        return _contains_rw_var(t.body)
    if isinstance(t, PhrasePairType):
        return _contains_rw_var(t.fst) or _contains_rw_var(t.snd)
    return False


def check_phrase(p: Phrase, env=None, assumptions=()) -> Phrase:
    """Validate a fully applied phrase: arity, data types up to size
    equality, and concrete, consistent read/write annotations.  Returns the
    phrase with every node's recorded type confirmed."""
    env = dict(env or {})
    _check(p, env, assumptions)
    return p


def _fail_slot(tag, pname, want, got, arg, assumptions):
    loc = _slot_loc(tag, pname, arg)
    if (
        isinstance(want, ExpType)
        and isinstance(got, ExpType)
        and want.rw != got.rw
        and types_equal(want.dt, got.dt, assumptions)
    ):
        raise RWMismatch(rw_text(want.rw), rw_text(got.rw), loc)
    raise PhraseError(
        f"{loc}: expected {ptype_text(want)}, found {ptype_text(got)}"
    )


def _check(p: Phrase, env, assumptions) -> PhraseType:
    if isinstance(p, PhraseVar):
        t = env.get(p.uid, p.ptype)
        if t is None:
            raise PhraseError(f"unbound phrase variable {p.name!r}")
        if p.ptype is not None and not _ptype_equal(t, p.ptype, assumptions):
            raise PhraseError(f"variable {p.name!r} used at a different type")
        return t
    if isinstance(p, PhraseLiteral):
        return p.ptype
    if isinstance(p, PhraseLambda):
        if p.param.ptype is None:
            raise PhraseError("lambda parameter is missing its type")
        inner = dict(env)
        inner[p.param.uid] = p.param.ptype
        return PhraseFunType(p.param.ptype, _check(p.body, inner, assumptions))
    if isinstance(p, PhraseApply):
        tf = _check(p.fn, env, assumptions)
        if not isinstance(tf, PhraseFunType):
            raise PhraseError(f"application of a non-function phrase: {ptype_text(tf)}")
        ta = _check(p.arg, env, assumptions)
        if not _ptype_equal(tf.inp, ta, assumptions):
            raise PhraseError(
                f"phrase argument mismatch: expected {ptype_text(tf.inp)}, found {ptype_text(ta)}"
            )
        return tf.out
    if isinstance(p, PhraseDepLambda):
        return DepPhraseFunType(p.kind, p.param, _check(p.body, env, assumptions))
    if isinstance(p, PhraseDepApply):
        tf = _check(p.fn, env, assumptions)
        if not isinstance(tf, DepPhraseFunType):
            raise PhraseError("dependent application of a non-dependent phrase")
        if tf.kind is Kind.NAT:
            return subst_ptype(tf.body, {tf.param: p.arg})
        return subst_ptype(tf.body, {tf.param: p.arg})
    if isinstance(p, PhrasePair):
        return PhrasePairType(
            _check(p.fst, env, assumptions), _check(p.snd, env, assumptions)
        )
    if isinstance(p, PhraseProj):
        tp = _check(p.pair, env, assumptions)
        if not isinstance(tp, PhrasePairType):
            raise PhraseError("projection from a non-pair phrase")
        return tp.fst if p.index == 1 else tp.snd
    if isinstance(p, (FunPrim, ImpPrim)):
        slots, result = instantiate(p.tag, p.type_args)
        if len(p.args) != len(slots):
            raise PhraseError(
                f"{p.tag} expects {len(slots)} arguments, got {len(p.args)} "
                "(primitives are fully applied)"
            )
        for a in p.type_args:
            if isinstance(a, RWVar):
                raise PhraseError(
                    f"{p.tag} still carries an unsolved read/write variable"
                )
        for (pname, want), arg in zip(slots, p.args):
            got = _check(arg, env, assumptions)
            if _contains_rw_var(got) or _contains_rw_var(want):
                raise PhraseError(f"unsolved read/write annotation at {p.tag}")
            if not _ptype_equal(want, got, assumptions):
                _fail_slot(p.tag, pname, want, got, arg, assumptions)
        if isinstance(p, FunPrim) and p.ptype is not None:
            if not _ptype_equal(p.ptype, result, assumptions):
                raise PhraseError(
                    f"{p.tag} is annotated {ptype_text(p.ptype)} but its "
                    f"signature gives {ptype_text(result)}"
                )
        return result
    raise PhraseError(f"unknown phrase node: {p!r}")


# ---------------------------------------------------------------------------
# substitution (used by the translation to apply function-valued arguments)


def free_phrase_vars(p: Phrase, bound=frozenset()) -> set:
    if isinstance(p, PhraseVar):
        return {p.uid} - bound
    if isinstance(p, PhraseLambda):
        return free_phrase_vars(p.body, bound | {p.param.uid})
    out = set()
    for c in children(p):
        out |= free_phrase_vars(c, bound)
    return out


def phrase_subst(p: Phrase, var: PhraseVar, replacement: Phrase) -> Phrase:
    if isinstance(p, PhraseVar):
        return replacement if p.uid == var.uid else p
    if isinstance(p, PhraseLiteral):
        return p
    if isinstance(p, PhraseLambda):
        if p.param.uid == var.uid:
            return p
        if p.param.uid in free_phrase_vars(replacement):
            renamed = p.param.fresh()
            body = phrase_subst(p.body, p.param, renamed)
            return PhraseLambda(renamed, phrase_subst(body, var, replacement))
        return PhraseLambda(p.param, phrase_subst(p.body, var, replacement))
    if isinstance(p, PhraseApply):
        return PhraseApply(
            phrase_subst(p.fn, var, replacement), phrase_subst(p.arg, var, replacement), p.ptype
        )
    if isinstance(p, PhraseDepLambda):
        return PhraseDepLambda(p.kind, p.param, phrase_subst(p.body, var, replacement))
    if isinstance(p, PhraseDepApply):
        return PhraseDepApply(phrase_subst(p.fn, var, replacement), p.arg, p.ptype)
    if isinstance(p, PhrasePair):
        return PhrasePair(
            phrase_subst(p.fst, var, replacement), phrase_subst(p.snd, var, replacement)
        )
    if isinstance(p, PhraseProj):
        return PhraseProj(p.index, phrase_subst(p.pair, var, replacement), p.ptype)
    if isinstance(p, FunPrim):
        return FunPrim(
            p.tag,
            p.type_args,
            tuple(phrase_subst(a, var, replacement) for a in p.args),
            p.ptype,
        )
    if isinstance(p, ImpPrim):
        return ImpPrim(
            p.tag,
            p.type_args,
            tuple(phrase_subst(a, var, replacement) for a in p.args),
            p.ptype,
        )
    raise PhraseError(f"unknown phrase node: {p!r}")


def subst_size_in_phrase(p: Phrase, name: str, value: nat.Nat) -> Phrase:
    """Substitute a size variable everywhere in a phrase (types included)."""
    mapping = {name: value}

    def in_ptype(t):
        return subst_ptype(t, mapping) if t is not None else None

    if isinstance(p, PhraseVar):
        return PhraseVar(p.name, p.uid, in_ptype(p.ptype))
    if isinstance(p, PhraseLiteral):
        return p
    if isinstance(p, PhraseLambda):
        return PhraseLambda(
            subst_size_in_phrase(p.param, name, value),
            subst_size_in_phrase(p.body, name, value),
        )
    if isinstance(p, PhraseApply):
        return PhraseApply(
            subst_size_in_phrase(p.fn, name, value),
            subst_size_in_phrase(p.arg, name, value),
            in_ptype(p.ptype),
        )
    if isinstance(p, PhraseDepLambda):
        if p.kind is Kind.NAT and p.param == name:
            return p
        return PhraseDepLambda(p.kind, p.param, subst_size_in_phrase(p.body, name, value))
    if isinstance(p, PhraseDepApply):
        arg = p.arg
        if isinstance(arg, nat.Nat):
            arg = nat.substitute(arg, {name: value})
        return PhraseDepApply(subst_size_in_phrase(p.fn, name, value), arg, in_ptype(p.ptype))
    if isinstance(p, PhrasePair):
        return PhrasePair(
            subst_size_in_phrase(p.fst, name, value), subst_size_in_phrase(p.snd, name, value)
        )
    if isinstance(p, PhraseProj):
        return PhraseProj(p.index, subst_size_in_phrase(p.pair, name, value), in_ptype(p.ptype))
    if isinstance(p, (FunPrim, ImpPrim)):
        targs = tuple(
            nat.substitute(a, {name: value})
            if isinstance(a, nat.Nat)
            else (_subst_dt(a, mapping) if isinstance(a, DataType) else a)
            for a in p.type_args
        )
        args = tuple(subst_size_in_phrase(a, name, value) for a in p.args)
        if isinstance(p, FunPrim):
            return FunPrim(p.tag, targs, args, in_ptype(p.ptype))
        return ImpPrim(p.tag, targs, args, p.ptype)
    raise PhraseError(f"unknown phrase node: {p!r}")


# ---------------------------------------------------------------------------
# printing (stable, mirrors the signature notation)


def phrase_text(p: Phrase, renames=None) -> str:
    renames = renames or {}
    return _ptext(p, renames, set(renames.values()))


def _display(name, used):
    if name not in used:
        return name
    i = 1
    while f"{name}{i}" in used:
        i += 1
    return f"{name}{i}"


def _ptext(p, renames, used) -> str:
    if isinstance(p, PhraseVar):
        return renames.get(p.uid, p.name)
    if isinstance(p, PhraseLiteral):
        return p.text
    if isinstance(p, PhraseLambda):
        return _lambda_text(p, renames, used)
    if isinstance(p, PhraseApply):
        return f"{_ptext(p.fn, renames, used)}({_ptext(p.arg, renames, used)})"
    if isinstance(p, PhraseDepLambda):
        body = _ptext(p.body, renames, used)
        return f"depFun(({p.param}: {p.kind}) => {body})"
    if isinstance(p, PhraseDepApply):
        arg = p.arg
        text = nat.to_text(arg) if isinstance(arg, nat.Nat) else str(arg)
        return f"{_ptext(p.fn, renames, used)}({text})"
    if isinstance(p, PhrasePair):
        return f"({_ptext(p.fst, renames, used)}, {_ptext(p.snd, renames, used)})"
    if isinstance(p, PhraseProj):
        return f"{_ptext(p.pair, renames, used)}._{p.index}"
    if isinstance(p, ImpPrim) and p.tag == "assign":
        return f"{_ptext(p.args[0], renames, used)} = {_ptext(p.args[1], renames, used)}"
    if isinstance(p, ImpPrim) and p.tag == "seq":
        return f"{_ptext(p.args[0], renames, used)} ;\n{_ptext(p.args[1], renames, used)}"
    if isinstance(p, (FunPrim, ImpPrim)):
        parts = [_type_arg_text(a) for a in p.type_args]
        parts += [_ptext(a, renames, used) for a in p.args]
        return f"{p.tag}({', '.join(parts)})"
    raise PhraseError(f"unknown phrase node: {p!r}")


def _type_arg_text(a):
    if isinstance(a, nat.Nat):
        return nat.to_text(a)
    if isinstance(a, DataType):
        return type_to_text(a)
    if isinstance(a, AddressSpace):
        return str(a)
    return rw_text(a)


def _lambda_text(p: PhraseLambda, renames, used):
    # pair-typed parameters print destructured, the way the signatures are
    # written: fun((xExp, xAcc) => ...)
    if isinstance(p.param.ptype, PhrasePairType):
        names, repl = _destructure(p.param, p.param.ptype)
        body = p.body
        for proj_path, name in repl:
            body = _replace_proj(body, p.param.uid, proj_path, name)
        inner = _ptext(body, renames, used | set(names))
        return f"fun(({', '.join(names)}) => {inner})"
    shown = _display(p.param.name, used)
    inner = _ptext(p.body, {**renames, p.param.uid: shown}, used | {shown})
    return f"fun({shown} => {inner})"


def _flatten_pair(t: PhraseType):
    if isinstance(t, PhrasePairType):
        return _flatten_pair(t.fst) + [t.snd]
    return [t]


def _component_name(base, t, i):
    if isinstance(t, ExpType):
        return f"{base}Exp"
    if isinstance(t, AccType):
        return f"{base}Acc"
    return f"{base}Cmd{i}"


def _destructure(param, t):
    comps = _flatten_pair(t)
    names, repl = [], []
    db_shape = len(comps) == 4 and isinstance(comps[2], CommType) and isinstance(comps[3], CommType)
    for i, comp in enumerate(comps):
        if db_shape and i >= 2:
            # the double-buffer interface: two opaque commands
            names.append("swap" if i == 2 else "done")
            continue
        names.append(_component_name(param.name, comp, i))
        # projection chain selecting component i of a left-nested pair,
        # outermost projection last
        if i == 0:
            path = (1,) * (len(comps) - 1)
        else:
            path = (1,) * (len(comps) - 1 - i) + (2,)
        repl.append((path, names[-1]))
    return names, repl


def _replace_proj(p: Phrase, uid, path, name):
    """Replace the projection chain `path` applied to variable `uid` by a
    display variable."""

    def matches(q, remaining):
        if remaining:
            return (
                isinstance(q, PhraseProj)
                and q.index == remaining[-1]
                and matches(q.pair, remaining[:-1])
            )
        return isinstance(q, PhraseVar) and q.uid == uid

    if matches(p, path):
        return PhraseVar(name, -1, None)
    if isinstance(p, (FunPrim, ImpPrim)):
        args = tuple(_replace_proj(a, uid, path, name) for a in p.args)
        if isinstance(p, FunPrim):
            return FunPrim(p.tag, p.type_args, args, p.ptype)
        return ImpPrim(p.tag, p.type_args, args, p.ptype)
    if isinstance(p, PhraseLambda):
        return PhraseLambda(p.param, _replace_proj(p.body, uid, path, name))
    if isinstance(p, PhraseApply):
        return PhraseApply(
            _replace_proj(p.fn, uid, path, name), _replace_proj(p.arg, uid, path, name), p.ptype
        )
    if isinstance(p, PhraseProj):
        return PhraseProj(p.index, _replace_proj(p.pair, uid, path, name), p.ptype)
    if isinstance(p, PhrasePair):
        return PhrasePair(
            _replace_proj(p.fst, uid, path, name), _replace_proj(p.snd, uid, path, name)
        )
    if isinstance(p, PhraseDepLambda):
        return PhraseDepLambda(p.kind, p.param, _replace_proj(p.body, uid, path, name))
    if isinstance(p, PhraseDepApply):
        return PhraseDepApply(_replace_proj(p.fn, uid, path, name), p.arg, p.ptype)
    return p
