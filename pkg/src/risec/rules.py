"""The rewrite-rule library: algorithmic rules, lowering rules that pick an
implementation-specific primitive, and memory-choice rules.

A rule matches the maximal application chain it is pointed at (saturated or
partially applied) and returns an untyped replacement; the strategy engine
re-types it in place.  Lowering rules are idempotent by failure: re-applying
one to an already-lowered node simply does not match.
"""

from __future__ import annotations

from . import nat
from .errors import StrategyError
from .expr import Apply, DepApply, Expr, Identifier, Lambda, Literal, Primitive, spine
from .strategy import Failure, Strategy, rule
from .types import AddressSpace, ArrayType, FunType

MAP_FAMILY = ("map", "mapSeq", "mapGlobal", "mapWorkGroup", "mapLocal")
REDUCE_FAMILY = ("reduce", "reduceSeq", "reduceSeqIn")
PRODUCERS = MAP_FAMILY + REDUCE_FAMILY + ("iterate",)


def _match_chain(e: Expr, tag: str):
    """Head primitive and plain argument list of an application chain."""
    head, args = spine(e)
    if not isinstance(head, Primitive) or head.name != tag:
        return None
    return head, args


def _app_args(args):
    return [a for k, a in args if k == "app"]


def _map_array_length(head: Primitive):
    """Array length from an instantiated map-family type annotation."""
    t = head.type
    if (
        isinstance(t, FunType)
        and isinstance(t.out, FunType)
        and isinstance(t.out.inp, ArrayType)
    ):
        return t.out.inp.size
    return None


def split_join_map(s=None) -> Strategy:
    """map(f)  ->  split(s) >> map(map(f)) >> join

    With no argument the chunk size is the symbolic size parameter `s`,
    supplied at run time.  Divisibility of the array length by the chunk
    size is recorded as an assumption on the compilation unit.
    """
    size = nat.Var("s") if s is None else s
    if isinstance(size, int):
        size = nat.Const(size)

    def matcher(e, ctx):
        m = _match_chain(e, "map")
        if m is None:
            return Failure("not a map")
        head, args = m
        apps = _app_args(args)
        if len(apps) not in (1, 2):
            return Failure("map is not applied to a function")
        f = apps[0]
        length = _map_array_length(head)
        if length is None:
            return Failure("map chain is untyped")
        qr = _divides(size, length)
        if qr is False:
            return Failure(
                f"chunk size {nat.to_text(size)} does not divide {nat.to_text(length)}"
            )
        if qr is None:
            ctx.assume_divides(size, length)
        if isinstance(size, nat.Var):
            ctx.add_free_size(size.name)

        def pipeline(xs):
            chunked = Apply(DepApply(Primitive("split"), size), xs)
            mapped = Apply(Apply(Primitive("map"), Apply(Primitive("map"), f)), chunked)
            return Apply(Primitive("join"), mapped)

        if len(apps) == 2:
            return pipeline(apps[1])
        v = Identifier("xs")
        return Lambda(v, pipeline(v))

    return rule(f"splitJoinMap({nat.to_text(size)})")(matcher)


def _divides(size, length):
    """True / False for constants, None when symbolic (assume)."""
    size_n = nat.normalize(size)
    length_n = nat.normalize(length)
    if isinstance(size_n, nat.Const) and isinstance(length_n, nat.Const):
        return length_n.value % size_n.value == 0
    if nat.equal(nat.Product((nat.Div(length_n, size_n), size_n)), length_n):
        return True
    return None


def _map_of(e):
    m = _match_chain(e, "map")
    if m is None:
        return None
    apps = _app_args(m[1])
    if len(apps) != 2:
        return None
    return apps[0], apps[1]  # f, xs


@rule("mapFusion")
def map_fusion(e, ctx):
    """map(f) >> map(g)  ->  map(f >> g)"""

    def fuse(node):
        outer = _map_of(node)
        if outer is None:
            return None
        g, inner_chain = outer
        inner = _map_of(inner_chain)
        if inner is None:
            return None
        f, xs = inner
        v = Identifier("x")
        comp = Lambda(v, Apply(g, Apply(f, v)))
        return Apply(Apply(Primitive("map"), comp), xs)

    fused = fuse(e)
    if fused is not None:
        return fused
    if isinstance(e, Lambda):
        fused = fuse(e.body)
        if fused is not None:
            return Lambda(Identifier(e.param.name, e.param.uid, e.param.type), fused)
    return Failure("not a pipeline of two maps")


@rule("fuseReduceMap")
def fuse_reduce_map(e, ctx):
    """map(f) >> reduce(op, init)  ->  reduceSeq(fun(acc, y => op(acc)(f(y))), init)"""

    def fuse(node):
        m = _match_chain(node, "reduce")
        if m is None:
            return None
        apps = _app_args(m[1])
        if len(apps) != 3:
            return None
        op, init, arr = apps
        inner = _map_of(arr)
        if inner is None:
            return None
        f, xs = inner
        acc, y = Identifier("acc"), Identifier("y")
        fused_op = Lambda(acc, Lambda(y, Apply(Apply(op, acc), Apply(f, y))))
        return Apply(Apply(Apply(Primitive("reduceSeq"), fused_op), init), xs)

    fused = fuse(e)
    if fused is not None:
        return fused
    if isinstance(e, Lambda):
        fused = fuse(e.body)
        if fused is not None:
            return Lambda(Identifier(e.param.name, e.param.uid, e.param.type), fused)
    return Failure("not a reduce consuming a map")


def _lower_map(target: str) -> Strategy:
    def matcher(e, ctx):
        m = _match_chain(e, "map")
        if m is None:
            return Failure("not a map")
        head, args = m
        out: Expr = Primitive(target)
        for kind, a in args:
            out = Apply(out, a) if kind == "app" else DepApply(out, a)
        return out

    return rule(f"toMap{target[3:]}")(matcher)


to_map_seq = _lower_map("mapSeq")
to_map_global = _lower_map("mapGlobal")
to_map_work_group = _lower_map("mapWorkGroup")
to_map_local = _lower_map("mapLocal")


def to_reduce_seq(a: AddressSpace = AddressSpace.PRIVATE) -> Strategy:
    """reduce or an address-space-less reduceSeq  ->  reduceSeq(a)"""

    def matcher(e, ctx):
        m = _match_chain(e, "reduce") or _match_chain(e, "reduceSeq")
        if m is None:
            return Failure("not a reduce")
        _head, args = m
        out: Expr = DepApply(Primitive("reduceSeqIn"), a)
        for kind, arg in args:
            out = Apply(out, arg) if kind == "app" else DepApply(out, arg)
        return out

    return rule(f"toReduceSeq({a})")(matcher)


def insert_to_mem(a: AddressSpace = AddressSpace.PRIVATE) -> Strategy:
    """Materialize a produced value before a consumer that reads it.

    Matches a map-like consumer whose array argument is itself produced by a
    map/reduce-family primitive, and wraps that producer in toMem(a).
    """

    def matcher(e, ctx):
        if not isinstance(e, Apply):
            return Failure("not an application")
        consumer = e.fn
        from .expr import head_primitive

        if head_primitive(consumer) not in MAP_FAMILY:
            return Failure("consumer is not map-like")
        producer = e.arg
        if isinstance(producer, (Identifier, Literal)):
            return Failure("nothing to materialize")
        ptag = head_primitive(producer)
        if ptag == "toMem":
            return Failure("already materialized")
        if ptag not in PRODUCERS:
            return Failure("argument is not a produced value")
        wrapped = Apply(DepApply(Primitive("toMem"), a), producer)
        return Apply(consumer, wrapped)

    return rule(f"insertToMem({a})")(matcher)


# name -> factory taking the arguments allowed in strategy files
RULES = {
    "splitJoinMap": split_join_map,
    "mapFusion": lambda: map_fusion,
    "fuseReduceMap": lambda: fuse_reduce_map,
    "toMapSeq": lambda: to_map_seq,
    "toMapGlobal": lambda: to_map_global,
    "toMapWorkGroup": lambda: to_map_work_group,
    "toMapLocal": lambda: to_map_local,
    "toReduceSeq": to_reduce_seq,
    "insertToMem": insert_to_mem,
}

RULE_PARAMS = {
    "splitJoinMap": "(size: Nat = s)",
    "mapFusion": "",
    "fuseReduceMap": "",
    "toMapSeq": "",
    "toMapGlobal": "",
    "toMapWorkGroup": "",
    "toMapLocal": "",
    "toReduceSeq": "(a: AddrSp = Private)",
    "insertToMem": "(a: AddrSp = Private)",
}


def rule_factories():
    return dict(RULES)


def describe_rules():
    return [f"{name}{RULE_PARAMS[name]}" for name in sorted(RULES)]
