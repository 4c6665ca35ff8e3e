"""Translation from the rewritten functional program to imperative phrases.

Step one maps each low-level source primitive onto its fully applied
counterpart in the code-generation IR, eta-expanding partial applications
into lambdas.  Step two runs two intertwined translations: the acceptor
translation takes an expression that still has to be written (Wr) plus the
memory to write it into; the continuation translation takes a readable
expression (Rd) plus a host-level function that continues once the
expression is available.  Translation makes no choices of its own: every
allocation in the output traces back to a toMem, reduceSeq or iterate in the
input, and no new address space appears.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import nat
from .dpia import (
    COMM,
    RD,
    WR,
    AccType,
    ExpType,
    FunPrim,
    ImpPrim,
    Phrase,
    PhraseDepLambda,
    PhraseApply,
    PhraseLambda,
    PhraseLiteral,
    PhrasePairType,
    PhraseProj,
    PhraseVar,
    RWVar,
    check_phrase,
    instantiate,
    phrase_subst,
    rw_infer,
    subst_size_in_phrase,
)
from .errors import TranslationError
from .expr import Apply, DepApply, DepLambda, Expr, Identifier, Lambda, Literal, Primitive
from .types import (
    AddressSpace,
    ArrayType,
    DataType,
    FunType,
    DepFunType,
    IndexType,
    Kind,
    TupleType,
    Type,
)

HIGH_LEVEL = {
    "map": "no implementation choice was made for 'map' (apply a lowering rule)",
    "reduce": "no implementation choice was made for 'reduce' (apply toReduceSeq)",
    "reduceSeq": "'reduceSeq' lacks an address space (apply toReduceSeq)",
}

_MAP_TO_PARFOR = {
    "mapWorkGroup": ("parForWorkGroup", "wgId", "wgOut"),
    "mapLocal": ("parForLocal", "lId", "lOut"),
    "mapGlobal": ("parForGlobal", "gId", "gOut"),
}


@dataclass
class TranslationContext:
    target: str = "c"
    assumptions: tuple = ()
    trace: list = field(default_factory=list)
    _counters: dict = field(default_factory=dict)
    _used: set = field(default_factory=set)

    def reserve(self, name: str):
        self._used.add(name)

    def fresh(self, base: str) -> str:
        name = base
        while name in self._used:
            n = self._counters.get(base, 0) + 1
            self._counters[base] = n
            name = f"{base}{n}"
        self._used.add(name)
        return name

    def log(self, kind, tag):
        self.trace.append((kind, tag))


@dataclass
class ImperativeUnit:
    name: str
    nat_params: tuple
    inputs: tuple  # (PhraseVar, DataType)
    output: PhraseVar
    output_type: DataType
    body: Phrase
    assumptions: tuple = ()
    functional: Phrase | None = None  # the pre-translation phrase, for inspection

    def check(self):
        env = {v.uid: v.ptype for v, _dt in self.inputs}
        env[self.output.uid] = self.output.ptype
        check_phrase(self.body, env, self.assumptions)
        return self


# ---------------------------------------------------------------------------
# step one: source expressions to functional phrases


def rise_to_dpia(e: Expr, ctx: TranslationContext, env=None) -> Phrase:
    """Convert a typed low-level source expression to a functional phrase.

    `env` maps binder uids to phrase variables.  Raises if a primitive with
    an unmade implementation choice remains in the tree.
    """
    phrase = _convert(e, dict(env or {}), ctx)
    return phrase


def _convert(e: Expr, env, ctx) -> Phrase:
    if isinstance(e, Identifier):
        if e.uid not in env:
            raise TranslationError(f"unbound identifier {e.name!r} during translation")
        return env[e.uid]
    if isinstance(e, Literal):
        return PhraseLiteral(e.text, e.value, e.type, RWVar(_fresh_rw(ctx)))
    if isinstance(e, Lambda):
        if not isinstance(e.param.type, DataType):
            raise TranslationError(
                f"parameter {e.param.name!r} is not data; function-valued "
                "parameters cannot cross into the imperative IR"
            )
        pv = PhraseVar(e.param.name, ptype=ExpType(e.param.type, RD))
        body = _convert(e.body, {**env, e.param.uid: pv}, ctx)
        return PhraseLambda(pv, body)
    if isinstance(e, DepLambda):
        body = _convert(e.body, env, ctx)
        return PhraseDepLambda(e.kind, e.param, body)
    if isinstance(e, (Apply, DepApply)):
        head, nodes = _chain(e)
        if isinstance(head, Primitive):
            return _convert_chain(head, nodes, env, ctx)
        # a beta redex: translate both sides, then reduce
        if isinstance(e, DepApply):
            raise TranslationError("dependent application of a non-primitive")
        fn = _convert(e.fn, env, ctx)
        arg = _convert(e.arg, env, ctx)
        if isinstance(fn, PhraseLambda):
            return phrase_subst(fn.body, fn.param, arg)
        return PhraseApply(fn, arg)
    if isinstance(e, Primitive):
        return _convert_chain(e, [], env, ctx)
    raise TranslationError(f"cannot translate {e!r}")


_rw_counter = [0]


def _fresh_rw(ctx) -> str:
    _rw_counter[0] += 1
    return f"?w{_rw_counter[0]}"


def _chain(e: Expr):
    nodes = []
    node = e
    while isinstance(node, (Apply, DepApply)):
        nodes.append(node)
        node = node.fn
    nodes.reverse()
    return node, nodes


def _value_fun_type(head: Primitive, nodes) -> Type:
    for node in nodes:
        if isinstance(node, Apply):
            return node.fn.type
    return nodes[-1].type if nodes else head.type


def _convert_chain(head: Primitive, nodes, env, ctx) -> Phrase:
    tag = head.name
    if tag in HIGH_LEVEL:
        raise TranslationError(f"unlowered primitive: {HIGH_LEVEL[tag]}")
    deps = [n.arg for n in nodes if isinstance(n, DepApply)]
    apps = [n.arg for n in nodes if isinstance(n, Apply)]
    vt = _value_fun_type(head, nodes)
    if tag == "id":
        if apps:
            return _convert(apps[0], env, ctx)
        v = PhraseVar("x", ptype=ExpType(_fun_inp(vt), RD))
        return PhraseLambda(v, v)
    if tag == "reduceSeqIn":
        targs = _reduce_targs(vt, deps, ctx)
        dtag = "reduceSeq"
    else:
        targs = _targs_for(tag, vt, deps, ctx)
        dtag = tag
    args = [_convert(a, env, ctx) for a in apps]
    return _saturate(dtag, targs, args, ctx)


def _fun_inp(t: Type) -> DataType:
    if isinstance(t, FunType) and isinstance(t.inp, DataType):
        return t.inp
    raise TranslationError("cannot determine the element type")


def _fun_slots(t: Type):
    slots = []
    while isinstance(t, FunType):
        slots.append(t.inp)
        t = t.out
    return slots, t


def _targs_for(tag: str, vt: Type, deps, ctx) -> tuple:
    """Type arguments of the target primitive, read off the instantiated
    source type."""
    slots, out = _fun_slots(vt)
    if tag in ("mapSeq", "mapGlobal", "mapWorkGroup", "mapLocal"):
        arr = slots[1]
        return (arr.size, arr.elem, out.elem)
    if tag == "zip":
        return (out.size, slots[0].elem, slots[1].elem, RWVar(_fresh_rw(ctx)))
    if tag in ("fst", "snd"):
        pair = slots[0]
        return (pair.fst, pair.snd, RWVar(_fresh_rw(ctx)))
    if tag == "split":
        # output Array[m, Array[n, t]] names the chunk size n and count m
        return (out.elem.size, out.size, out.elem.elem, RWVar(_fresh_rw(ctx)))
    if tag == "join":
        arr = slots[0]
        return (arr.size, arr.elem.size, arr.elem.elem, RWVar(_fresh_rw(ctx)))
    if tag == "take":
        return (out.size, slots[0].size, out.elem)
    if tag == "toMem":
        return (deps[0], out)
    if tag in ("add", "sub", "mul"):
        return (out, RWVar(_fresh_rw(ctx)))
    if tag == "iterate":
        body_t = slots[0]
        if not isinstance(body_t, DepFunType):
            raise TranslationError("iterate body is not size-indexed")
        inner_slots, inner_out = _fun_slots(body_t.body)
        shrink = nat.normalize(
            nat.Div(inner_slots[0].size, nat.Var(body_t.param))
        )
        return (shrink, out.size, deps[0], out.elem)
    raise TranslationError(f"no imperative counterpart for primitive {tag!r}")


def _reduce_targs(vt: Type, deps, ctx) -> tuple:
    slots, out = _fun_slots(vt)
    arr = slots[2]
    return (arr.size, deps[0], arr.elem, out, RWVar(_fresh_rw(ctx)))


def _saturate(tag: str, targs: tuple, args, ctx) -> Phrase:
    """Fully apply a primitive, eta-expanding missing trailing arguments."""
    slots, result = instantiate(tag, targs)
    missing = slots[len(args) :]
    extra = []
    for pname, ptype in missing:
        extra.append(PhraseVar(pname, ptype=ptype))
    prim = FunPrim(tag, targs, tuple(args) + tuple(extra), result)
    for v in reversed(extra):
        prim = PhraseLambda(v, prim)
    return prim


# ---------------------------------------------------------------------------
# step two: functional phrases to commands


def _exp_type(p: Phrase) -> ExpType:
    t = p.ptype
    if not isinstance(t, ExpType):
        raise TranslationError(f"expected an expression phrase, found {t!r}")
    return t


def _acc_type(p: Phrase) -> AccType:
    t = p.ptype
    if not isinstance(t, AccType):
        raise TranslationError(f"expected an acceptor phrase, found {t!r}")
    return t


def _idx(n, elem, i, arr) -> Phrase:
    return FunPrim("idx", (n, elem), (i, arr), ExpType(elem, RD))


def _idx_acc(n, elem, i, acc) -> Phrase:
    return ImpPrim("idxAcc", (n, elem), (i, acc), AccType(elem))


def _seq(*comms):
    out = comms[0]
    for c in comms[1:]:
        out = ImpPrim("seq", (), (out, c))
    return out


def _assign(dt, lhs, rhs):
    return ImpPrim("assign", (dt,), (lhs, rhs))


def _meta_apply(ctx, f: Phrase, x: Phrase) -> Phrase:
    if isinstance(f, PhraseLambda):
        return phrase_subst(f.body, f.param, x)
    raise TranslationError("cannot apply an opaque function during translation")


def _meta_dep_apply(f: Phrase, value: nat.Nat) -> Phrase:
    if isinstance(f, PhraseDepLambda):
        return subst_size_in_phrase(f.body, f.param, value)
    raise TranslationError("cannot apply an opaque size-indexed function")


def _new(ctx, space, dt, base, builder) -> Phrase:
    """new(space, dt, fun((xExp, xAcc) => builder(xExp, xAcc)))"""
    pair = PhraseVar(ctx.fresh(base), ptype=PhrasePairType(ExpType(dt, RD), AccType(dt)))
    e_view = PhraseProj(1, pair, ExpType(dt, RD))
    a_view = PhraseProj(2, pair, AccType(dt))
    body = builder(e_view, a_view)
    return ImpPrim("new", (space, dt), (PhraseLambda(pair, body),))


def acc_t(ctx: TranslationContext, expr: Phrase, output: Phrase) -> Phrase:
    """Write the value of `expr` (a Wr expression) into `output`."""
    ctx.log("accT", getattr(expr, "tag", type(expr).__name__))
    if isinstance(expr, PhraseApply) and isinstance(expr.fn, PhraseLambda):
        return acc_t(ctx, phrase_subst(expr.fn.body, expr.fn.param, expr.arg), output)
    if isinstance(expr, PhraseLiteral):
        return _assign(expr.dtype, output, PhraseLiteral(expr.text, expr.value, expr.dtype, RD))
    if isinstance(expr, FunPrim):
        handler = _ACC_CASES.get(expr.tag)
        if handler is not None:
            return handler(ctx, expr, output)
    raise TranslationError(
        f"no acceptor-translation case for {getattr(expr, 'tag', type(expr).__name__)}"
    )


def con_t(ctx: TranslationContext, expr: Phrase, k) -> Phrase:
    """Translate a readable expression, then continue with `k`."""
    ctx.log("conT", getattr(expr, "tag", type(expr).__name__))
    if isinstance(expr, (PhraseVar, PhraseLiteral, PhraseProj)):
        return k(expr)
    if isinstance(expr, PhraseApply) and isinstance(expr.fn, PhraseLambda):
        return con_t(ctx, phrase_subst(expr.fn.body, expr.fn.param, expr.arg), k)
    if isinstance(expr, FunPrim):
        handler = _CON_CASES.get(expr.tag)
        if handler is not None:
            return handler(ctx, expr, k)
    raise TranslationError(
        f"no continuation-translation case for {getattr(expr, 'tag', type(expr).__name__)}"
    )


def _acc_map_par(ctx, expr: FunPrim, output):
    n, s, t = expr.type_args
    f, arr = expr.args
    par_tag, idx_name, out_name = _MAP_TO_PARFOR[expr.tag]

    def body(arr_t):
        i = PhraseVar(ctx.fresh(idx_name), ptype=ExpType(IndexType(n), RD))
        o = PhraseVar(ctx.fresh(out_name), ptype=AccType(t))
        elem = _meta_apply(ctx, f, _idx(n, s, PhraseVar(i.name, i.uid, i.ptype), arr_t))
        return ImpPrim(
            par_tag, (n, t), (output, PhraseLambda(i, PhraseLambda(o, acc_t(ctx, elem, o))))
        )

    return con_t(ctx, arr, body)


def _acc_map_seq(ctx, expr: FunPrim, output):
    n, s, t = expr.type_args
    f, arr = expr.args

    def body(arr_t):
        i = PhraseVar(ctx.fresh("i"), ptype=ExpType(IndexType(n), RD))
        elem = _meta_apply(ctx, f, _idx(n, s, i, arr_t))
        slot = _idx_acc(n, t, i, output)
        return ImpPrim("for", (n,), (PhraseLambda(i, acc_t(ctx, elem, slot)),))

    return con_t(ctx, arr, body)


def _acc_zip(ctx, expr: FunPrim, output):
    n, s, t, _w = expr.type_args
    lhs, rhs = expr.args
    a1 = ImpPrim("zipAcc1", (n, s, t), (output,), AccType(ArrayType(n, s)))
    a2 = ImpPrim("zipAcc2", (n, s, t), (output,), AccType(ArrayType(n, t)))
    return _seq(acc_t(ctx, lhs, a1), acc_t(ctx, rhs, a2))


def _acc_join(ctx, expr: FunPrim, output):
    n, m, t, _w = expr.type_args
    (arr,) = expr.args
    two_d = ImpPrim("joinAcc", (n, m, t), (output,), AccType(ArrayType(n, ArrayType(m, t))))
    return acc_t(ctx, arr, two_d)


def _acc_split(ctx, expr: FunPrim, output):
    n, m, t, _w = expr.type_args
    (arr,) = expr.args
    flat = ImpPrim(
        "splitAcc", (n, m, t), (output,), AccType(ArrayType(nat.normalize(n * m), t))
    )
    return acc_t(ctx, arr, flat)


def _acc_binop(ctx, expr: FunPrim, output):
    t, _w = expr.type_args

    def lhs_done(a):
        def rhs_done(b):
            return _assign(t, output, FunPrim(expr.tag, (t, RD), (a, b), ExpType(t, RD)))

        return con_t(ctx, expr.args[1], rhs_done)

    return con_t(ctx, expr.args[0], lhs_done)


def _reduce_comm(ctx, expr: FunPrim, after):
    """Shared expansion of a sequential reduction; `after(accum_exp)` builds
    the command run once the accumulator holds the result."""
    n, space, s, t, _w = expr.type_args
    f, init, arr = expr.args

    def with_arr(arr_t):
        def body(acc_e, acc_a):
            i = PhraseVar(ctx.fresh("i"), ptype=ExpType(IndexType(n), RD))
            step = _meta_apply(ctx, _meta_apply(ctx, f, acc_e), _idx(n, s, i, arr_t))
            loop = ImpPrim("for", (n,), (PhraseLambda(i, acc_t(ctx, step, acc_a)),))
            return _seq(acc_t(ctx, init, acc_a), loop, after(acc_e))

        return _new(ctx, space, t, "accum", body)

    return con_t(ctx, arr, with_arr)


def _acc_reduce(ctx, expr: FunPrim, output):
    t = expr.type_args[3]
    return _reduce_comm(ctx, expr, lambda acc_e: _assign(t, output, acc_e))


def _con_reduce(ctx, expr: FunPrim, k):
    return _reduce_comm(ctx, expr, lambda acc_e: con_t(ctx, acc_e, k))


def _acc_iterate(ctx, expr: FunPrim, output):
    n, m, k_steps, t = expr.type_args
    body_fn, arr = expr.args
    steps = nat.normalize(k_steps)
    if isinstance(steps, nat.Const) and steps.value < 1:
        raise TranslationError("iterate needs at least one step")
    if isinstance(steps, nat.Const) and steps.value == 1:
        # a single step writes straight to the output; no buffering needed
        def direct(arr_t):
            applied = _meta_apply(ctx, _meta_dep_apply(body_fn, m), arr_t)
            return acc_t(ctx, applied, output)

        return con_t(ctx, arr, direct)

    buf_size = nat.normalize(nat.Pow(n, steps) * m)

    def with_arr(arr_t):
        pair_t = PhrasePairType(
            PhrasePairType(
                PhrasePairType(AccType(ArrayType(buf_size, t)), ExpType(ArrayType(buf_size, t), RD)),
                COMM,
            ),
            COMM,
        )
        db = PhraseVar(ctx.fresh("db"), ptype=pair_t)
        db_acc = PhraseProj(1, PhraseProj(1, PhraseProj(1, db)), AccType(ArrayType(buf_size, t)))
        db_exp = PhraseProj(2, PhraseProj(1, PhraseProj(1, db)), ExpType(ArrayType(buf_size, t), RD))
        swap = PhraseProj(2, PhraseProj(1, db), COMM)
        done = PhraseProj(2, db, COMM)

        i = PhraseVar(ctx.fresh("i"), ptype=ExpType(IndexType(steps), RD))
        # iteration i consumes l*n elements and produces l, l = n^(k-i-1)*m
        l_i = nat.normalize(nat.Pow(n, steps - nat.Var(i.name) - nat.Const(1)) * m)
        read = FunPrim(
            "take",
            (nat.normalize(l_i * n), buf_size, t),
            (db_exp,),
            ExpType(ArrayType(nat.normalize(l_i * n), t), RD),
        )
        write = ImpPrim(
            "takeAcc", (l_i, buf_size, t), (db_acc,), AccType(ArrayType(l_i, t))
        )
        applied = _meta_apply(ctx, _meta_dep_apply(body_fn, l_i), read)
        step_comm = acc_t(ctx, applied, write)
        # swap prepares the next iteration; the one before the last points
        # the write side at the real output, so the final step writes there
        guard = ImpPrim(
            "ifLess",
            (steps, nat.normalize(steps - nat.Const(2))),
            (PhraseVar(i.name, i.uid, i.ptype), swap, done),
        )
        loop = ImpPrim("for", (steps,), (PhraseLambda(i, _seq(step_comm, guard)),))
        return ImpPrim(
            "newDoubleBuffer",
            (t, buf_size, m, nat.normalize(nat.Pow(n, steps) * m)),
            (arr_t, output, PhraseLambda(db, loop)),
        )

    return con_t(ctx, arr, with_arr)


def _con_passthrough(ctx, expr: FunPrim, k):
    """zip, join, split, fst, snd, take, idx stay functional: translate the
    children, then rebuild the view inside the continuation."""

    def continue_with(translated_args):
        return k(FunPrim(expr.tag, expr.type_args, tuple(translated_args), expr.ptype))

    def go(i, acc):
        if i == len(expr.args):
            return continue_with(acc)
        return con_t(ctx, expr.args[i], lambda p: go(i + 1, acc + [p]))

    return go(0, [])


def _con_to_mem(ctx, expr: FunPrim, k):
    space, t = expr.type_args
    (value,) = expr.args

    def body(tmp_e, tmp_a):
        return _seq(acc_t(ctx, value, tmp_a), k(tmp_e))

    return _new(ctx, space, t, "tmp", body)


def _con_binop(ctx, expr: FunPrim, k):
    t, _w = expr.type_args

    def lhs_done(a):
        def rhs_done(b):
            return k(FunPrim(expr.tag, (t, RD), (a, b), ExpType(t, RD)))

        return con_t(ctx, expr.args[1], rhs_done)

    return con_t(ctx, expr.args[0], lhs_done)


_ACC_CASES = {
    "mapWorkGroup": _acc_map_par,
    "mapLocal": _acc_map_par,
    "mapGlobal": _acc_map_par,
    "mapSeq": _acc_map_seq,
    "zip": _acc_zip,
    "join": _acc_join,
    "split": _acc_split,
    "reduceSeq": _acc_reduce,
    "iterate": _acc_iterate,
    "add": _acc_binop,
    "sub": _acc_binop,
    "mul": _acc_binop,
}

_CON_CASES = {
    "toMem": _con_to_mem,
    "reduceSeq": _con_reduce,
    "zip": _con_passthrough,
    "join": _con_passthrough,
    "split": _con_passthrough,
    "fst": _con_passthrough,
    "snd": _con_passthrough,
    "take": _con_passthrough,
    "idx": _con_passthrough,
    "add": _con_binop,
    "sub": _con_binop,
    "mul": _con_binop,
}


# ---------------------------------------------------------------------------
# whole compilation units


def translate_unit(
    typed: Expr, name: str, ctx: TranslationContext, free_sizes=()
) -> ImperativeUnit:
    """Allocate the unit's output according to its result data type and run
    the acceptor translation.  Dependent and value parameters become kernel
    parameters; the output lives in global memory."""
    nat_params = []
    inputs = []
    env = {}
    e = typed
    while True:
        if isinstance(e, DepLambda):
            if e.kind is not Kind.NAT:
                raise TranslationError("only size parameters can cross the kernel boundary")
            nat_params.append(e.param)
            ctx.reserve(e.param)
            e = e.body
        elif isinstance(e, Lambda):
            if not isinstance(e.param.type, DataType):
                raise TranslationError(
                    f"parameter {e.param.name!r} is not data; it cannot become "
                    "a kernel parameter"
                )
            pv = PhraseVar(e.param.name, ptype=ExpType(e.param.type, RD))
            ctx.reserve(e.param.name)
            inputs.append((pv, e.param.type))
            env[e.param.uid] = pv
            e = e.body
        else:
            break
    for s in free_sizes:
        if s not in nat_params:
            nat_params.append(s)
            ctx.reserve(s)
    out_type = e.type
    if not isinstance(out_type, DataType):
        raise TranslationError("the program result is not storable data")
    functional = rise_to_dpia(e, ctx, env)
    root = functional.ptype
    if isinstance(root, ExpType) and root.rw == RD:
        raise TranslationError(
            "the program result is already readable (Rd); there is nothing to "
            "write, and copying would require a choice that was never made"
        )
    functional = rw_infer(functional, expected_rw=WR)
    phrase_env = {v.uid: v.ptype for v, _dt in inputs}
    check_phrase(functional, phrase_env, ctx.assumptions)
    output = PhraseVar(ctx.fresh("output"), ptype=AccType(out_type))
    body = acc_t(ctx, functional, output)
    unit = ImperativeUnit(
        name=name,
        nat_params=tuple(nat_params),
        inputs=tuple(inputs),
        output=output,
        output_type=out_type,
        body=body,
        assumptions=tuple(ctx.assumptions),
        functional=functional,
    )
    return unit.check()
