"""Rewrite strategies: rules as partial functions on expressions, composed
sequentially and applied at positions located by traversals.

Strategies transform typed expressions.  Rules build their replacement
untyped; the positioning combinators re-infer just the rewritten subtree
against its old type, so annotations elsewhere stay valid.  Positions are
paths of child indices; a predicate matches the maximal application chain
headed by a primitive (never the partial chain inside a longer one).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import nat
from .errors import FuelExhausted, StrategyError
from .expr import (
    Apply,
    DepApply,
    DepLambda,
    Expr,
    Lambda,
    children,
    head_primitive,
    replace_at,
    subterm_at,
)
from .typecheck import infer
from .types import Kind

DEFAULT_FUEL = 10_000


@dataclass(frozen=True)
class Success:
    expr: Expr


@dataclass(frozen=True)
class Failure:
    reason: str


@dataclass
class RewriteContext:
    registry: object = None
    assumptions: list = field(default_factory=list)
    free_sizes: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    current_path: tuple = ()

    def __post_init__(self):
        if self.registry is None:
            from .primitives import default_registry

            self.registry = default_registry()

    def assume_divides(self, den: nat.Nat, num: nat.Nat):
        pair = (nat.normalize(num), nat.normalize(den))
        if pair not in self.assumptions:
            self.assumptions.append(pair)

    def add_free_size(self, name: str):
        if name not in self.free_sizes:
            self.free_sizes.append(name)

    def log(self, rule_name: str):
        self.trace.append((rule_name, self.current_path))


@dataclass(frozen=True)
class Strategy:
    name: str
    fn: object  # (Expr, RewriteContext, env, tenv) -> Success | Failure

    def __call__(self, e, ctx=None, env=None, tenv=None):
        ctx = ctx or RewriteContext()
        return self.fn(e, ctx, env or {}, tenv or {})


def retype(ctx: RewriteContext, e: Expr, env, tenv, expected):
    """Re-infer a rewritten subtree against the type it replaces."""
    try:
        result = infer(
            e,
            registry=ctx.registry,
            assumptions=tuple(ctx.assumptions),
            env=env,
            tenv=tenv,
            expected=expected,
            free_sizes=tuple(ctx.free_sizes),
        )
    except Exception as err:  # noqa: BLE001 - rule rejection, not a crash
        return Failure(f"rewrite does not re-type: {err}")
    for name in result.free_sizes:
        ctx.add_free_size(name)
    return Success(result.expr)


def rule(name: str):
    """Decorator for rules: matcher+builder returning an untyped replacement
    (or Failure); re-typing and tracing are handled here."""

    def wrap(matcher):
        def fn(e, ctx, env, tenv):
            out = matcher(e, ctx)
            if isinstance(out, Failure):
                return out
            res = retype(ctx, out, env, tenv, e.type)
            if isinstance(res, Success):
                ctx.log(name)
            return res

        return Strategy(name, fn)

    return wrap


# ---------------------------------------------------------------------------
# combinators

id = Strategy("id", lambda e, ctx, env, tenv: Success(e))
fail = Strategy("fail", lambda e, ctx, env, tenv: Failure("fail"))


def seq(a: Strategy, b: Strategy) -> Strategy:
    def fn(e, ctx, env, tenv):
        ra = a.fn(e, ctx, env, tenv)
        if isinstance(ra, Failure):
            return ra
        return b.fn(ra.expr, ctx, env, tenv)

    return Strategy(f"{a.name} ; {b.name}", fn)


def seq_all(*strategies: Strategy) -> Strategy:
    out = strategies[0]
    for s in strategies[1:]:
        out = seq(out, s)
    return out


def lChoice(a: Strategy, b: Strategy) -> Strategy:
    def fn(e, ctx, env, tenv):
        ra = a.fn(e, ctx, env, tenv)
        if isinstance(ra, Success):
            return ra
        return b.fn(e, ctx, env, tenv)

    return Strategy(f"lChoice({a.name}, {b.name})", fn)


def try_(a: Strategy) -> Strategy:
    s = lChoice(a, id)
    return Strategy(f"try({a.name})", s.fn)


def repeat(a: Strategy, fuel: int = DEFAULT_FUEL) -> Strategy:
    def fn(e, ctx, env, tenv):
        current = e
        for _ in range(fuel):
            r = a.fn(current, ctx, env, tenv)
            if isinstance(r, Failure):
                return Success(current)
            current = r.expr
        raise FuelExhausted(
            f"repeat({a.name}) exceeded its fuel ({fuel} applications); "
            "the strategy does not terminate"
        )

    return Strategy(f"repeat({a.name})", fn)


# ---------------------------------------------------------------------------
# positions and traversals


def _extend(e, i, env, tenv):
    """Environment for child `i` of node `e`."""
    if isinstance(e, Lambda):
        return {**env, e.param.uid: e.param.type}, tenv
    if isinstance(e, DepLambda):
        return env, {**tenv, e.param: e.kind}
    return env, tenv


def iter_positions(e, env=None, tenv=None, path=(), is_fn_child=False, order="pre"):
    """Yield (path, subterm, env, tenv, is_fn_child).

    Pre-order is top-down leftmost (the function side of an application
    before its argument); post-order is the bottom-up dual.
    """
    env = env or {}
    tenv = tenv or {}
    here = (path, e, env, tenv, is_fn_child)
    if order == "pre":
        yield here
    for i, c in enumerate(children(e)):
        cenv, ctenv = _extend(e, i, env, tenv)
        fn_child = isinstance(e, (Apply, DepApply)) and i == 0
        yield from iter_positions(c, cenv, ctenv, path + (i,), fn_child, order)
    if order == "post":
        yield here


def _apply_at(s, root, pos, ctx):
    path, sub, env, tenv, _ = pos
    old_path = ctx.current_path
    ctx.current_path = path
    try:
        r = s.fn(sub, ctx, env, tenv)
    finally:
        ctx.current_path = old_path
    if isinstance(r, Failure):
        return r
    return Success(replace_at(root, path, r.expr))


def topDown(s: Strategy) -> Strategy:
    def fn(e, ctx, env, tenv):
        for pos in iter_positions(e, env, tenv):
            r = _apply_at(s, e, pos, ctx)
            if isinstance(r, Success):
                return r
        return Failure(f"{s.name} applies nowhere")

    return Strategy(f"topDown({s.name})", fn)


def bottomUp(s: Strategy) -> Strategy:
    def fn(e, ctx, env, tenv):
        for pos in iter_positions(e, env, tenv, order="post"):
            r = _apply_at(s, e, pos, ctx)
            if isinstance(r, Success):
                return r
        return Failure(f"{s.name} applies nowhere")

    return Strategy(f"bottomUp({s.name})", fn)


# ---------------------------------------------------------------------------
# predicates and locators


@dataclass(frozen=True)
class Predicate:
    name: str
    fn: object

    def __call__(self, e):
        return self.fn(e)


def is_primitive(name: str, surface_of=None) -> Predicate:
    def fn(e):
        tag = head_primitive(e)
        if tag is None:
            return False
        if surface_of is not None:
            return surface_of(tag) == name or tag == name
        return tag == name

    return Predicate(f"isPrimitive({name})", fn)


isMap = Predicate("isMap", lambda e: head_primitive(e) == "map")
isReduce = Predicate("isReduce", lambda e: head_primitive(e) in ("reduce", "reduceSeq"))


@dataclass(frozen=True)
class Locator:
    mode: str  # outermost | every
    pred: Predicate


def outermost(pred: Predicate) -> Locator:
    return Locator("outermost", pred)


def every(pred: Predicate) -> Locator:
    return Locator("every", pred)


def _candidates(e, env, tenv, order):
    for pos in iter_positions(e, env, tenv, order=order):
        _path, sub, _env, _tenv, is_fn_child = pos
        if not is_fn_child:
            yield pos


def at(s: Strategy, locator: Locator) -> Strategy:
    """Apply `s` at the subterm(s) selected by the locator.

    `outermost(p)` selects the first matching subterm in top-down leftmost
    order and applies `s` exactly once; `every(p)` applies `s` to all
    matching subterms in a single bottom-up pass, so freshly rewritten nodes
    are not revisited.
    """

    def fn(e, ctx, env, tenv):
        if locator.mode == "outermost":
            for pos in _candidates(e, env, tenv, "pre"):
                if locator.pred(pos[1]):
                    return _apply_at(s, e, pos, ctx)
            return Failure(f"no subterm matches {locator.pred.name}")
        # every: collect matches bottom-up first; ancestor paths stay valid
        # because splicing preserves the arity of every node above it
        matches = [
            pos for pos in _candidates(e, env, tenv, "post") if locator.pred(pos[1])
        ]
        current = e
        for path, _sub, penv, ptenv, is_fn_child in matches:
            sub_now = subterm_at(current, path)
            r = _apply_at(s, current, (path, sub_now, penv, ptenv, is_fn_child), ctx)
            if isinstance(r, Failure):
                return r
            current = r.expr
        return Success(current)

    return Strategy(f"{s.name} @ {locator.mode}({locator.pred.name})", fn)


# ---------------------------------------------------------------------------
# strategy files

_COMBINATORS = ("seq", "lChoice", "try", "repeat", "topDown", "bottomUp", "id", "fail")


def parse_strategy(text: str, rules: dict, surface_of=None) -> Strategy:
    """Parse a strategy file: steps separated by `;` or newlines, each a rule
    application `ruleName(args)? @ (outermost|every)(predicate)` or a bare
    combinator expression.  Backtick quoting is accepted and ignored."""
    from .parser import TokenStream, tokenize

    ts = TokenStream(tokenize(text))
    steps = [_parse_step(ts, rules, surface_of)]
    while ts.at(";"):
        ts.next()
        if ts.peek().kind == "eof":
            break
        steps.append(_parse_step(ts, rules, surface_of))
    if ts.peek().kind != "eof":
        ts.error(f"unexpected {ts.peek().text!r} in strategy file")
    return seq_all(*steps)


def _parse_step(ts, rules, surface_of):
    s = _parse_primary(ts, rules, surface_of)
    while ts.at("@"):
        ts.next()
        s = at(s, _parse_locator(ts, surface_of))
    return s


def _parse_primary(ts, rules, surface_of) -> Strategy:
    tok = ts.next()
    if tok.kind != "ident":
        raise StrategyError(f"expected a rule or combinator, found {tok.text!r}")
    name = tok.text
    if name == "id":
        return id
    if name == "fail":
        return fail
    if name in ("seq", "lChoice"):
        ts.expect("(")
        a = _parse_step(ts, rules, surface_of)
        ts.expect(",")
        b = _parse_step(ts, rules, surface_of)
        ts.expect(")")
        return seq(a, b) if name == "seq" else lChoice(a, b)
    if name in ("try", "repeat", "topDown", "bottomUp"):
        ts.expect("(")
        a = _parse_step(ts, rules, surface_of)
        ts.expect(")")
        return {"try": try_, "repeat": repeat, "topDown": topDown, "bottomUp": bottomUp}[name](a)
    if name not in rules:
        raise StrategyError(f"unknown rule {name!r}")
    args = []
    if ts.at("("):
        ts.next()
        while not ts.at(")"):
            args.append(_parse_rule_arg(ts))
            if ts.at(","):
                ts.next()
        ts.expect(")")
    try:
        return rules[name](*args)
    except TypeError as err:
        raise StrategyError(f"bad arguments for rule {name!r}: {err}") from None


def _parse_rule_arg(ts):
    from .parser import ADDRESS_SPACES, parse_nat

    tok = ts.peek()
    if tok.kind == "ident" and tok.text in ADDRESS_SPACES:
        ts.next()
        return ADDRESS_SPACES[tok.text]
    return parse_nat(ts)


def _parse_locator(ts, surface_of) -> Locator:
    mode = ts.next().text
    if mode not in ("outermost", "every"):
        raise StrategyError(f"unknown locator {mode!r}")
    ts.expect("(")
    pred = _parse_predicate(ts, surface_of)
    ts.expect(")")
    return Locator(mode, pred)


def _parse_predicate(ts, surface_of) -> Predicate:
    name = ts.next().text
    if name == "isMap":
        return isMap
    if name == "isReduce":
        return isReduce
    if name == "isPrimitive":
        ts.expect("(")
        prim = ts.next().text
        ts.expect(")")
        return is_primitive(prim, surface_of)
    raise StrategyError(f"unknown predicate {name!r}")
