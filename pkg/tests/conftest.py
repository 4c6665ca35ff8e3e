import random
from pathlib import Path

import numpy as np
import pytest

from risec.interpreter import eval_program, values_close
from risec.lowering import TranslationContext, translate_unit
from risec.parser import parse
from risec.primitives import default_registry
from risec.rules import rule_factories
from risec.strategy import Failure, RewriteContext, parse_strategy
from risec.typecheck import infer
from risec.types import ArrayType, ScalarType, TupleType

DATA = Path(__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def registry():
    return default_registry()


@pytest.fixture(scope="session")
def mv_source():
    return (DATA / "mv.rise").read_text()


@pytest.fixture(scope="session")
def mv_strategy_text():
    return (DATA / "mv_opt.elv").read_text()


def typed_program(source, registry=None):
    name, e = parse(source, registry)
    result = infer(e, registry)
    return name, result.expr, result.free_sizes


def rewrite(typed, strategy_text, registry=None):
    registry = registry or default_registry()
    strategy = parse_strategy(
        strategy_text, rule_factories(), surface_of=registry.surface_name
    )
    ctx = RewriteContext(registry=registry)
    outcome = strategy(typed, ctx)
    assert not isinstance(outcome, Failure), outcome
    return outcome.expr, ctx


def build_unit(lowered, name, ctx, target="c"):
    tctx = TranslationContext(target=target, assumptions=tuple(ctx.assumptions))
    return translate_unit(lowered, name, tctx, free_sizes=tuple(ctx.free_sizes))


def random_value(dtype, nat_env, rng):
    if isinstance(dtype, ArrayType):
        from risec import nat

        size = nat.evaluate(dtype.size, nat_env)
        return [random_value(dtype.elem, nat_env, rng) for _ in range(size)]
    if isinstance(dtype, TupleType):
        return [random_value(dtype.fst, nat_env, rng), random_value(dtype.snd, nat_env, rng)]
    if isinstance(dtype, ScalarType):
        if dtype.name == "f32":
            return round(rng.uniform(-4.0, 4.0), 3)
        if dtype.name == "i32":
            return rng.randint(-50, 50)
        return rng.random() < 0.5
    raise AssertionError(f"cannot generate {dtype!r}")


def random_inputs(typed, nat_env, rng):
    from risec.expr import DepLambda, Lambda

    out = []
    e = typed
    while True:
        if isinstance(e, DepLambda):
            e = e.body
        elif isinstance(e, Lambda):
            out.append(random_value(e.param.type, nat_env, rng))
            e = e.body
        else:
            return out


def assert_same_results(before, after, nat_env, trials=20, seed=0):
    """The interpreter oracle: both programs agree on random inputs."""
    rng = random.Random(seed)
    for _ in range(trials):
        inputs = random_inputs(before, nat_env, rng)
        a = eval_program(before, nat_env, inputs)
        b = eval_program(after, nat_env, inputs)
        assert values_close(a, b), (a, b, inputs)
