import pytest

from risec import nat
from risec.errors import KindError
from risec.expr import (
    Apply,
    DepApply,
    DepLambda,
    Identifier,
    Lambda,
    Literal,
    Primitive,
    alpha_equivalent,
    free_identifiers,
    substitute,
)
from risec.parser import parse_expr, parse_scheme
from risec.types import (
    F32,
    ArrayType,
    FunType,
    Kind,
    TupleType,
    contains_fun_type,
    substitute_type,
    type_to_text,
)


def test_substitute_nat_in_type():
    t = ArrayType(nat.Var("n"), F32)
    out = substitute_type(t, "n", nat.Const(4), Kind.NAT)
    assert out == ArrayType(nat.Const(4), F32)


def test_substitute_listing_signature_types():
    # instantiating the matrix-vector type at m=8, n=4
    scheme = parse_scheme(
        "Array[n, Array[m, f32]] -> Array[m, f32] -> Array[n, f32]"
    )
    out = substitute_type(scheme, "m", nat.Const(8), Kind.NAT)
    out = substitute_type(out, "n", nat.Const(4), Kind.NAT)
    assert type_to_text(out) == "Array[4, Array[8, f32]] -> Array[8, f32] -> Array[4, f32]"


def test_substitute_capture_avoidance():
    x = Identifier("x")
    y = Identifier("y")
    # fun(x => y)[y := x] must rename the binder, not capture
    target = Lambda(x, y)
    out = substitute(target, y, x)
    assert isinstance(out, Lambda)
    assert out.param.uid != x.uid
    assert out.body.uid == x.uid
    assert alpha_equivalent(out, Lambda(Identifier("z"), x))


def test_substitute_kind_mismatch():
    with pytest.raises(KindError):
        substitute(ArrayType(nat.Var("n"), F32), ("n", Kind.NAT), F32)


def test_substitute_changes_only_target_free_vars():
    x, y, z = Identifier("x"), Identifier("y"), Identifier("z")
    e = Apply(Apply(Primitive("add"), x), y)
    out = substitute(e, y, z)
    free = {v.name for v in free_identifiers(out).values()}
    assert free == {"x", "z"}


def test_substitute_under_shadowing_dep_binder():
    inner = DepLambda(Kind.NAT, "n", Identifier("x", 1, ArrayType(nat.Var("n"), F32)))
    out = substitute(inner, ("n", Kind.NAT), nat.Const(3))
    # the binder shadows: the annotation still mentions n
    assert out.body.type == ArrayType(nat.Var("n"), F32)


def test_data_types_never_contain_functions():
    assert not contains_fun_type(ArrayType(nat.Var("n"), TupleType(F32, F32)))
    assert contains_fun_type(ArrayType(nat.Var("n"), F32)) is False
    assert contains_fun_type(FunType(F32, F32))


def test_alpha_equivalence_ignores_names():
    a = parse_expr("fun(x => x)")
    b = parse_expr("fun(y => y)")
    assert alpha_equivalent(a, b)
    assert not alpha_equivalent(a, parse_expr("fun(x => fun(y => x))"))


def test_alpha_equivalence_dep_binders():
    a = parse_expr("depFun((n: Nat) => fun(v: Array[n, f32] => v))")
    b = parse_expr("depFun((k: Nat) => fun(v: Array[k, f32] => v))")
    assert alpha_equivalent(a, b)


def test_alpha_distinguishes_literals():
    assert not alpha_equivalent(Literal("1.0f", 1.0), Literal("2.0f", 2.0))
