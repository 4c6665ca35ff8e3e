import pytest

from risec import nat
from risec.errors import InferenceError, StorageError
from risec.expr import DepApply
from risec.parser import parse, parse_expr
from risec.primitives import PrimitiveSignature, Registry
from risec.parser import parse_scheme
from risec.printer import print_typed
from risec.typecheck import check_annotations, infer, types_equal
from risec.types import type_to_text

from conftest import typed_program


def _type_of(source, registry=None):
    return type_to_text(infer(parse_expr(source, registry), registry).expr.type)


def test_matrix_vector_type(mv_source):
    _, typed, _ = typed_program(mv_source)
    assert (
        type_to_text(typed.type)
        == "(n: Nat) -> (m: Nat) -> Array[n, Array[m, f32]] -> Array[m, f32] -> Array[n, f32]"
    )


def test_annotated_identity():
    assert _type_of("fun(x: f32 => x)") == "f32 -> f32"


def test_zip_instantiation():
    t = _type_of("fun(a: Array[4, f32] => fun(b: Array[4, i32] => zip(a)(b)))")
    assert t == "Array[4, f32] -> Array[4, i32] -> Array[4, Tuple[f32, i32]]"


def test_zip_length_mismatch():
    with pytest.raises(InferenceError) as err:
        _type_of("fun(a: Array[4, f32] => fun(b: Array[5, f32] => zip(a)(b)))")
    assert "4" in str(err.value) and "5" in str(err.value)


def test_unbound_identifier():
    with pytest.raises(InferenceError) as err:
        _type_of("fun(x: f32 => y)")
    assert "unbound" in str(err.value)


def test_storing_a_function_is_rejected():
    with pytest.raises(StorageError):
        _type_of("fun(xs: Array[2, f32] => map(map)(xs))")


def test_split_solves_count_from_concrete_length():
    t = _type_of("fun(xs: Array[8, f32] => xs |> split(4))")
    assert t == "Array[8, f32] -> Array[2, Array[4, f32]]"


def test_split_by_symbolic_size_needs_an_assumption():
    src = "depFun((n: Nat) => fun(xs: Array[n, f32] => xs |> split(2)))"
    with pytest.raises(InferenceError):
        infer(parse_expr(src))
    out = infer(parse_expr(src), assumptions=[(nat.Var("n"), nat.Const(2))])
    assert type_to_text(out.expr.type) == "(n: Nat) -> Array[n, f32] -> Array[n / 2, Array[2, f32]]"


def test_join_of_split_restores_the_length_under_assumption():
    src = "depFun((n: Nat) => fun(xs: Array[n, f32] => xs |> split(2) |> join))"
    out = infer(parse_expr(src), assumptions=[(nat.Var("n"), nat.Const(2))])
    assert type_to_text(out.expr.type) == "(n: Nat) -> Array[n, f32] -> Array[n, f32]"


def test_free_size_variables_become_unit_parameters():
    src = "depFun((n: Nat) => fun(xs: Array[n, f32] => xs |> split(s) |> join))"
    out = infer(
        parse_expr(src), assumptions=[(nat.Var("n"), nat.Var("s"))]
    )
    assert out.free_sizes == ("s",)


def test_iterate_registration_and_typing():
    src = """
    fun(xs: Array[8, f32] =>
      xs |> iterate(3)(depFun((l: Nat) => fun(a: Array[l * 2, f32] =>
        a |> split(2) |> mapSeq(fun(p => p |> reduceSeq(Private)(fun(acc, v => acc + v))(0.0f))) ))))
    """
    assert _type_of(src) == "Array[8, f32] -> Array[1, f32]"


def test_duplicate_primitive_is_rejected():
    registry = Registry()
    with pytest.raises(InferenceError):
        registry.register(
            PrimitiveSignature("map", parse_scheme("{t: DataType} -> t -> t"), "map")
        )


def test_register_new_primitive_is_usable():
    registry = Registry()
    registry.register_scheme(
        "triple", "{n: Nat} -> {t: DataType} -> Array[n, t] -> Array[n, t]"
    )
    t = _type_of("fun(xs: Array[3, i32] => triple(xs))", registry)
    assert t == "Array[3, i32] -> Array[3, i32]"


def test_non_inferable_implicit_is_rejected():
    registry = Registry()
    with pytest.raises(InferenceError):
        registry.register_scheme("ghost", "{q: Nat} -> {t: DataType} -> t -> t")


def test_unsolved_implicit_is_reported():
    # zip applied to one argument of unknown length: n never pins down
    with pytest.raises(InferenceError) as err:
        infer(parse_expr("fun(x => zip(x))"))
    assert "unsolved" in str(err.value) or "cannot" in str(err.value)


def test_annotations_recheck_with_a_plain_checker(mv_source):
    _, typed, _ = typed_program(mv_source)
    assert check_annotations(typed)


def test_inference_is_deterministic(mv_source):
    _, a, _ = typed_program(mv_source)
    _, b, _ = typed_program(mv_source)
    assert print_typed(a) == print_typed(b)


def test_substitution_lemma():
    src = "depFun((n: Nat) => fun(xs: Array[n, f32] => xs |> mapSeq(fun(v => v + 1.0f))))"
    out = infer(parse_expr(src)).expr
    applied = infer(DepApply(out, nat.Const(4))).expr
    from risec.types import substitute_type, Kind

    expected = substitute_type(out.type.body, "n", nat.Const(4), Kind.NAT)
    assert types_equal(applied.type, expected)


def test_literal_types():
    assert _type_of("fun(x: f32 => x + 0.5f)") == "f32 -> f32"
    assert _type_of("fun(x: i32 => x * 3)") == "i32 -> i32"
