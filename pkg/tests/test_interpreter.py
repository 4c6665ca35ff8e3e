import numpy as np
import pytest

from risec import nat
from risec.dpia import (
    RD,
    AccType,
    ExpType,
    ImpPrim,
    PhraseLambda,
    PhraseLiteral,
    PhraseVar,
)
from risec.errors import InterpreterError, RaceViolation
from risec.interpreter import (
    Acceptor,
    Store,
    eval_program,
    exec_comm,
    run_unit,
    to_plain,
    ulp_distance,
    values_close,
)
from risec.lowering import TranslationContext, translate_unit
from risec.parser import parse_expr
from risec.typecheck import infer
from risec.types import F32, ArrayType, IndexType

from conftest import typed_program


def _typed(source):
    return infer(parse_expr(source)).expr


def test_mv_reference_result(mv_source):
    _, typed, _ = typed_program(mv_source)
    out = eval_program(typed, {"n": 2, "m": 3}, [[[1, 2, 3], [4, 5, 6]], [1, 1, 1]])
    assert to_plain(out) == [6.0, 15.0]


def test_map_id_is_identity():
    typed = _typed("fun(xs: Array[5, f32] => xs |> map(id))")
    xs = [1.5, 2.5, 0.0, -3.0, 9.0]
    assert to_plain(eval_program(typed, {}, [xs])) == xs


def test_all_map_variants_evaluate_pointwise():
    for prim in ("map", "mapSeq", "mapGlobal", "mapWorkGroup", "mapLocal"):
        typed = _typed(f"fun(xs: Array[4, i32] => xs |> {prim}(fun(v => v * 3)))")
        assert eval_program(typed, {}, [[1, 2, 3, 4]]) == [3, 6, 9, 12]


def test_reduce_is_a_left_fold():
    typed = _typed("fun(xs: Array[4, f32] => xs |> reduce(fun(a, b => a - b))(0.0f))")
    assert to_plain(eval_program(typed, {}, [[1, 2, 3, 4]])) == -10.0


def test_split_join_reshape():
    typed = _typed("fun(xs: Array[6, i32] => xs |> split(3))")
    assert eval_program(typed, {}, [[1, 2, 3, 4, 5, 6]]) == [[1, 2, 3], [4, 5, 6]]
    back = _typed("fun(xs: Array[6, i32] => xs |> split(3) |> join)")
    assert eval_program(back, {}, [[1, 2, 3, 4, 5, 6]]) == [1, 2, 3, 4, 5, 6]


def test_iterate_pairwise_sum():
    typed = _typed(
        """
        fun(xs: Array[8, f32] =>
          xs |> iterate(3)(depFun((l: Nat) => fun(a: Array[l * 2, f32] =>
            a |> split(2) |> mapSeq(fun(p =>
              p |> reduceSeq(Private)(fun(acc, v => acc + v))(0.0f) )) ))))
        """
    )
    assert to_plain(eval_program(typed, {}, [[1, 2, 3, 4, 5, 6, 7, 8]])) == [36.0]


def test_float_accumulation_is_single_precision():
    typed = _typed("fun(xs: Array[3, f32] => xs |> reduce(add)(0.0f))")
    out = eval_program(typed, {}, [[0.1, 0.2, 0.3]])
    expected = (np.float32(0.1) + np.float32(0.2)) + np.float32(0.3)
    assert isinstance(out, np.float32)
    assert ulp_distance(out, expected) == 0


def test_shape_mismatch_is_reported():
    typed = _typed("fun(xs: Array[4, f32] => xs |> map(id))")
    with pytest.raises(InterpreterError):
        eval_program(typed, {}, [[1.0, 2.0]])


def test_missing_size_assignment_is_reported(mv_source):
    _, typed, _ = typed_program(mv_source)
    with pytest.raises(InterpreterError):
        eval_program(typed, {"n": 2}, [[[1.0]], [1.0]])


# ---------------------------------------------------------------------------
# the store-based evaluator


def test_last_write_wins():
    store = Store()
    alloc = store.alloc(None)
    acc = PhraseVar("a", ptype=AccType(F32))
    one = ImpPrim("assign", (F32,), (acc, PhraseLiteral("1.0f", 1.0, F32)))
    two = ImpPrim("assign", (F32,), (acc, PhraseLiteral("2.0f", 2.0, F32)))
    both = ImpPrim("seq", (), (one, two))
    exec_comm(both, {acc.uid: Acceptor(alloc)}, store, {})
    assert store.read(alloc) == np.float32(2.0)


def test_unwritten_output_is_detected():
    typed = _typed("fun(xs: Array[4, f32] => xs |> mapSeq(fun(v => v + 1.0f)))")
    unit = translate_unit(typed, "inc", TranslationContext())
    with pytest.raises(InterpreterError):
        run_unit(unit, {}, [[1.0, 2.0]])  # wrong length: loop writes 4 cells


def test_strict_mode_flags_overlapping_writes():
    # hand-build a parallel for whose body always writes cell 0
    n2 = nat.Const(2)
    out = PhraseVar("out", ptype=AccType(ArrayType(n2, F32)))
    i = PhraseVar("i", ptype=ExpType(IndexType(n2), RD))
    o = PhraseVar("o", ptype=AccType(F32))
    bad_slot = ImpPrim(
        "idxAcc",
        (n2, F32),
        (PhraseLiteral("0", 0, IndexType(n2)), out),
        AccType(F32),
    )
    body = PhraseLambda(i, PhraseLambda(o, ImpPrim("assign", (F32,), (bad_slot, PhraseLiteral("1.0f", 1.0, F32)))))
    par = ImpPrim("parForLocal", (n2, F32), (out, body))
    store = Store(strict=True)
    alloc = store.alloc([None, None])
    with pytest.raises(RaceViolation):
        exec_comm(par, {out.uid: Acceptor(alloc)}, store, {})


def test_strict_mode_accepts_disjoint_writes():
    typed = _typed("fun(xs: Array[6, f32] => xs |> mapGlobal(fun(v => v * 2.0f)))")
    unit = translate_unit(typed, "ok", TranslationContext(target="opencl"))
    out = run_unit(unit, {}, [[1, 2, 3, 4, 5, 6]], strict=True)
    assert to_plain(out) == [2.0, 4.0, 6.0, 8.0, 10.0, 12.0]


def test_values_close_tolerance():
    a = np.float32(1.0)
    b = np.frombuffer(
        (np.float32(1.0).view(np.int32) + 3).tobytes(), dtype=np.float32
    )[0]
    assert values_close([a], [b], ulp=4)
    assert not values_close([a], [np.float32(1.1)], ulp=4)
    assert values_close([1, 2], [1, 2])
    assert not values_close([1, 2], [1, 3])
