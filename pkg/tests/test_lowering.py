import random

import pytest

from risec import nat
from risec.dpia import (
    AccType,
    ExpType,
    FunPrim,
    ImpPrim,
    PhraseLambda,
    PhraseVar,
    children as phrase_children,
    phrase_text,
)
from risec.errors import TranslationError
from risec.interpreter import eval_program, run_unit, values_close
from risec.lowering import TranslationContext, rise_to_dpia, translate_unit
from risec.parser import parse, parse_expr
from risec.typecheck import infer
from risec.types import AddressSpace

from conftest import DATA, build_unit, random_inputs, rewrite, typed_program

# ten end-to-end programs spanning maps, reductions, views, memory and the
# double buffer; each entry: (name, source, size assignment, target)
END_TO_END = [
    (
        "scaleSeq",
        "fun(xs: Array[6, f32] => xs |> mapSeq(fun(v => v * 2.0f)))",
        {},
        "c",
    ),
    (
        "mapMapToMem",
        "fun(xs: Array[8, f32] => xs |> mapSeq(fun(v => v + 1.0f)) |> toMem(Private) |> mapSeq(fun(v => v * 3.0f)))",
        {},
        "c",
    ),
    (
        "dotProduct",
        "fun(a: Array[5, f32] => fun(b: Array[5, f32] => zip(a)(b) |> mapSeq(fun(p => fst(p) * snd(p))) |> toMem(Private) |> reduceSeq(Private)(fun(acc, v => acc + v))(0.0f)))",
        {},
        "c",
    ),
    (
        "sumOfSquares",
        "fun(xs: Array[7, i32] => xs |> reduceSeq(Private)(fun(acc, v => acc + v * v))(0))",
        {},
        "c",
    ),
    (
        "rowSums",
        "fun(M: Array[3, Array[4, f32]] => M |> mapSeq(fun(row => row |> reduceSeq(Private)(fun(a, v => a + v))(0.0f))))",
        {},
        "c",
    ),
    (
        "chunkedScale",
        "fun(xs: Array[12, f32] => xs |> split(4) |> mapSeq(fun(c => c |> mapSeq(fun(v => v * 0.5f)))) |> join)",
        {},
        "c",
    ),
    (
        "zipAdd",
        "fun(a: Array[6, i32] => fun(b: Array[6, i32] => zip(a)(b) |> mapSeq(fun(p => fst(p) + snd(p)))))",
        {},
        "c",
    ),
    (
        "globalScale",
        "depFun((n: Nat) => fun(xs: Array[n, f32] => xs |> mapGlobal(fun(v => v * 4.0f))))",
        {"n": 10},
        "opencl",
    ),
    (
        "tiledStages",
        None,  # built from missing_mem.rise with the toMem fix
        {"n": 3, "m": 4},
        "opencl",
    ),
    (
        "pairSum",
        (DATA / "pair_sum.rise").read_text(),
        {},
        "c",
    ),
]


def _fixed_stages_source():
    return (DATA / "missing_mem.rise").read_text().replace(
        "row |> mapLocal(f) |> mapLocal(g)",
        "row |> mapLocal(f) |> toMem(Private) |> mapLocal(g)",
    )


def end_to_end_units():
    for name, source, nat_env, target in END_TO_END:
        if source is None:
            source = _fixed_stages_source()
        parsed_name, typed, free = typed_program(source)
        ctx = TranslationContext(target=target)
        unit = translate_unit(typed, parsed_name or name, ctx, free_sizes=free)
        yield name, typed, unit, nat_env, target


def test_unlowered_map_is_rejected():
    typed = infer(parse_expr("fun(xs: Array[4, f32] => xs |> map(fun(v => v + 1.0f)))")).expr
    with pytest.raises(TranslationError) as err:
        translate_unit(typed, "bad", TranslationContext())
    assert "map" in str(err.value)


def test_reduce_without_address_space_is_rejected():
    typed = infer(
        parse_expr("fun(xs: Array[4, f32] => xs |> reduceSeq(fun(a, v => a + v))(0.0f))")
    ).expr
    with pytest.raises(TranslationError) as err:
        translate_unit(typed, "bad", TranslationContext())
    assert "address space" in str(err.value)


def test_readable_result_has_nothing_to_write():
    typed = infer(parse_expr("fun(xs: Array[4, f32] => xs)")).expr
    with pytest.raises(TranslationError) as err:
        translate_unit(typed, "identity", TranslationContext())
    assert "Rd" in str(err.value)


def test_partial_application_eta_expands():
    typed = infer(
        parse_expr("fun(M: Array[2, Array[3, f32]] => M |> mapSeq(mapSeq(fun(v => v * 2.0f))))")
    ).expr
    ctx = TranslationContext()
    unit = translate_unit(typed, "nested", ctx)
    # the inner partial map became fun(x => mapSeq(n, s, t, f, x))
    text = phrase_text(unit.functional)
    assert "fun(x => mapSeq(3, f32, f32," in text


def test_mv_translation_matches_the_expected_imperative_shape(
    mv_source, mv_strategy_text
):
    _, typed, _ = typed_program(mv_source)
    lowered, ctx = rewrite(typed, mv_strategy_text)
    unit = build_unit(lowered, "mvOpt", ctx, target="opencl")
    body = unit.body
    # parForWorkGroup(n/s, Array[s, f32], joinAcc(output), ...)
    assert isinstance(body, ImpPrim) and body.tag == "parForWorkGroup"
    assert nat.equal(body.type_args[0], nat.Div(nat.Var("n"), nat.Var("s")))
    out_view = body.args[0]
    assert isinstance(out_view, ImpPrim) and out_view.tag == "joinAcc"
    wg_body = body.args[1].body.body
    assert wg_body.tag == "parForLocal"
    assert nat.equal(wg_body.type_args[0], nat.Var("s"))
    new_node = wg_body.args[1].body.body
    assert new_node.tag == "new"
    assert new_node.type_args[0] is AddressSpace.PRIVATE
    seq1 = new_node.args[0].body
    assert seq1.tag == "seq"
    init_assign = _first_assign(seq1)
    assert init_assign.args[1].text == "0.0f"
    tags = _all_tags(body)
    assert "for" in tags and tags.count("new") == 1
    # the loop body reads both zip sides through the split view
    text = phrase_text(unit.body)
    assert "fst(f32, f32, Rd, idx(m, Tuple[f32, f32], i, zip(" in text
    assert "split(s, n / s, Array[m, f32], Rd, M)" in text


def _first_assign(p):
    if isinstance(p, ImpPrim) and p.tag == "assign":
        return p
    for c in phrase_children(p):
        found = _first_assign(c)
        if found is not None:
            return found
    return None


def _all_tags(p):
    out = []

    def walk(q):
        if isinstance(q, (ImpPrim, FunPrim)):
            out.append(q.tag)
        for c in phrase_children(q):
            walk(c)

    walk(p)
    return out


def test_translation_makes_no_choices(mv_source, mv_strategy_text):
    # one `new` per toMem/reduceSeq/newDoubleBuffer in the source, and no
    # address space appears that the source did not contain
    _, typed, _ = typed_program(mv_source)
    lowered, ctx = rewrite(typed, mv_strategy_text)
    unit = build_unit(lowered, "mvOpt", ctx, target="opencl")
    func_tags = _all_tags(unit.functional)
    source_allocs = (
        func_tags.count("toMem") + func_tags.count("reduceSeq") + func_tags.count("iterate")
    )
    imp_tags = _all_tags(unit.body)
    assert imp_tags.count("new") + imp_tags.count("newDoubleBuffer") == source_allocs
    assert _address_spaces(unit.body) <= _address_spaces(unit.functional)


def _address_spaces(p):
    spaces = set()

    def walk(q):
        if isinstance(q, (ImpPrim, FunPrim)):
            for a in q.type_args:
                if isinstance(a, AddressSpace):
                    spaces.add(a)
        for c in phrase_children(q):
            walk(c)

    walk(p)
    return spaces


def test_translated_units_check_as_commands():
    for name, _typed, unit, _nats, _target in end_to_end_units():
        assert unit.check() is unit


@pytest.mark.parametrize("case", END_TO_END, ids=[c[0] for c in END_TO_END])
def test_translation_preserves_semantics(case):
    name, source, nat_env, target = case
    if source is None:
        source = _fixed_stages_source()
    parsed_name, typed, free = typed_program(source)
    ctx = TranslationContext(target=target)
    unit = translate_unit(typed, parsed_name or name, ctx, free_sizes=free)
    rng = random.Random(hash(name) & 0xFFFF)
    for _ in range(20):
        inputs = random_inputs(typed, nat_env, rng)
        functional = eval_program(typed, nat_env, inputs)
        imperative = run_unit(unit, nat_env, inputs, strict=True)
        assert values_close(functional, imperative), (name, inputs)


def test_mv_translation_preserves_semantics(mv_source, mv_strategy_text):
    _, typed, _ = typed_program(mv_source)
    lowered, ctx = rewrite(typed, mv_strategy_text)
    unit = build_unit(lowered, "mvOpt", ctx, target="opencl")
    nats = {"n": 4, "m": 8, "s": 2}
    rng = random.Random(99)
    for _ in range(20):
        inputs = random_inputs(lowered, nats, rng)
        assert values_close(
            eval_program(lowered, nats, inputs), run_unit(unit, nats, inputs, strict=True)
        )


def test_iterate_single_step_needs_no_buffering():
    source = """
    fun(xs: Array[2, f32] =>
      xs |> iterate(1)(depFun((l: Nat) => fun(a: Array[l * 2, f32] =>
        a |> split(2) |> mapSeq(fun(p => p |> reduceSeq(Private)(fun(acc, v => acc + v))(0.0f))) ))))
    """
    typed = infer(parse_expr(source)).expr
    unit = translate_unit(typed, "single", TranslationContext())
    tags = _all_tags(unit.body)
    assert "newDoubleBuffer" not in tags
    assert values_close(run_unit(unit, {}, [[1.0, 2.0]]), [3.0])


def test_iterate_rejects_zero_steps():
    source = """
    fun(xs: Array[1, f32] =>
      xs |> iterate(0)(depFun((l: Nat) => fun(a: Array[l * 2, f32] =>
        a |> split(2) |> mapSeq(fun(p => p |> reduceSeq(Private)(fun(acc, v => acc + v))(0.0f))) ))))
    """
    typed = infer(parse_expr(source)).expr
    with pytest.raises(TranslationError):
        translate_unit(typed, "zero", TranslationContext())


def test_translation_trace_records_dispatches(mv_source, mv_strategy_text):
    _, typed, _ = typed_program(mv_source)
    lowered, rctx = rewrite(typed, mv_strategy_text)
    tctx = TranslationContext(target="opencl", assumptions=tuple(rctx.assumptions))
    translate_unit(lowered, "mvOpt", tctx, free_sizes=tuple(rctx.free_sizes))
    kinds = {k for k, _ in tctx.trace}
    assert kinds == {"accT", "conT"}
    assert ("accT", "join") in tctx.trace
    assert ("conT", "split") in tctx.trace
