import os
import random
import re
import shutil
import subprocess

import numpy as np
import pytest

from risec import nat
from risec.cexec import execute_kernel, run_emitted
from risec.codegen import emit
from risec.errors import EmitError
from risec.interpreter import eval_program, run_unit, values_close
from risec.lowering import TranslationContext, translate_unit
from risec.parser import parse_expr
from risec.typecheck import infer

from conftest import DATA, GOLDEN, build_unit, random_inputs, rewrite, typed_program
from test_lowering import END_TO_END, _fixed_stages_source


def _unit_for(source, name, target="c"):
    parsed_name, typed, free = typed_program(source)
    ctx = TranslationContext(target=target)
    return typed, translate_unit(typed, parsed_name or name, ctx, free_sizes=free)


def _mv_unit(mv_source, mv_strategy_text):
    _, typed, _ = typed_program(mv_source)
    lowered, ctx = rewrite(typed, mv_strategy_text)
    return lowered, build_unit(lowered, "mvOpt", ctx, target="opencl")


def test_mv_kernel_structure(mv_source, mv_strategy_text):
    _, unit = _mv_unit(mv_source, mv_strategy_text)
    code = emit(unit, "opencl")
    assert "__kernel" in code
    assert (
        "void mvOptKernel(global float* restrict output, int n, int m, int s, "
        "const global float* restrict M, const global float* restrict x)" in code
    )
    assert "for (int wgId = get_group_id(0); wgId < n / s; wgId += get_num_groups(0))" in code
    assert "for (int lId = get_local_id(0); lId < s; lId += get_local_size(0))" in code
    assert "float accum;" in code
    assert code.count("for (int i = 0; i < m; i += 1)") == 1
    # index expressions are equal to the expected forms as size expressions
    matrix_index = re.search(r"M\[([^\]]+)\]", code).group(1)
    expected = "(i + lId * m) + (m * s * wgId)"
    assert _nat_equal_text(matrix_index, expected)
    assert "x[i]" in code
    out_index = re.search(r"output\[([^\]]+)\]", code).group(1)
    assert _nat_equal_text(out_index, "lId + (s * wgId)")


def _nat_equal_text(a, b):
    from risec.parser import TokenStream, parse_nat, tokenize

    na = parse_nat(TokenStream(tokenize(a)))
    nb = parse_nat(TokenStream(tokenize(b)))
    return nat.equal(na, nb)


def test_mv_kernel_golden(mv_source, mv_strategy_text):
    _, unit = _mv_unit(mv_source, mv_strategy_text)
    code = emit(unit, "opencl")
    golden = (GOLDEN / "mv_opt_kernel.cl").read_text()
    assert code == golden


def test_emission_is_deterministic(mv_source, mv_strategy_text):
    _, unit_a = _mv_unit(mv_source, mv_strategy_text)
    _, unit_b = _mv_unit(mv_source, mv_strategy_text)
    assert emit(unit_a, "opencl") == emit(unit_b, "opencl")


def test_scalar_output_assigns_through_the_pointer():
    _typed, unit = _unit_for(
        "fun(xs: Array[4, f32] => xs |> reduceSeq(Private)(fun(a, v => a + v))(0.0f))",
        "total",
    )
    code = emit(unit, "c")
    assert "*output = accum;" in code


def test_plain_c_rejects_parallel_loops():
    _typed, unit = _unit_for(
        "fun(xs: Array[4, f32] => xs |> mapLocal(fun(v => v + 1.0f)))",
        "bad",
        target="c",
    )
    with pytest.raises(EmitError) as err:
        emit(unit, "c")
    assert "parForLocal" in str(err.value) and "c" in str(err.value)


def test_openmp_pragma_only_on_the_outermost_loop():
    source = (
        "fun(M: Array[4, Array[3, f32]] => M |> mapGlobal(fun(row => "
        "row |> mapGlobal(fun(v => v * 2.0f)))))"
    )
    # nested parallel maps: outer pragma only
    _typed, unit = _unit_for(source, "nested", target="openmp")
    code = emit(unit, "openmp")
    assert code.count("for (int") == 2
    assert code.count("#pragma omp parallel for") == 1
    assert code.index("#pragma") < code.index("for (")


def test_openmp_matches_interpreter():
    source = "fun(xs: Array[9, f32] => xs |> mapGlobal(fun(v => v * 2.0f)))"
    typed, unit = _unit_for(source, "scale", target="openmp")
    code = emit(unit, "openmp")
    xs = [float(i) for i in range(9)]
    assert values_close(
        run_emitted(code, unit, {}, [xs]), run_unit(unit, {}, [xs])
    )


def test_double_buffer_structure():
    source = (DATA / "pair_sum.rise").read_text()
    _typed, unit = _unit_for(source, "pairSum")
    code = emit(unit, "c")
    golden = (GOLDEN / "pair_sum.c").read_text()
    assert code == golden
    assert "float buffer1[8]; float buffer2[8];" in code
    assert "const float* in_ptr = xs; float* out_ptr = buffer1;" in code
    assert "unsigned char flag = 1;" in code
    # the swap block flips the buffers through the flag
    assert "in_ptr = flag ? buffer1 : buffer2;" in code
    assert "out_ptr = flag ? buffer2 : buffer1;" in code
    assert "flag = flag ^ 1;" in code
    # the done block points the write side at the real output
    assert "out_ptr = output;" in code


def test_double_buffer_executes_correctly():
    source = (DATA / "pair_sum.rise").read_text()
    typed, unit = _unit_for(source, "pairSum")
    code = emit(unit, "c")
    out = run_emitted(code, unit, {}, [[1, 2, 3, 4, 5, 6, 7, 8]])
    assert values_close(out, [np.float32(36.0)])
    rng = random.Random(5)
    for _ in range(5):
        xs = [round(rng.uniform(-2, 2), 2) for _ in range(8)]
        assert values_close(
            run_emitted(code, unit, {}, [xs]), eval_program(typed, {}, [xs])
        )


def test_unknown_target_is_rejected(mv_source, mv_strategy_text):
    _, unit = _mv_unit(mv_source, mv_strategy_text)
    with pytest.raises(EmitError):
        emit(unit, "cuda")


@pytest.mark.parametrize("case", END_TO_END, ids=[c[0] for c in END_TO_END])
def test_emitted_code_matches_the_store_interpreter(case):
    name, source, nat_env, target = case
    if source is None:
        source = _fixed_stages_source()
    parsed_name, typed, free = typed_program(source)
    ctx = TranslationContext(target=target)
    unit = translate_unit(typed, parsed_name or name, ctx, free_sizes=free)
    code = emit(unit, target)
    rng = random.Random(hash(name) & 0xFFF)
    for _ in range(20):
        inputs = random_inputs(typed, nat_env, rng)
        emitted = run_emitted(code, unit, nat_env, inputs)
        imperative = run_unit(unit, nat_env, inputs, strict=True)
        assert values_close(emitted, imperative), (name, inputs)


def test_mv_emitted_code_matches_the_store_interpreter(mv_source, mv_strategy_text):
    lowered, unit = _mv_unit(mv_source, mv_strategy_text)
    code = emit(unit, "opencl")
    nats = {"n": 4, "m": 8, "s": 2}
    rng = random.Random(1)
    for _ in range(20):
        inputs = random_inputs(lowered, nats, rng)
        assert values_close(
            run_emitted(code, unit, nats, inputs), run_unit(unit, nats, inputs)
        )


# ---------------------------------------------------------------------------
# the C-subset evaluator itself


def test_cexec_basic_kernel():
    code = """
    void addKernel(float* restrict output, int n, const float* restrict xs) {
      for (int i = 0; i < n; i += 1) {
        output[i] = (xs[i] + 1.0f);
      }
    }
    """
    out = [np.float32(0)] * 3
    execute_kernel(code, {"output": out, "n": 3, "xs": [np.float32(v) for v in (1, 2, 3)]})
    assert out == [np.float32(2), np.float32(3), np.float32(4)]


def test_cexec_pointer_swap_and_ternary():
    code = """
    void swapKernel(float* restrict output, const float* restrict xs) {
      float buffer1[2]; float buffer2[2];
      const float* in_ptr = xs; float* out_ptr = buffer1;
      unsigned char flag = 1;
      for (int i = 0; i < 2; i += 1) {
        out_ptr[0] = in_ptr[0]; out_ptr[1] = in_ptr[1];
        if (i < 0) {
          in_ptr = flag ? buffer1 : buffer2;
          out_ptr = flag ? buffer2 : buffer1;
          flag = flag ^ 1;
        } else {
          in_ptr = flag ? buffer1 : buffer2;
          out_ptr = output;
        }
      }
    }
    """
    out = [np.float32(0)] * 2
    execute_kernel(code, {"output": out, "xs": [np.float32(5), np.float32(7)]})
    assert out == [np.float32(5), np.float32(7)]


def test_cexec_out_of_bounds_is_reported():
    code = """
    void oopsKernel(float* restrict output) {
      output[3] = 1.0f;
    }
    """
    from risec.errors import InterpreterError

    with pytest.raises(InterpreterError):
        execute_kernel(code, {"output": [np.float32(0)] * 2})


def test_cexec_int_division_truncates():
    code = """
    void divKernel(int* restrict output, int n) {
      output[0] = n / 4;
      output[1] = n % 4;
    }
    """
    out = [0, 0]
    execute_kernel(code, {"output": out, "n": 11})
    assert out == [2, 3]


# ---------------------------------------------------------------------------
# optional: a real toolchain behind a feature flag

_CC = shutil.which("cc") or shutil.which("gcc")
_CC_ENABLED = os.environ.get("RISEC_CC_TESTS") == "1" and _CC is not None


@pytest.mark.skipif(not _CC_ENABLED, reason="set RISEC_CC_TESTS=1 with a C compiler on PATH")
@pytest.mark.parametrize(
    "case", [c for c in END_TO_END if c[3] in ("c", "openmp")], ids=lambda c: c[0]
)
def test_real_compiler_agrees(case, tmp_path):
    name, source, nat_env, target = case
    if source is None:
        source = _fixed_stages_source()
    parsed_name, typed, free = typed_program(source)
    ctx = TranslationContext(target=target)
    unit = translate_unit(typed, parsed_name or name, ctx, free_sizes=free)
    code = emit(unit, target)
    rng = random.Random(17)
    inputs = random_inputs(typed, nat_env, rng)
    expected = run_unit(unit, nat_env, inputs)
    got = _compile_and_run(code, unit, nat_env, inputs, tmp_path)
    assert values_close(got, expected, ulp=4)


def _compile_and_run(code, unit, nat_env, inputs, tmp_path):
    from risec.cexec import flatten_value, unflatten_value
    from risec.interpreter import convert_input
    from risec.types import ArrayType, ScalarType

    out_size = 1
    dtype = unit.output_type
    while isinstance(dtype, ArrayType):
        out_size *= nat.evaluate(dtype.size, nat_env)
        dtype = dtype.elem
    arg_decls, call_args, setup = [], [], []
    call_args.append("output")
    setup.append(f"static float output[{out_size}];")
    for name in unit.nat_params:
        call_args.append(str(nat_env[name]))
    for (var, vdtype), raw in zip(unit.inputs, inputs):
        value = convert_input(raw, vdtype)
        if isinstance(vdtype, ScalarType):
            call_args.append(repr(float(value)) + "f")
            continue
        flat = flatten_value(value, vdtype)
        vals = ", ".join(f"{float(v)!r}f" for v in flat)
        setup.append(f"static float {var.name}_data[] = {{{vals}}};")
        call_args.append(f"{var.name}_data")
    driver = "\n".join(
        ["#include <stdio.h>", code, "int main(void) {"]
        + [f"  {line}" for line in setup]
        + [
            f"  {unit.name}Kernel({', '.join(call_args)});",
            f"  for (int i = 0; i < {out_size}; i += 1) printf(\"%.9g\\n\", output[i]);",
            "  return 0;",
            "}",
        ]
    )
    src = tmp_path / "driver.c"
    src.write_text(driver)
    exe = tmp_path / "driver"
    subprocess.run([_CC, "-std=c99", "-O0", str(src), "-o", str(exe)], check=True)
    lines = subprocess.run([str(exe)], check=True, capture_output=True, text=True).stdout.split()
    flat = [np.float32(v) for v in lines]
    value, _ = unflatten_value(flat, unit.output_type, nat_env)
    return value
