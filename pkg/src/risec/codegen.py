"""Source-text emission from imperative phrases.

Functional index views on both expressions (zip/split/join/take chains) and
acceptors (their *Acc counterparts) resolve into flat array index
arithmetic, normalized before rendering.  Targets share the statement
emitter; they differ in kernel qualifiers and how parallel fors render:
strided id loops for device kernels, `parallel for` pragmas for the host
multicore target, and a hard error for plain C.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import dpia as d
from . import nat
from .errors import EmitError
from .lowering import ImperativeUnit
from .types import (
    BOOL,
    F32,
    I32,
    AddressSpace,
    ArrayType,
    DataType,
    ScalarType,
    TupleType,
)

TARGETS = ("c", "openmp", "opencl")

_PARFOR_IDS = {
    "parForWorkGroup": ("get_group_id(0)", "get_num_groups(0)"),
    "parForLocal": ("get_local_id(0)", "get_local_size(0)"),
    "parForGlobal": ("get_global_id(0)", "get_global_size(0)"),
}

IPOW_HELPER = (
    "int ipow(int base, int exp) {\n"
    "  int r = 1;\n"
    "  while (exp > 0) { r = r * base; exp = exp - 1; }\n"
    "  return r;\n"
    "}\n"
)


def c_scalar_type(dt: DataType) -> str:
    if dt == F32:
        return "float"
    if dt == I32:
        return "int"
    if dt == BOOL:
        return "int"
    raise EmitError(f"no C representation for {dt!r}")


def array_shape(dt: DataType):
    """Flatten nested array dims; the element must be scalar."""
    dims = []
    while isinstance(dt, ArrayType):
        dims.append(dt.size)
        dt = dt.elem
    if isinstance(dt, TupleType):
        raise EmitError("tuple-typed memory has no C layout here; keep zips as views")
    return tuple(dims), dt


@dataclass
class _State:
    target: str
    assumptions: tuple
    uses_ipow: bool = False
    parallel_depth: int = 0


def _render_nat(n: nat.Nat, state: _State, prec=0) -> str:
    n = nat.normalize(n, state.assumptions)
    return _render(n, state, prec)


def _render(n, state, prec):
    if isinstance(n, nat.Const):
        return str(n.value) if n.value >= 0 else f"(-{-n.value})"
    if isinstance(n, nat.Var):
        return n.name
    if isinstance(n, nat.Sum):
        stripped = [nat._strip_negation(t) for t in n.terms]
        ordered = [s for s in stripped if not s[0]] + [s for s in stripped if s[0]]
        parts = []
        for i, (neg, body) in enumerate(ordered):
            s = _render(body, state, 1)
            if i == 0:
                parts.append(f"-{s}" if neg else s)
            else:
                parts.append((" - " if neg else " + ") + s)
        text = "".join(parts)
        return f"({text})" if prec > 1 else text
    if isinstance(n, nat.Product):
        text = " * ".join(_render(f, state, 2) for f in n.factors)
        return f"({text})" if prec > 2 else text
    if isinstance(n, nat.Div):
        text = f"{_render(n.num, state, 3)} / {_render(n.den, state, 3)}"
        return f"({text})" if prec >= 2 else text
    if isinstance(n, nat.Mod):
        text = f"{_render(n.num, state, 3)} % {_render(n.den, state, 3)}"
        return f"({text})" if prec >= 2 else text
    if isinstance(n, nat.Pow):
        state.uses_ipow = True
        return f"ipow({_render(n.base, state, 0)}, {_render(n.exp, state, 0)})"
    raise EmitError(f"cannot render size expression {n!r}")


# ---------------------------------------------------------------------------
# environment bindings


@dataclass(frozen=True)
class ArrayBinding:
    name: str
    dims: tuple  # of Nat
    elem: DataType
    deref: bool = False  # scalar-through-pointer


@dataclass(frozen=True)
class ScalarBinding:
    name: str
    dtype: DataType


@dataclass(frozen=True)
class AccBinding:
    base: object  # ArrayBinding | ScalarBinding
    prefix: tuple = ()  # indices already applied


@dataclass(frozen=True)
class AccPhraseBinding:
    """A per-iteration write slot: an acceptor phrase captured with its
    environment, plus the indices applied so far."""

    phrase: object
    env: dict
    prefix: tuple = ()


@dataclass(frozen=True)
class IndexBinding:
    name: str


@dataclass(frozen=True)
class CommBinding:
    lines: tuple


def _flat_index(dims, indices, state) -> str:
    if len(indices) != len(dims):
        raise EmitError(
            f"dimension mismatch: {len(indices)} indices for {len(dims)} dims"
        )
    flat = indices[0]
    for dim, ix in zip(dims[1:], indices[1:]):
        flat = flat * dim + ix
    return _render_nat(flat, state)


def _exp_to_nat(p, env) -> nat.Nat:
    if isinstance(p, d.PhraseVar):
        binding = env.get(p.uid)
        if isinstance(binding, IndexBinding):
            return nat.Var(binding.name)
        raise EmitError(f"index expression is not a loop variable: {p.name}")
    if isinstance(p, d.PhraseLiteral) and isinstance(p.value, int):
        return nat.Const(p.value)
    raise EmitError("unsupported index expression form")


def emit_exp(p: d.Phrase, env, state, pending=(), projs=()) -> str:
    """Render a readable expression; views collapse into flat indexing."""
    if isinstance(p, d.PhraseVar) or isinstance(p, d.PhraseProj):
        binding = _lookup(p, env)
        if isinstance(binding, (ScalarBinding, IndexBinding)):
            if pending or projs:
                raise EmitError(f"scalar {binding.name} used with indices")
            return binding.name
        if isinstance(binding, ArrayBinding):
            if projs:
                raise EmitError("tuple projection reached array memory; zips must stay views")
            if binding.deref:
                if pending:
                    raise EmitError("indexing into a scalar output")
                return f"*{binding.name}"
            return f"{binding.name}[{_flat_index(binding.dims, list(pending), state)}]"
        raise EmitError(f"cannot read {p!r}")
    if isinstance(p, d.PhraseLiteral):
        return p.text
    if isinstance(p, d.FunPrim):
        tag = p.tag
        if tag == "idx":
            i = _exp_to_nat(p.args[0], env)
            return emit_exp(p.args[1], env, state, (i,) + tuple(pending), projs)
        if tag == "split":
            chunk = p.type_args[0]
            c, j, *rest = pending
            return emit_exp(p.args[0], env, state, (c * chunk + j, *rest), projs)
        if tag == "join":
            inner = p.type_args[1]
            f, *rest = pending
            return emit_exp(
                p.args[0], env, state, (nat.Div(f, inner), nat.Mod(f, inner), *rest), projs
            )
        if tag == "take":
            return emit_exp(p.args[0], env, state, pending, projs)
        if tag == "zip":
            if not projs:
                raise EmitError("zip read without a projection")
            side = projs[-1]
            branch = p.args[0] if side == 1 else p.args[1]
            return emit_exp(branch, env, state, pending, projs[:-1])
        if tag == "fst":
            return emit_exp(p.args[0], env, state, pending, tuple(projs) + (1,))
        if tag == "snd":
            return emit_exp(p.args[0], env, state, pending, tuple(projs) + (2,))
        if tag in ("add", "sub", "mul"):
            if pending or projs:
                raise EmitError("indexed arithmetic value")
            op = {"add": "+", "sub": "-", "mul": "*"}[tag]
            a = emit_exp(p.args[0], env, state)
            b = emit_exp(p.args[1], env, state)
            return f"({a} {op} {b})"
    raise EmitError(f"no emission for expression {getattr(p, 'tag', type(p).__name__)}")


def _lookup(p, env):
    if isinstance(p, d.PhraseVar):
        binding = env.get(p.uid)
        if binding is None:
            raise EmitError(f"unbound name {p.name!r} during emission")
        return binding
    if isinstance(p, d.PhraseProj):
        path = []
        q = p
        while isinstance(q, d.PhraseProj):
            path.append(q.index)
            q = q.pair
        if isinstance(q, d.PhraseVar):
            value = env.get(q.uid)
            for index in reversed(path):
                if not isinstance(value, tuple):
                    return None
                value = value[0] if index == 1 else value[1]
            return value
    return None


def emit_acc(p: d.Phrase, env, state, pending=()) -> str:
    """Render a write destination as a C lvalue."""
    if isinstance(p, (d.PhraseVar, d.PhraseProj)):
        binding = _lookup(p, env)
        if isinstance(binding, AccPhraseBinding):
            return emit_acc(
                binding.phrase, binding.env, state, tuple(binding.prefix) + tuple(pending)
            )
        if isinstance(binding, AccBinding):
            return _acc_lvalue(binding, pending, state)
        if isinstance(binding, (ArrayBinding, ScalarBinding)):
            return _acc_lvalue(AccBinding(binding), pending, state)
        raise EmitError(f"cannot write through {p!r}")
    if isinstance(p, d.ImpPrim):
        tag = p.tag
        if tag == "idxAcc":
            i = _exp_to_nat(p.args[0], env)
            return emit_acc(p.args[1], env, state, (i,) + tuple(pending))
        if tag == "joinAcc":
            inner = p.type_args[1]
            a, b, *rest = pending
            return emit_acc(p.args[0], env, state, (a * inner + b, *rest))
        if tag == "splitAcc":
            chunk = p.type_args[0]
            f, *rest = pending
            return emit_acc(
                p.args[0], env, state, (nat.Div(f, chunk), nat.Mod(f, chunk), *rest)
            )
        if tag == "takeAcc":
            return emit_acc(p.args[0], env, state, pending)
        if tag in ("zipAcc1", "zipAcc2"):
            raise EmitError("tuple-typed memory has no C layout here; keep zips as views")
    raise EmitError(f"no emission for acceptor {getattr(p, 'tag', type(p).__name__)}")


def _acc_lvalue(binding: AccBinding, pending, state) -> str:
    base = binding.base
    indices = list(binding.prefix) + list(pending)
    if isinstance(base, ScalarBinding):
        if indices:
            raise EmitError(f"indexing into scalar {base.name}")
        return base.name
    if base.deref:
        if indices:
            raise EmitError("indexing into a scalar output")
        return f"*{base.name}"
    return f"{base.name}[{_flat_index(base.dims, indices, state)}]"


# ---------------------------------------------------------------------------
# statements


def _indent(lines, by="  "):
    return [by + line for line in lines]


def emit_comm(p: d.Phrase, env, state: _State) -> list:
    if isinstance(p, (d.PhraseVar, d.PhraseProj)):
        binding = _lookup(p, env)
        if isinstance(binding, CommBinding):
            return list(binding.lines)
        raise EmitError("expected a command")
    if not isinstance(p, d.ImpPrim):
        raise EmitError(f"cannot emit {p!r} as a statement")
    tag = p.tag
    if tag == "seq":
        return emit_comm(p.args[0], env, state) + emit_comm(p.args[1], env, state)
    if tag == "assign":
        lhs = emit_acc(p.args[0], env, state)
        rhs = emit_exp(p.args[1], env, state)
        return [f"{lhs} = {rhs};"]
    if tag == "new":
        return _emit_new(p, env, state)
    if tag == "for":
        bound = _render_nat(p.type_args[0], state)
        body = p.args[0]
        name = body.param.name
        inner = emit_comm(body.body, {**env, body.param.uid: IndexBinding(name)}, state)
        return [f"for (int {name} = 0; {name} < {bound}; {name} += 1) {{"] + _indent(
            inner
        ) + ["}"]
    if tag in _PARFOR_IDS:
        return _emit_parfor(p, env, state)
    if tag == "ifLess":
        threshold = _render_nat(p.type_args[1], state)
        i = emit_exp(p.args[0], env, state)
        on_true = emit_comm(p.args[1], env, state)
        on_false = emit_comm(p.args[2], env, state)
        return (
            [f"if ({i} < {threshold}) {{"]
            + _indent(on_true)
            + ["} else {"]
            + _indent(on_false)
            + ["}"]
        )
    if tag == "newDoubleBuffer":
        return emit_double_buffer(p, env, state)
    raise EmitError(f"no emission for command {tag!r}")


def _emit_new(p, env, state):
    space, dtype = p.type_args
    body = p.args[0]
    name = body.param.name
    qualifier = ""
    if space is AddressSpace.LOCAL and state.target == "opencl":
        qualifier = "local "
    if isinstance(dtype, ScalarType):
        binding = ScalarBinding(name, dtype)
        decl = f"{qualifier}{c_scalar_type(dtype)} {name};"
    else:
        dims, elem = array_shape(dtype)
        size = _render_nat(_size_product(dims), state)
        binding = ArrayBinding(name, dims, elem)
        decl = f"{qualifier}{c_scalar_type(elem)} {name}[{size}];"
    pair = (binding, AccBinding(binding))
    inner = emit_comm(body.body, {**env, body.param.uid: pair}, state)
    return [decl] + inner


def _size_product(dims):
    out = dims[0]
    for dim in dims[1:]:
        out = out * dim
    return nat.normalize(out)


def _emit_parfor(p, env, state):
    tag = p.tag
    bound = _render_nat(p.type_args[0], state)
    out = p.args[0]
    body = p.args[1]
    i_var = body.param
    inner_lambda = body.body
    o_var = inner_lambda.param
    name = i_var.name
    child = AccPhraseBinding(out, env, (nat.Var(name),))
    inner_env = {**env, i_var.uid: IndexBinding(name), o_var.uid: child}
    if state.target == "opencl":
        inner = emit_comm(inner_lambda.body, inner_env, state)
        start, stride = _PARFOR_IDS[tag]
        head = f"for (int {name} = {start}; {name} < {bound}; {name} += {stride}) {{"
        return [head] + _indent(inner) + ["}"]
    if state.target == "openmp":
        pragma = state.parallel_depth == 0
        state.parallel_depth += 1
        try:
            inner = emit_comm(inner_lambda.body, inner_env, state)
        finally:
            state.parallel_depth -= 1
        head = f"for (int {name} = 0; {name} < {bound}; {name} += 1) {{"
        lines = [head] + _indent(inner) + ["}"]
        if pragma:
            lines = ["#pragma omp parallel for"] + lines
        return lines
    raise EmitError(f"{tag} is not available for target {state.target!r}")


# ---------------------------------------------------------------------------
# whole kernels


def _param_decls(unit: ImperativeUnit, target: str):
    global_q = "global " if target == "opencl" else ""
    decls = []
    out_dims, out_elem = array_shape(unit.output_type)
    decls.append(f"{global_q}{c_scalar_type(out_elem)}* restrict {unit.output.name}")
    for name in unit.nat_params:
        decls.append(f"int {name}")
    for var, dtype in unit.inputs:
        if isinstance(dtype, ScalarType):
            decls.append(f"{c_scalar_type(dtype)} {var.name}")
        else:
            dims, elem = array_shape(dtype)
            decls.append(f"const {global_q}{c_scalar_type(elem)}* restrict {var.name}")
    return decls


def _initial_env(unit: ImperativeUnit):
    env = {}
    out_dims, out_elem = array_shape(unit.output_type)
    env[unit.output.uid] = AccBinding(
        ArrayBinding(unit.output.name, out_dims, out_elem, deref=not out_dims)
    )
    for var, dtype in unit.inputs:
        if isinstance(dtype, ScalarType):
            env[var.uid] = ScalarBinding(var.name, dtype)
        else:
            dims, elem = array_shape(dtype)
            env[var.uid] = ArrayBinding(var.name, dims, elem)
    return env


def emit(unit: ImperativeUnit, target: str) -> str:
    """Emit a kernel for `target`; deterministic, byte-stable text."""
    if target not in TARGETS:
        raise EmitError(f"unknown target {target!r}")
    state = _State(target=target, assumptions=unit.assumptions)
    env = _initial_env(unit)
    body = emit_comm(unit.body, env, state)
    params = _param_decls(unit, target)
    kernel_name = f"{unit.name}Kernel"
    qualifier = "__kernel\n" if target == "opencl" else ""
    header = f"{qualifier}void {kernel_name}({', '.join(params)}) {{"
    lines = [header] + _indent(body) + ["}"]
    text = "\n".join(lines) + "\n"
    if state.uses_ipow:
        text = IPOW_HELPER + "\n" + text
    return text


def emit_double_buffer(p: d.ImpPrim, env, state: _State) -> list:
    """Two buffers, input/output pointer locals, a flag byte, and swap/done
    blocks; the body runs between them inside the iteration loop."""
    dtype, buf_size, _out_len, _in_len = p.type_args
    input_p, output_p, body = p.args
    ctype = c_scalar_type(dtype if isinstance(dtype, ScalarType) else array_shape(dtype)[1])
    size = _render_nat(buf_size, state)
    in_base = _plain_array(input_p, env, "double-buffer input")
    out_base = _plain_array(output_p, env, "double-buffer output")
    decls = [
        f"{ctype} buffer1[{size}]; {ctype} buffer2[{size}];",
        f"const {ctype}* in_ptr = {in_base}; {ctype}* out_ptr = buffer1;",
        "unsigned char flag = 1;",
    ]
    swap_lines = (
        "in_ptr = flag ? buffer1 : buffer2;",
        "out_ptr = flag ? buffer2 : buffer1;",
        "flag = flag ^ 1;",
    )
    done_lines = (
        "in_ptr = flag ? buffer1 : buffer2;",
        f"out_ptr = {out_base};",
    )
    dims = (buf_size,)
    components = (
        (
            (
                AccBinding(ArrayBinding("out_ptr", dims, dtype)),
                ArrayBinding("in_ptr", dims, dtype),
            ),
            CommBinding(swap_lines),
        ),
        CommBinding(done_lines),
    )
    inner = emit_comm(body.body, {**env, body.param.uid: components}, state)
    return decls + inner


def _plain_array(p, env, what) -> str:
    binding = _lookup(p, env) if isinstance(p, (d.PhraseVar, d.PhraseProj)) else None
    if isinstance(binding, AccBinding) and not binding.prefix:
        binding = binding.base
    if isinstance(binding, ArrayBinding) and not binding.deref:
        return binding.name
    raise EmitError(f"{what} must be a whole array, not a view")
