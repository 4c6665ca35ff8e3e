"""An evaluator for the C subset the emitter produces.

This is the default execution oracle for generated code: the emitted text is
parsed and run directly, so the test suite needs no external toolchain.  The
subset covers exactly what the emitter writes: one kernel function,
declarations (scalars, arrays, pointers), assignments, counted for loops,
if/else, the device id intrinsics (sequentialized: id 0, count 1, so strided
loops cover the full range), and the ipow helper.

Floats are IEEE single precision, matching the interpreters.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import nat
from .errors import InterpreterError
from .interpreter import convert_input
from .types import ArrayType, ScalarType, TupleType

_C_TOKEN = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*|\#[^\n]*)
  | (?P<float>\d+\.\d+f?)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym><=|>=|==|!=|&&|\|\||[-+*/%^&|!<>=?:;,(){}\[\]])
    """,
    re.VERBOSE,
)

_INTRINSICS = {
    "get_group_id": 0,
    "get_num_groups": 1,
    "get_local_id": 0,
    "get_local_size": 1,
    "get_global_id": 0,
    "get_global_size": 1,
}

_QUALIFIERS = {"const", "global", "local", "restrict", "__kernel", "static"}
_TYPES = {"float", "int", "void", "unsigned"}


def _tokenize(source: str):
    out, pos = [], 0
    while pos < len(source):
        m = _C_TOKEN.match(source, pos)
        if not m:
            raise InterpreterError(f"cannot tokenize generated code at {source[pos:pos+20]!r}")
        if m.lastgroup != "ws":
            out.append(m.group(0))
        pos = m.end()
    return out


class _Cursor:
    def __init__(self, tokens):
        self.toks = tokens
        self.i = 0

    def peek(self, k=0):
        return self.toks[self.i + k] if self.i + k < len(self.toks) else ""

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, tok):
        got = self.next()
        if got != tok:
            raise InterpreterError(f"generated-code parse error: expected {tok!r}, got {got!r}")
        return got

    def at(self, tok):
        return self.peek() == tok


# ---------------------------------------------------------------------------
# statement AST (tuples): ("decl", ctype, name, size_expr|None, init|None)
# ("assign", lvalue, expr) ("for", name, init, bound, step, body)
# ("if", cond, then, els)


@dataclass
class Kernel:
    name: str
    params: list  # (name, kind) kind in {"ptr", "int", "float"}
    body: list


def parse_kernel(source: str) -> Kernel:
    cur = _Cursor(_tokenize(source))
    _skip_helpers(cur)
    while cur.peek() in _QUALIFIERS:
        cur.next()
    cur.expect("void")
    name = cur.next()
    cur.expect("(")
    params = []
    while not cur.at(")"):
        params.append(_parse_param(cur))
        if cur.at(","):
            cur.next()
    cur.expect(")")
    cur.expect("{")
    body = _parse_block(cur)
    return Kernel(name, params, body)


def _skip_helpers(cur: _Cursor):
    # the ipow helper is implemented natively; skip its definition
    while True:
        save = cur.i
        while cur.peek() in _QUALIFIERS:
            cur.next()
        if cur.peek() == "int" and cur.peek(1) == "ipow":
            while cur.next() != "{":
                pass
            depth = 1
            while depth:
                tok = cur.next()
                if tok == "{":
                    depth += 1
                elif tok == "}":
                    depth -= 1
        else:
            cur.i = save
            return


def _parse_param(cur: _Cursor):
    while cur.peek() in _QUALIFIERS:
        cur.next()
    ctype = cur.next()
    if ctype == "unsigned":
        cur.next()
        ctype = "int"
    is_ptr = False
    while cur.at("*"):
        cur.next()
        is_ptr = True
    while cur.peek() in _QUALIFIERS:
        cur.next()
    name = cur.next()
    kind = "ptr" if is_ptr else ("float" if ctype == "float" else "int")
    return (name, kind)


def _parse_block(cur: _Cursor) -> list:
    stmts = []
    while not cur.at("}"):
        stmts.append(_parse_stmt(cur))
    cur.expect("}")
    return stmts


def _parse_stmt(cur: _Cursor):
    tok = cur.peek()
    if tok == "for":
        cur.next()
        cur.expect("(")
        cur.expect("int")
        name = cur.next()
        cur.expect("=")
        init = _parse_expr(cur)
        cur.expect(";")
        cur.next()  # loop variable reappears
        cur.expect("<")
        bound = _parse_expr(cur)
        cur.expect(";")
        cur.next()
        cur.expect("+")
        cur.expect("=")
        step = _parse_expr(cur)
        cur.expect(")")
        cur.expect("{")
        return ("for", name, init, bound, step, _parse_block(cur))
    if tok == "if":
        cur.next()
        cur.expect("(")
        cond = _parse_expr(cur)
        cur.expect(")")
        cur.expect("{")
        then = _parse_block(cur)
        els = []
        if cur.at("else"):
            cur.next()
            cur.expect("{")
            els = _parse_block(cur)
        return ("if", cond, then, els)
    if tok in ("float", "int", "unsigned", "const", "local", "global"):
        return _parse_decl(cur)
    # assignment
    lvalue = _parse_lvalue(cur)
    cur.expect("=")
    value = _parse_expr(cur)
    cur.expect(";")
    return ("assign", lvalue, value)


def _parse_decl(cur: _Cursor):
    while cur.peek() in ("const", "local", "global"):
        cur.next()
    ctype = cur.next()
    if ctype == "unsigned":
        cur.next()
        ctype = "int"
    is_ptr = False
    while cur.at("*"):
        cur.next()
        is_ptr = True
    name = cur.next()
    size = None
    if cur.at("["):
        cur.next()
        size = _parse_expr(cur)
        cur.expect("]")
    init = None
    if cur.at("="):
        cur.next()
        init = _parse_expr(cur)
    cur.expect(";")
    kind = "ptr" if is_ptr else ctype
    out = ("decl", kind, name, size, init)
    # `float a[4]; float b[4];` style: multiple decls share a line only via
    # separate statements, which the grammar above already handles
    return out


def _parse_lvalue(cur: _Cursor):
    if cur.at("*"):
        cur.next()
        return ("deref", cur.next())
    name = cur.next()
    if cur.at("["):
        cur.next()
        index = _parse_expr(cur)
        cur.expect("]")
        return ("index", name, index)
    return ("var", name)


def _parse_expr(cur):
    return _parse_ternary(cur)


def _parse_ternary(cur):
    cond = _parse_binary(cur, 0)
    if cur.at("?"):
        cur.next()
        a = _parse_expr(cur)
        cur.expect(":")
        b = _parse_expr(cur)
        return ("?:", cond, a, b)
    return cond


_BIN_LEVELS = [
    ("||",),
    ("&&",),
    ("|",),
    ("^",),
    ("&",),
    ("==", "!="),
    ("<", "<=", ">", ">="),
    ("+", "-"),
    ("*", "/", "%"),
]


def _parse_binary(cur, level):
    if level == len(_BIN_LEVELS):
        return _parse_unary(cur)
    lhs = _parse_binary(cur, level + 1)
    while cur.peek() in _BIN_LEVELS[level]:
        op = cur.next()
        rhs = _parse_binary(cur, level + 1)
        lhs = (op, lhs, rhs)
    return lhs


def _parse_unary(cur):
    if cur.at("-"):
        cur.next()
        return ("neg", _parse_unary(cur))
    if cur.at("!"):
        cur.next()
        return ("not", _parse_unary(cur))
    return _parse_postfix(cur)


def _parse_postfix(cur):
    atom = _parse_primary(cur)
    while True:
        if cur.at("("):
            cur.next()
            args = []
            while not cur.at(")"):
                args.append(_parse_expr(cur))
                if cur.at(","):
                    cur.next()
            cur.expect(")")
            atom = ("call", atom, args)
        elif cur.at("["):
            cur.next()
            index = _parse_expr(cur)
            cur.expect("]")
            atom = ("index", atom, index)
        else:
            return atom


def _parse_primary(cur):
    tok = cur.next()
    if tok == "(":
        out = _parse_expr(cur)
        cur.expect(")")
        return out
    if re.fullmatch(r"\d+\.\d+f?", tok):
        return ("fconst", np.float32(tok.rstrip("f")))
    if re.fullmatch(r"\d+", tok):
        return ("iconst", int(tok))
    return ("name", tok)


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class Pointer:
    backing: list
    offset: int = 0


def _truthy(v):
    return bool(int(v)) if not isinstance(v, np.float32) else bool(v)


def _c_int_div(a, b):
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _eval(expr, env):
    kind = expr[0]
    if kind == "iconst" or kind == "fconst":
        return expr[1]
    if kind == "name":
        name = expr[1]
        if name not in env:
            raise InterpreterError(f"unbound name {name!r} in generated code")
        return env[name]
    if kind == "call":
        fn = expr[1]
        if fn[0] != "name":
            raise InterpreterError("indirect calls are not part of the subset")
        fname = fn[1]
        args = [_eval(a, env) for a in expr[2]]
        if fname in _INTRINSICS:
            return _INTRINSICS[fname]
        if fname == "ipow":
            return int(args[0]) ** int(args[1])
        raise InterpreterError(f"unknown function {fname!r} in generated code")
    if kind == "index":
        base = _eval(expr[1], env)
        index = int(_eval(expr[2], env))
        if isinstance(base, Pointer):
            cell = base.offset + index
            if not 0 <= cell < len(base.backing):
                raise InterpreterError("generated code read out of bounds")
            return base.backing[cell]
        if isinstance(base, list):
            return base[index]
        raise InterpreterError("indexing a non-array value")
    if kind == "?:":
        return _eval(expr[2] if _truthy(_eval(expr[1], env)) else expr[3], env)
    if kind == "neg":
        return -_eval(expr[1], env)
    if kind == "not":
        return int(not _truthy(_eval(expr[1], env)))
    op, lhs_e, rhs_e = expr
    a = _eval(lhs_e, env)
    if op == "&&":
        return int(_truthy(a) and _truthy(_eval(rhs_e, env)))
    if op == "||":
        return int(_truthy(a) or _truthy(_eval(rhs_e, env)))
    b = _eval(rhs_e, env)
    if op in ("==", "!=", "<", "<=", ">", ">="):
        result = {
            "==": a == b,
            "!=": a != b,
            "<": a < b,
            "<=": a <= b,
            ">": a > b,
            ">=": a >= b,
        }[op]
        return int(result)
    is_float = isinstance(a, np.float32) or isinstance(b, np.float32)
    if is_float:
        a, b = np.float32(a), np.float32(b)
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return a / b
        raise InterpreterError(f"float operator {op!r} is not in the subset")
    a, b = int(a), int(b)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return _c_int_div(a, b)
    if op == "%":
        return a - _c_int_div(a, b) * b
    if op == "^":
        return a ^ b
    if op == "|":
        return a | b
    if op == "&":
        return a & b
    raise InterpreterError(f"unknown operator {op!r}")


def _exec_block(stmts, env):
    for stmt in stmts:
        _exec_stmt(stmt, env)


def _exec_stmt(stmt, env):
    kind = stmt[0]
    if kind == "decl":
        _, ctype, name, size, init = stmt
        if size is not None:
            n = int(_eval(size, env))
            zero = np.float32(0) if ctype == "float" else 0
            env[name] = Pointer([zero] * n, 0)
        elif init is not None:
            value = _eval(init, env)
            env[name] = np.float32(value) if ctype == "float" and not isinstance(value, Pointer) else value
        else:
            env[name] = np.float32(0) if ctype == "float" else 0
        return
    if kind == "assign":
        _, lvalue, rhs = stmt
        value = _eval(rhs, env)
        _store(lvalue, value, env)
        return
    if kind == "for":
        _, name, init, bound, step, body = stmt
        env[name] = int(_eval(init, env))
        while env[name] < int(_eval(bound, env)):
            _exec_block(body, env)
            env[name] = env[name] + int(_eval(step, env))
        return
    if kind == "if":
        _, cond, then, els = stmt
        _exec_block(then if _truthy(_eval(cond, env)) else els, env)
        return
    raise InterpreterError(f"unknown statement {kind!r}")


def _store(lvalue, value, env):
    kind = lvalue[0]
    if kind == "var":
        name = lvalue[1]
        current = env.get(name)
        if isinstance(current, np.float32) and not isinstance(value, Pointer):
            value = np.float32(value)
        env[name] = value
        return
    if kind == "deref":
        ptr = env[lvalue[1]]
        if not isinstance(ptr, Pointer):
            raise InterpreterError("dereferencing a non-pointer")
        ptr.backing[ptr.offset] = _coerce_like(ptr.backing, value)
        return
    if kind == "index":
        base = env[lvalue[1]]
        index = int(_eval(lvalue[2], env))
        if isinstance(base, Pointer):
            cell = base.offset + index
            if not 0 <= cell < len(base.backing):
                raise InterpreterError("generated code wrote out of bounds")
            base.backing[cell] = _coerce_like(base.backing, value)
            return
        raise InterpreterError("indexed write to a non-pointer")
    raise InterpreterError(f"unknown lvalue {kind!r}")


def _coerce_like(backing, value):
    if backing and isinstance(backing[0], np.float32):
        return np.float32(value)
    return value


def execute_kernel(source: str, arguments: dict):
    """Run the (single) kernel in `source` with arguments keyed by parameter
    name.  Array arguments are flat Python lists, mutated in place."""
    kernel = parse_kernel(source)
    env = {}
    for name, kind in kernel.params:
        if name not in arguments:
            raise InterpreterError(f"missing kernel argument {name!r}")
        value = arguments[name]
        if kind == "ptr":
            if not isinstance(value, list):
                raise InterpreterError(f"argument {name!r} must be a list")
            env[name] = Pointer(value, 0)
        elif kind == "float":
            env[name] = np.float32(value)
        else:
            env[name] = int(value)
    _exec_block(kernel.body, env)


# ---------------------------------------------------------------------------
# convenience harness for translated units


def flatten_value(value, dtype):
    if isinstance(dtype, ArrayType):
        out = []
        for v in value:
            out.extend(flatten_value(v, dtype.elem))
        return out
    if isinstance(dtype, TupleType):
        raise InterpreterError("tuple-typed kernel data has no flat layout")
    return [value]


def unflatten_value(flat, dtype, nat_env, offset=0):
    if isinstance(dtype, ArrayType):
        size = nat.evaluate(dtype.size, nat_env)
        out = []
        for _ in range(size):
            value, offset = unflatten_value(flat, dtype.elem, nat_env, offset)
            out.append(value)
        return out, offset
    return flat[offset], offset + 1


def run_emitted(code: str, unit, nat_assignment: dict, inputs) -> object:
    """Execute emitted code for a translated unit and return its output in
    the interpreter's nested-value form."""
    nat_env = dict(nat_assignment)
    out_size = 1
    dtype = unit.output_type
    while isinstance(dtype, ArrayType):
        out_size *= nat.evaluate(dtype.size, nat_env)
        dtype = dtype.elem
    if not isinstance(dtype, ScalarType):
        raise InterpreterError("kernel outputs must flatten to scalars")
    zero = np.float32(0) if dtype.name == "f32" else 0
    out_flat = [zero] * out_size
    args = {unit.output.name: out_flat}
    for name in unit.nat_params:
        if name not in nat_env:
            raise InterpreterError(f"missing size argument {name!r}")
        args[name] = nat_env[name]
    for (var, vdtype), raw in zip(unit.inputs, inputs):
        value = convert_input(raw, vdtype)
        if isinstance(vdtype, ScalarType):
            args[var.name] = value
        else:
            args[var.name] = flatten_value(value, vdtype)
    execute_kernel(code, args)
    value, _ = unflatten_value(out_flat, unit.output_type, nat_env)
    return value
