"""Reference semantics for both IRs.

The functional evaluator runs typed source programs with every map
sequential; the store-based evaluator runs imperative phrases produced by
translation.  Together they are the oracle for rewrite soundness,
translation soundness, and code generation.

Scalar floats are IEEE single precision throughout (numpy float32), so the
interpreters and emitted C agree bit-for-bit on add/multiply chains.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nat
from .errors import InterpreterError, RaceViolation
from .expr import Apply, DepApply, DepLambda, Expr, Identifier, Lambda, Literal, Primitive
from .types import (
    BOOL,
    F32,
    I32,
    ArrayType,
    DataType,
    IndexType,
    ScalarType,
    TupleType,
)

# ---------------------------------------------------------------------------
# values


@dataclass
class Closure:
    param: Identifier
    body: Expr
    env: dict


@dataclass
class DepClosure:
    param: str
    body: Expr
    env: dict
    nat_env: dict


@dataclass
class PartialPrim:
    name: str
    deps: list
    args: list


_PRIM_ARITY = {
    "map": 2,
    "mapSeq": 2,
    "mapGlobal": 2,
    "mapWorkGroup": 2,
    "mapLocal": 2,
    "reduce": 3,
    "reduceSeq": 3,
    "reduceSeqIn": 3,
    "zip": 2,
    "fst": 1,
    "snd": 1,
    "split": 1,
    "join": 1,
    "toMem": 1,
    "iterate": 2,
    "add": 2,
    "sub": 2,
    "mul": 2,
    "id": 1,
}


def eval_expr(e: Expr, env, nat_env):
    if isinstance(e, Identifier):
        if e.uid not in env:
            raise InterpreterError(f"unbound identifier {e.name!r} at run time")
        return env[e.uid]
    if isinstance(e, Literal):
        if isinstance(e.value, bool):
            return e.value
        if isinstance(e.value, float):
            return np.float32(e.value)
        return e.value
    if isinstance(e, Lambda):
        return Closure(e.param, e.body, env)
    if isinstance(e, DepLambda):
        return DepClosure(e.param, e.body, env, nat_env)
    if isinstance(e, Primitive):
        return PartialPrim(e.name, [], [])
    if isinstance(e, Apply):
        f = eval_expr(e.fn, env, nat_env)
        a = eval_expr(e.arg, env, nat_env)
        return apply_value(f, a, nat_env)
    if isinstance(e, DepApply):
        f = eval_expr(e.fn, env, nat_env)
        arg = e.arg
        if isinstance(arg, nat.Nat):
            arg = nat.evaluate(arg, nat_env)
        return apply_dep(f, arg, nat_env)
    raise InterpreterError(f"cannot evaluate {e!r}")


def apply_value(f, a, nat_env):
    if isinstance(f, Closure):
        return eval_expr(f.body, {**f.env, f.param.uid: a}, nat_env)
    if isinstance(f, PartialPrim):
        args = f.args + [a]
        if len(args) == _PRIM_ARITY[f.name]:
            return _exec_prim(f.name, f.deps, args, nat_env)
        return PartialPrim(f.name, f.deps, args)
    raise InterpreterError(f"cannot apply non-function value {f!r}")


def apply_dep(f, x, nat_env):
    if isinstance(f, DepClosure):
        return eval_expr(f.body, f.env, {**f.nat_env, f.param: x})
    if isinstance(f, PartialPrim):
        return PartialPrim(f.name, f.deps + [x], f.args)
    raise InterpreterError(f"cannot apply non-function value {f!r}")


def _exec_prim(name, deps, args, nat_env):
    if name in ("map", "mapSeq", "mapGlobal", "mapWorkGroup", "mapLocal"):
        f, xs = args
        return [apply_value(f, v, nat_env) for v in xs]
    if name in ("reduce", "reduceSeq", "reduceSeqIn"):
        op, acc, xs = args
        for v in xs:
            acc = apply_value(apply_value(op, acc, nat_env), v, nat_env)
        return acc
    if name == "zip":
        a, b = args
        if len(a) != len(b):
            raise InterpreterError("zip of arrays with different lengths")
        return [(x, y) for x, y in zip(a, b)]
    if name == "fst":
        return args[0][0]
    if name == "snd":
        return args[0][1]
    if name == "split":
        (s,) = deps
        (xs,) = args
        if s <= 0 or len(xs) % s:
            raise InterpreterError(f"cannot split array of length {len(xs)} by {s}")
        return [xs[i * s : (i + 1) * s] for i in range(len(xs) // s)]
    if name == "join":
        (xs,) = args
        return [v for chunk in xs for v in chunk]
    if name == "toMem":
        return args[0]
    if name == "id":
        return args[0]
    if name in ("add", "sub", "mul"):
        a, b = args
        if isinstance(a, np.float32) or isinstance(b, np.float32):
            a, b = np.float32(a), np.float32(b)
        if name == "add":
            return a + b
        if name == "sub":
            return a - b
        return a * b
    if name == "iterate":
        (k,) = deps
        f, xs = args
        if k < 1:
            raise InterpreterError("iterate needs at least one step")
        step = _iterate_shrink_factor(f, nat_env)
        current = xs
        for _ in range(k):
            if len(current) % step:
                raise InterpreterError("iterate input length is not divisible")
            l_val = len(current) // step
            current = apply_value(apply_dep(f, l_val, nat_env), current, nat_env)
            if len(current) != l_val:
                raise InterpreterError("iterate body returned the wrong length")
        return current
    raise InterpreterError(f"no denotation for primitive {name!r}")


def _iterate_shrink_factor(f, nat_env):
    """How much each iteration shrinks the array, from the body's type."""
    if not isinstance(f, DepClosure) or not isinstance(f.body, Lambda):
        raise InterpreterError("iterate body must be a size-indexed function")
    param_t = f.body.param.type
    if not isinstance(param_t, ArrayType):
        raise InterpreterError("iterate body must take an array")
    return nat.evaluate(param_t.size, {**nat_env, f.param: 1})


# ---------------------------------------------------------------------------
# running whole programs


def convert_input(raw, dtype: DataType):
    if isinstance(dtype, ScalarType):
        if dtype == F32:
            return np.float32(raw)
        if dtype == I32:
            if isinstance(raw, bool) or not isinstance(raw, (int, float)):
                raise InterpreterError(f"expected an integer, got {raw!r}")
            return int(raw)
        if dtype == BOOL:
            return bool(raw)
    if isinstance(dtype, IndexType):
        return int(raw)
    if isinstance(dtype, ArrayType):
        if not isinstance(raw, (list, tuple)):
            raise InterpreterError(f"expected a list, got {raw!r}")
        return [convert_input(v, dtype.elem) for v in raw]
    if isinstance(dtype, TupleType):
        fst, snd = raw
        return (convert_input(fst, dtype.fst), convert_input(snd, dtype.snd))
    raise InterpreterError(f"cannot build a value of type {dtype!r}")


def check_length(value, dtype: DataType, nat_env):
    if isinstance(dtype, ArrayType):
        want = nat.evaluate(dtype.size, nat_env)
        if len(value) != want:
            raise InterpreterError(
                f"input length {len(value)} does not match {want}"
            )
        for v in value:
            check_length(v, dtype.elem, nat_env)
    if isinstance(dtype, TupleType):
        check_length(value[0], dtype.fst, nat_env)
        check_length(value[1], dtype.snd, nat_env)


def eval_program(e: Expr, nat_assignment: dict, inputs):
    """Evaluate a typed program: dependent binders take their sizes from
    `nat_assignment`, value binders consume `inputs` in order."""
    nat_env = dict(nat_assignment)
    env = {}
    inputs = list(inputs)
    while True:
        if isinstance(e, DepLambda):
            if e.param not in nat_env:
                raise InterpreterError(f"no size given for {e.param!r}")
            e = e.body
        elif isinstance(e, Lambda):
            if not inputs:
                raise InterpreterError(f"missing input for parameter {e.param.name!r}")
            value = convert_input(inputs.pop(0), e.param.type)
            check_length(value, e.param.type, nat_env)
            env[e.param.uid] = value
            e = e.body
        else:
            break
    if inputs:
        raise InterpreterError(f"{len(inputs)} unused inputs")
    return eval_expr(e, env, nat_env)


def to_plain(value):
    """Convert an interpreter value to plain JSON-friendly data."""
    if isinstance(value, np.float32):
        return float(value)
    if isinstance(value, list):
        return [to_plain(v) for v in value]
    if isinstance(value, tuple):
        return [to_plain(value[0]), to_plain(value[1])]
    return value


def ulp_distance(a, b) -> int:
    """Units-in-last-place distance between two float32 values."""
    ia = int(np.float32(a).view(np.int32))
    ib = int(np.float32(b).view(np.int32))
    if ia < 0:
        ia = -(2**31) - ia
    if ib < 0:
        ib = -(2**31) - ib
    return abs(ia - ib)


def values_close(a, b, ulp=4) -> bool:
    """Exact equality for integer/bool data, ULP tolerance for f32 chains."""
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(values_close(x, y, ulp) for x, y in zip(a, b))
    if isinstance(a, tuple) and isinstance(b, tuple):
        return values_close(a[0], b[0], ulp) and values_close(a[1], b[1], ulp)
    if isinstance(a, np.float32) or isinstance(b, np.float32):
        return ulp_distance(a, b) <= ulp
    return a == b


# ---------------------------------------------------------------------------
# store-based evaluation of imperative phrases

from . import dpia as _d  # noqa: E402


class Store:
    """Addressable allocations holding nested mutable values.

    Acceptor values resolve to (allocation, index path) pairs; strict mode
    checks that no two writes inside one parallel for hit the same cell of a
    pre-existing allocation.
    """

    def __init__(self, strict=False):
        self.cells = {}
        self.strict = strict
        self._next = 0
        self._frames = []

    def alloc(self, initial):
        self._next += 1
        self.cells[self._next] = [initial]
        return self._next

    def read(self, alloc, path=()):
        value = self.cells[alloc][0]
        for p in path:
            value = value[p]
        return value

    def write(self, alloc, path, value):
        if self.strict:
            for pre_existing, writes in self._frames:
                if alloc in pre_existing:
                    key = (alloc, path)
                    if key in writes:
                        raise RaceViolation(
                            f"two iterations of a parallel for wrote to the "
                            f"same cell (allocation {alloc}, path {path})"
                        )
                    writes.add(key)
        if not path:
            self.cells[alloc][0] = value
            return
        target = self.cells[alloc][0]
        for p in path[:-1]:
            target = target[p]
        target[path[-1]] = value

    def par_frame(self):
        return _ParFrame(self)


class _ParFrame:
    def __init__(self, store):
        self.store = store

    def __enter__(self):
        self.store._frames.append((set(self.store.cells), set()))

    def __exit__(self, *exc):
        self.store._frames.pop()
        return False


class Acceptor:
    """A write destination: an allocation plus an index-path transformer."""

    def __init__(self, alloc, path_fn=None):
        self.alloc = alloc
        self.path_fn = path_fn or (lambda tail: tail)

    def resolve(self, store):
        return self

    def child(self, index):
        return Acceptor(self.alloc, lambda tail: self.path_fn((index,) + tail))

    def via(self, transform):
        return Acceptor(self.alloc, lambda tail: self.path_fn(transform(tail)))


class DoubleBufferState:
    def __init__(self, input_value, buf1, buf2, out_acc, store, single_step):
        self.input_value = input_value
        self.buf1 = buf1
        self.buf2 = buf2
        self.real_out = out_acc
        self.flag = 1
        self.reading = ("value", input_value)
        self.writing = ("alloc", buf1)
        self.store = store

    def current_in(self, store):
        kind, ref = self.reading
        return ref if kind == "value" else store.read(ref)

    def current_out(self):
        kind, ref = self.writing
        return ref if kind == "acc" else Acceptor(ref)

    def swap(self):
        self.reading = ("alloc", self.buf1 if self.flag else self.buf2)
        self.writing = ("alloc", self.buf2 if self.flag else self.buf1)
        self.flag ^= 1

    def done(self):
        self.reading = ("alloc", self.buf1 if self.flag else self.buf2)
        self.writing = ("acc", self.real_out)


class DBIn:
    def __init__(self, state):
        self.state = state


class DBOut:
    def __init__(self, state):
        self.state = state

    def resolve(self, store):
        return self.state.current_out()


class RunnableComm:
    def __init__(self, fn):
        self.fn = fn


def _default_value(dtype, nat_env):
    if isinstance(dtype, ArrayType):
        size = nat.evaluate(dtype.size, nat_env)
        return [_default_value(dtype.elem, nat_env) for _ in range(size)]
    if isinstance(dtype, TupleType):
        return [_default_value(dtype.fst, nat_env), _default_value(dtype.snd, nat_env)]
    return None


def _write_value(store, acc, dtype, value, nat_env):
    acc = acc.resolve(store)
    if isinstance(dtype, ArrayType):
        size = nat.evaluate(dtype.size, nat_env)
        if len(value) != size:
            raise InterpreterError("array write with the wrong length")
        for j in range(size):
            _write_value(store, acc.child(j), dtype.elem, value[j], nat_env)
        return
    if isinstance(dtype, TupleType):
        _write_value(store, acc.child(0), dtype.fst, value[0], nat_env)
        _write_value(store, acc.child(1), dtype.snd, value[1], nat_env)
        return
    store.write(acc.alloc, acc.path_fn(()), value)


def eval_exp_phrase(p, env, store, nat_env):
    """Evaluate an expression phrase to a value (views materialize)."""
    if isinstance(p, _d.PhraseVar):
        if p.uid not in env:
            raise InterpreterError(f"unbound phrase variable {p.name!r}")
        value = env[p.uid]
        return _deref(value, store)
    if isinstance(p, _d.PhraseLiteral):
        if isinstance(p.value, bool):
            return p.value
        if isinstance(p.value, float):
            return np.float32(p.value)
        return p.value
    if isinstance(p, _d.PhraseProj):
        bound = _proj_component(env, p)
        if bound is not None:
            return _deref(bound, store)
        pair = eval_exp_phrase(p.pair, env, store, nat_env)
        return _deref(pair[0] if p.index == 1 else pair[1], store)
    if isinstance(p, _d.PhraseApply) and isinstance(p.fn, _d.PhraseLambda):
        arg = eval_exp_phrase(p.arg, env, store, nat_env)
        return eval_exp_phrase(p.fn.body, {**env, p.fn.param.uid: arg}, store, nat_env)
    if isinstance(p, _d.FunPrim):
        return _eval_fun_prim(p, env, store, nat_env)
    raise InterpreterError(f"cannot evaluate phrase {p!r}")


def _deref(value, store):
    if isinstance(value, _AllocRef):
        return store.read(value.alloc)
    if isinstance(value, DBIn):
        return value.state.current_in(store)
    return value


class _AllocRef:
    def __init__(self, alloc):
        self.alloc = alloc


def _eval_fun_prim(p, env, store, nat_env):
    args = p.args
    tag = p.tag
    if tag == "idx":
        i = eval_exp_phrase(args[0], env, store, nat_env)
        arr = eval_exp_phrase(args[1], env, store, nat_env)
        if not 0 <= i < len(arr):
            raise InterpreterError(f"index {i} out of bounds for length {len(arr)}")
        return arr[i]
    if tag == "zip":
        a = eval_exp_phrase(args[0], env, store, nat_env)
        b = eval_exp_phrase(args[1], env, store, nat_env)
        if len(a) != len(b):
            raise InterpreterError("zip of arrays with different lengths")
        return [(x, y) for x, y in zip(a, b)]
    if tag == "fst":
        return eval_exp_phrase(args[0], env, store, nat_env)[0]
    if tag == "snd":
        return eval_exp_phrase(args[0], env, store, nat_env)[1]
    if tag == "split":
        n = nat.evaluate(p.type_args[0], nat_env)
        xs = eval_exp_phrase(args[0], env, store, nat_env)
        return [xs[c * n : (c + 1) * n] for c in range(len(xs) // n)]
    if tag == "join":
        xs = eval_exp_phrase(args[0], env, store, nat_env)
        return [v for chunk in xs for v in chunk]
    if tag == "take":
        want = nat.evaluate(p.type_args[0], nat_env)
        xs = eval_exp_phrase(args[0], env, store, nat_env)
        return xs[:want]
    if tag in ("add", "sub", "mul"):
        a = eval_exp_phrase(args[0], env, store, nat_env)
        b = eval_exp_phrase(args[1], env, store, nat_env)
        if isinstance(a, np.float32) or isinstance(b, np.float32):
            a, b = np.float32(a), np.float32(b)
        return a + b if tag == "add" else (a - b if tag == "sub" else a * b)
    raise InterpreterError(f"cannot evaluate primitive {tag!r} as a value")


def eval_acc_phrase(p, env, store, nat_env):
    """Evaluate an acceptor phrase to an Acceptor."""
    if isinstance(p, _d.PhraseVar):
        value = env.get(p.uid)
        if value is None:
            raise InterpreterError(f"unbound acceptor {p.name!r}")
        return value
    if isinstance(p, _d.PhraseProj):
        bound = _proj_component(env, p)
        if bound is None:
            raise InterpreterError("acceptor projection from an unbound pair")
        return bound
    if isinstance(p, _d.ImpPrim):
        tag = p.tag
        if tag == "idxAcc":
            i = eval_exp_phrase(p.args[0], env, store, nat_env)
            base = eval_acc_phrase(p.args[1], env, store, nat_env).resolve(store)
            return base.child(i)
        if tag == "joinAcc":
            m = nat.evaluate(p.type_args[1], nat_env)
            base = eval_acc_phrase(p.args[0], env, store, nat_env).resolve(store)
            return base.via(lambda tail: (tail[0] * m + tail[1],) + tail[2:])
        if tag == "splitAcc":
            n = nat.evaluate(p.type_args[0], nat_env)
            base = eval_acc_phrase(p.args[0], env, store, nat_env).resolve(store)
            return base.via(lambda tail: (tail[0] // n, tail[0] % n) + tail[1:])
        if tag == "zipAcc1":
            base = eval_acc_phrase(p.args[0], env, store, nat_env).resolve(store)
            return base.via(lambda tail: (tail[0], 0) + tail[1:])
        if tag == "zipAcc2":
            base = eval_acc_phrase(p.args[0], env, store, nat_env).resolve(store)
            return base.via(lambda tail: (tail[0], 1) + tail[1:])
        if tag == "takeAcc":
            return eval_acc_phrase(p.args[0], env, store, nat_env).resolve(store)
    raise InterpreterError(f"cannot evaluate acceptor {p!r}")


def exec_comm(p, env, store, nat_env):
    """Execute a command phrase against the store."""
    if isinstance(p, _d.PhraseVar):
        value = env.get(p.uid)
        if isinstance(value, RunnableComm):
            value.fn()
            return
        raise InterpreterError(f"variable {p.name!r} is not a command")
    if isinstance(p, _d.PhraseProj):
        value = _proj_component(env, p)
        if isinstance(value, RunnableComm):
            value.fn()
            return
        raise InterpreterError("projection is not a command")
    if not isinstance(p, _d.ImpPrim):
        raise InterpreterError(f"cannot execute {p!r}")
    tag = p.tag
    if tag == "assign":
        dtype = p.type_args[0]
        acc = eval_acc_phrase(p.args[0], env, store, nat_env)
        value = eval_exp_phrase(p.args[1], env, store, nat_env)
        _write_value(store, acc, dtype, value, nat_env)
        return
    if tag == "seq":
        exec_comm(p.args[0], env, store, nat_env)
        exec_comm(p.args[1], env, store, nat_env)
        return
    if tag == "new":
        space, dtype = p.type_args
        body = p.args[0]
        alloc = store.alloc(_default_value(dtype, nat_env))
        pair = (_AllocRef(alloc), Acceptor(alloc))
        exec_comm(body.body, {**env, body.param.uid: pair}, store, nat_env)
        return
    if tag == "for":
        bound = nat.evaluate(p.type_args[0], nat_env)
        body = p.args[0]
        for i in range(bound):
            # loop indices may appear in size expressions of the body
            inner_nats = {**nat_env, body.param.name: i}
            exec_comm(body.body, {**env, body.param.uid: i}, store, inner_nats)
        return
    if tag in ("parForWorkGroup", "parForLocal", "parForGlobal"):
        bound = nat.evaluate(p.type_args[0], nat_env)
        out = eval_acc_phrase(p.args[0], env, store, nat_env).resolve(store)
        body = p.args[1]
        inner = body.body
        with store.par_frame():
            for i in range(bound):
                frame_env = {**env, body.param.uid: i, inner.param.uid: out.child(i)}
                inner_nats = {**nat_env, body.param.name: i}
                exec_comm(inner.body, frame_env, store, inner_nats)
        return
    if tag == "ifLess":
        threshold = nat.evaluate(p.type_args[1], nat_env)
        i = eval_exp_phrase(p.args[0], env, store, nat_env)
        exec_comm(p.args[1] if i < threshold else p.args[2], env, store, nat_env)
        return
    if tag == "newDoubleBuffer":
        dtype, buf_size_n, _out_len, _in_len = p.type_args
        input_p, output_p, body = p.args
        buf_elem = ArrayType(buf_size_n, dtype)
        input_value = eval_exp_phrase(input_p, env, store, nat_env)
        out_acc = eval_acc_phrase(output_p, env, store, nat_env).resolve(store)
        buf1 = store.alloc(_default_value(buf_elem, nat_env))
        buf2 = store.alloc(_default_value(buf_elem, nat_env))
        state = DoubleBufferState(input_value, buf1, buf2, out_acc, store, False)
        # components nest like the pair type: ((acc x exp) x swap) x done
        components = (
            ((DBOut(state), DBIn(state)), RunnableComm(state.swap)),
            RunnableComm(state.done),
        )
        exec_comm(body.body, {**env, body.param.uid: components}, store, nat_env)
        return
    raise InterpreterError(f"cannot execute primitive {tag!r}")


def _proj_component(env, p):
    # left-nested pair components bound as a flat tuple in the environment
    path = []
    q = p
    while isinstance(q, _d.PhraseProj):
        path.append(q.index)
        q = q.pair
    if not isinstance(q, _d.PhraseVar) or q.uid not in env:
        return None
    value = env[q.uid]
    for index in reversed(path):
        if not isinstance(value, tuple):
            return None
        value = value[0] if index == 1 else value[1]
    return value


def run_unit(unit, nat_assignment, inputs, strict=True):
    """Execute a translated unit: allocate the output, bind the inputs, run
    the body, read the result back."""
    store = Store(strict=strict)
    nat_env = dict(nat_assignment)
    env = {}
    raw_inputs = list(inputs)
    if len(raw_inputs) != len(unit.inputs):
        raise InterpreterError(
            f"expected {len(unit.inputs)} inputs, got {len(raw_inputs)}"
        )
    for (var, dtype), raw in zip(unit.inputs, raw_inputs):
        value = convert_input(raw, dtype)
        check_length(value, dtype, nat_env)
        env[var.uid] = value
    out_alloc = store.alloc(_default_value(unit.output_type, nat_env))
    env[unit.output.uid] = Acceptor(out_alloc)
    exec_comm(unit.body, env, store, nat_env)
    result = store.read(out_alloc)
    _ensure_written(result)
    return result


def _ensure_written(value):
    if value is None:
        raise InterpreterError("the kernel left part of its output unwritten")
    if isinstance(value, list):
        for v in value:
            _ensure_written(v)
