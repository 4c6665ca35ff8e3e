"""Type inference with implicit type-level arguments.

Primitives carry schemes whose implicit binders are solved by unification.
Structural constraints unify eagerly; size constraints normalize to a
polynomial and are solved by single-variable linear solving.  Anything
harder is an error, never a silent assumption — except where a rewrite has
recorded a divisibility assumption, which the solver may consult.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import nat
from .errors import InferenceError, KindError, StorageError
from .expr import (
    Apply,
    DepApply,
    DepLambda,
    Expr,
    Identifier,
    Lambda,
    Literal,
    Primitive,
    with_type,
)
from .types import (
    BOOL,
    F32,
    I32,
    AddressSpace,
    ArrayType,
    DataType,
    DataTypeVar,
    DepFunType,
    FunType,
    IndexType,
    Kind,
    ScalarType,
    TupleType,
    Type,
    TypeIdentifier,
    contains_fun_type,
    substitute_type,
    type_to_text,
)


def _is_meta(name: str) -> bool:
    return name.startswith("?")


@dataclass
class InferState:
    registry: object
    assumptions: tuple = ()
    tysubst: dict = field(default_factory=dict)
    natsubst: dict = field(default_factory=dict)
    free_sizes: dict = field(default_factory=dict)  # ordered set of free size names
    counter: int = 0

    def fresh(self, prefix) -> str:
        self.counter += 1
        return f"?{prefix}{self.counter}"

    def fresh_general(self) -> Type:
        return TypeIdentifier(self.fresh("t"))

    def fresh_data(self) -> DataType:
        return DataTypeVar(self.fresh("d"))

    def fresh_nat(self) -> nat.Nat:
        return nat.Var(self.fresh("n"))

    # -- substitution ------------------------------------------------------

    def zonk_nat(self, n: nat.Nat) -> nat.Nat:
        for _ in range(10_000):
            fv = [v for v in nat.free_vars(n) if _is_meta(v) and v in self.natsubst]
            if not fv:
                break
            n = nat.substitute(n, {v: self.natsubst[v] for v in fv})
        return nat.normalize(n, self.assumptions)

    def zonk(self, t: Type) -> Type:
        if isinstance(t, (TypeIdentifier, DataTypeVar)) and _is_meta(t.name):
            if t.name in self.tysubst:
                return self.zonk(self.tysubst[t.name])
            return t
        if isinstance(t, ScalarType):
            return t
        if isinstance(t, IndexType):
            return IndexType(self.zonk_nat(t.size))
        if isinstance(t, ArrayType):
            elem = self.zonk(t.elem)
            if not isinstance(elem, DataType):
                raise StorageError(f"array element is not storable: {type_to_text(elem)}")
            return ArrayType(self.zonk_nat(t.size), elem)
        if isinstance(t, TupleType):
            fst, snd = self.zonk(t.fst), self.zonk(t.snd)
            if not isinstance(fst, DataType) or not isinstance(snd, DataType):
                raise StorageError("tuple component is not storable")
            return TupleType(fst, snd)
        if isinstance(t, FunType):
            return FunType(self.zonk(t.inp), self.zonk(t.out))
        if isinstance(t, DepFunType):
            return DepFunType(t.kind, t.param, self.zonk(t.body), t.implicit)
        return t

    # -- unification -------------------------------------------------------

    def unify(self, a: Type, b: Type, loc=None):
        a, b = self.zonk(a), self.zonk(b)
        if a == b:
            return
        if isinstance(a, TypeIdentifier) and _is_meta(a.name):
            self._bind_general(a.name, b, loc)
            return
        if isinstance(b, TypeIdentifier) and _is_meta(b.name):
            self._bind_general(b.name, a, loc)
            return
        if isinstance(a, DataTypeVar) and _is_meta(a.name):
            self._bind_data(a.name, b, loc)
            return
        if isinstance(b, DataTypeVar) and _is_meta(b.name):
            self._bind_data(b.name, a, loc)
            return
        if isinstance(a, ScalarType) and isinstance(b, ScalarType) and a.name == b.name:
            return
        if isinstance(a, IndexType) and isinstance(b, IndexType):
            self.unify_nat(a.size, b.size, loc)
            return
        if isinstance(a, ArrayType) and isinstance(b, ArrayType):
            self.unify_nat(a.size, b.size, loc)
            self.unify(a.elem, b.elem, loc)
            return
        if isinstance(a, TupleType) and isinstance(b, TupleType):
            self.unify(a.fst, b.fst, loc)
            self.unify(a.snd, b.snd, loc)
            return
        if isinstance(a, FunType) and isinstance(b, FunType):
            self.unify(a.inp, b.inp, loc)
            self.unify(a.out, b.out, loc)
            return
        if isinstance(a, DepFunType) and isinstance(b, DepFunType) and a.kind is b.kind:
            # unify bodies under a common rigid name
            fresh = self.fresh("sk")[1:]  # not a metavar
            ra = _rename_binder(a, fresh)
            rb = _rename_binder(b, fresh)
            self.unify(ra, rb, loc)
            return
        raise InferenceError(
            f"cannot unify {type_to_text(a)} with {type_to_text(b)}", loc
        )

    def _bind_general(self, name, t, loc):
        if self._occurs(name, t):
            raise InferenceError(f"infinite type for {name}", loc)
        self.tysubst[name] = t

    def _bind_data(self, name, t, loc):
        if isinstance(t, TypeIdentifier) and _is_meta(t.name):
            self.tysubst[t.name] = DataTypeVar(name)
            return
        if contains_fun_type(t) or isinstance(t, (FunType, DepFunType)):
            raise StorageError(
                f"a function type cannot be stored in memory: {type_to_text(t)}", loc
            )
        if not isinstance(t, DataType):
            raise InferenceError(f"expected a data type, found {type_to_text(t)}", loc)
        if self._occurs(name, t):
            raise InferenceError(f"infinite type for {name}", loc)
        self.tysubst[name] = t

    def _occurs(self, name, t):
        if isinstance(t, (TypeIdentifier, DataTypeVar)):
            return t.name == name
        if isinstance(t, ArrayType):
            return self._occurs(name, t.elem)
        if isinstance(t, TupleType):
            return self._occurs(name, t.fst) or self._occurs(name, t.snd)
        if isinstance(t, FunType):
            return self._occurs(name, t.inp) or self._occurs(name, t.out)
        if isinstance(t, DepFunType):
            return self._occurs(name, t.body)
        return False

    def unify_nat(self, a: nat.Nat, b: nat.Nat, loc=None):
        a, b = self.zonk_nat(a), self.zonk_nat(b)
        if a == b:
            return
        diff = nat.Sum((a, nat.Product((nat.Const(-1), b))))
        poly = nat._to_poly(diff, frozenset())
        if not poly:
            return
        metas = sorted(
            {
                v
                for mono, _ in poly.items()
                for atom, _p in mono
                for v in nat.free_vars(atom)
                if _is_meta(v)
            }
        )
        for v in metas:
            solution = nat.solve_linear(poly, v, self.assumptions)
            if solution is not None:
                self.natsubst[v] = solution
                return
        raise InferenceError(
            f"cannot solve size constraint {nat.to_text(a)} = {nat.to_text(b)}", loc
        )

    # -- schemes -----------------------------------------------------------

    def strip_implicits(self, t: Type) -> Type:
        t = self.zonk(t)
        while isinstance(t, DepFunType) and t.implicit:
            if t.kind is Kind.NAT:
                repl = self.fresh_nat()
            elif t.kind is Kind.DATA:
                repl = self.fresh_data()
            else:
                raise InferenceError(
                    f"implicit address-space parameter {t.param!r} cannot be inferred"
                )
            t = substitute_type(t.body, t.param, repl, t.kind)
        return t


def _rename_binder(t: DepFunType, fresh: str) -> Type:
    repl = nat.Var(fresh) if t.kind is Kind.NAT else DataTypeVar(fresh)
    return substitute_type(t.body, t.param, repl, t.kind)


@dataclass
class InferenceResult:
    expr: Expr
    free_sizes: tuple  # size variables not bound by any dependent binder


def infer(
    e: Expr,
    registry=None,
    assumptions=(),
    env=None,
    tenv=None,
    expected: Type | None = None,
    free_sizes=(),
) -> InferenceResult:
    """Infer and annotate every node of `e`.

    `env` maps term binder uids to types and `tenv` type-level names to
    kinds when `e` is a subterm of a larger typed program; `expected` pins
    the result type (used when re-checking rewritten subtrees).
    """
    if registry is None:
        from .primitives import default_registry

        registry = default_registry()
    state = InferState(registry, tuple(assumptions))
    for name in free_sizes:
        state.free_sizes.setdefault(name, None)
    typed = _infer(e, state, dict(env or {}), dict(tenv or {}))
    if expected is not None:
        state.unify(typed.type, expected)
    typed = _zonk_tree(typed, state)
    _scan_unsolved(typed)
    return InferenceResult(typed, tuple(state.free_sizes))


def _infer(e, state: InferState, env, tenv) -> Expr:
    if isinstance(e, Identifier):
        if e.uid not in env:
            raise InferenceError(f"unbound identifier {e.name!r}")
        return Identifier(e.name, e.uid, env[e.uid])
    if isinstance(e, Literal):
        if isinstance(e.value, bool):
            t = BOOL
        elif isinstance(e.value, int):
            t = I32
        elif isinstance(e.value, float):
            t = F32
        else:
            raise InferenceError(f"unknown literal {e.text!r}")
        return Literal(e.text, e.value, t)
    if isinstance(e, Primitive):
        sig = state.registry.get(e.name)
        if sig is None:
            raise InferenceError(f"unknown primitive {e.name!r}")
        return Primitive(e.name, state.strip_implicits(sig.scheme))
    if isinstance(e, Lambda):
        if e.param.type is not None:
            ann = _resolve_annotation(e.param.type, state, tenv)
        else:
            ann = state.fresh_general()
        param = Identifier(e.param.name, e.param.uid, ann)
        body = _infer(e.body, state, {**env, param.uid: ann}, tenv)
        return Lambda(param, body, FunType(ann, body.type))
    if isinstance(e, DepLambda):
        body = _infer(e.body, state, env, {**tenv, e.param: e.kind})
        return DepLambda(e.kind, e.param, body, DepFunType(e.kind, e.param, body.type))
    if isinstance(e, DepApply):
        fn = _infer(e.fn, state, env, tenv)
        tf = state.strip_implicits(fn.type)
        if not isinstance(tf, DepFunType):
            raise InferenceError(
                f"dependent application of a non-dependent function: {type_to_text(tf)}"
            )
        arg = _resolve_dep_arg(e.arg, tf.kind, state, tenv)
        result = substitute_type(tf.body, tf.param, arg, tf.kind)
        return DepApply(with_type(fn, tf), arg, state.strip_implicits(result))
    if isinstance(e, Apply):
        fn = _infer(e.fn, state, env, tenv)
        tf = state.strip_implicits(fn.type)
        if isinstance(tf, DepFunType):
            # the parser cannot always tell a dependent argument from a term
            arg = _expr_to_dep_arg(e.arg, tf.kind, state, tenv)
            result = substitute_type(tf.body, tf.param, arg, tf.kind)
            return DepApply(with_type(fn, tf), arg, state.strip_implicits(result))
        if isinstance(tf, (TypeIdentifier, DataTypeVar)) and _is_meta(tf.name):
            want = FunType(state.fresh_general(), state.fresh_general())
            state.unify(tf, want)
            tf = want
        if not isinstance(tf, FunType):
            raise InferenceError(f"not a function: {type_to_text(tf)}")
        arg = _infer(e.arg, state, env, tenv)
        state.unify(tf.inp, arg.type)
        return Apply(with_type(fn, tf), arg, state.strip_implicits(tf.out))
    raise InferenceError(f"cannot infer {e!r}")


def _resolve_annotation(t: Type, state: InferState, tenv) -> Type:
    """Validate an annotation: size names must be in scope or become unit
    parameters; bare data-type names are rejected."""
    if isinstance(t, DataTypeVar):
        raise InferenceError(f"unknown type name {t.name!r} in annotation")
    if isinstance(t, TypeIdentifier):
        raise InferenceError(f"unknown type name {t.name!r} in annotation")
    if isinstance(t, IndexType):
        return IndexType(_resolve_size(t.size, state, tenv))
    if isinstance(t, ArrayType):
        return ArrayType(
            _resolve_size(t.size, state, tenv), _resolve_annotation(t.elem, state, tenv)
        )
    if isinstance(t, TupleType):
        return TupleType(
            _resolve_annotation(t.fst, state, tenv), _resolve_annotation(t.snd, state, tenv)
        )
    if isinstance(t, FunType):
        return FunType(
            _resolve_annotation(t.inp, state, tenv), _resolve_annotation(t.out, state, tenv)
        )
    if isinstance(t, DepFunType):
        inner = dict(tenv)
        inner[t.param] = t.kind
        return DepFunType(t.kind, t.param, _resolve_annotation(t.body, state, inner), t.implicit)
    return t


def _resolve_size(n: nat.Nat, state: InferState, tenv) -> nat.Nat:
    for v in nat.free_vars(n):
        if v in tenv:
            if tenv[v] is not Kind.NAT:
                raise KindError(f"{v!r} is not a size variable")
        else:
            state.free_sizes.setdefault(v, None)
    return n


def _resolve_dep_arg(arg, kind: Kind, state, tenv):
    if kind is Kind.NAT:
        if not isinstance(arg, nat.Nat):
            raise KindError(f"expected a size argument, found {arg!r}")
        return _resolve_size(arg, state, tenv)
    if kind is Kind.ADDRESS:
        if not isinstance(arg, AddressSpace):
            raise KindError(f"expected an address space, found {arg!r}")
        return arg
    if not isinstance(arg, DataType):
        raise KindError(f"expected a data type, found {arg!r}")
    return arg


def _expr_to_dep_arg(arg: Expr, kind: Kind, state, tenv):
    if kind is Kind.NAT:
        if isinstance(arg, Literal) and isinstance(arg.value, int):
            return nat.Const(arg.value)
        if isinstance(arg, Identifier):
            return _resolve_size(nat.Var(arg.name), state, tenv)
        raise KindError("expected a size argument")
    raise KindError(f"expected a type-level argument of kind {kind}")


def _zonk_tree(e: Expr, state: InferState) -> Expr:
    t = state.zonk(e.type) if e.type is not None else None
    if isinstance(e, Identifier):
        return Identifier(e.name, e.uid, t)
    if isinstance(e, Literal):
        return Literal(e.text, e.value, t)
    if isinstance(e, Primitive):
        return Primitive(e.name, t)
    if isinstance(e, Lambda):
        return Lambda(_zonk_tree(e.param, state), _zonk_tree(e.body, state), t)
    if isinstance(e, Apply):
        return Apply(_zonk_tree(e.fn, state), _zonk_tree(e.arg, state), t)
    if isinstance(e, DepLambda):
        return DepLambda(e.kind, e.param, _zonk_tree(e.body, state), t)
    if isinstance(e, DepApply):
        arg = e.arg
        if isinstance(arg, nat.Nat):
            arg = state.zonk_nat(arg)
        return DepApply(_zonk_tree(e.fn, state), arg, t)
    raise InferenceError(f"cannot zonk {e!r}")


def _scan_unsolved(e: Expr):
    if e.type is not None:
        holes = _type_metas(e.type)
        if holes:
            kind = "primitive argument" if isinstance(e, Primitive) else "type"
            raise InferenceError(
                f"unsolved implicit {sorted(holes)[0]!r} in {kind} {type_to_text(e.type)}"
            )
    for c in _children_with_param(e):
        _scan_unsolved(c)


def _children_with_param(e):
    from .expr import children

    if isinstance(e, Lambda):
        return (e.param, e.body)
    return children(e)


def _type_metas(t: Type) -> set:
    if isinstance(t, (TypeIdentifier, DataTypeVar)):
        return {t.name} if _is_meta(t.name) else set()
    if isinstance(t, IndexType):
        return {v for v in nat.free_vars(t.size) if _is_meta(v)}
    if isinstance(t, ArrayType):
        return {v for v in nat.free_vars(t.size) if _is_meta(v)} | _type_metas(t.elem)
    if isinstance(t, TupleType):
        return _type_metas(t.fst) | _type_metas(t.snd)
    if isinstance(t, FunType):
        return _type_metas(t.inp) | _type_metas(t.out)
    if isinstance(t, DepFunType):
        return _type_metas(t.body)
    return set()


# ---------------------------------------------------------------------------
# annotation re-checking (no inference, used by tests and invariants)


def types_equal(a: Type, b: Type, assumptions=()) -> bool:
    a_, b_ = a, b
    if isinstance(a_, ScalarType) and isinstance(b_, ScalarType):
        return a_.name == b_.name
    if isinstance(a_, (TypeIdentifier, DataTypeVar)) and isinstance(
        b_, (TypeIdentifier, DataTypeVar)
    ):
        return a_.name == b_.name
    if isinstance(a_, IndexType) and isinstance(b_, IndexType):
        return nat.equal(a_.size, b_.size, assumptions)
    if isinstance(a_, ArrayType) and isinstance(b_, ArrayType):
        return nat.equal(a_.size, b_.size, assumptions) and types_equal(
            a_.elem, b_.elem, assumptions
        )
    if isinstance(a_, TupleType) and isinstance(b_, TupleType):
        return types_equal(a_.fst, b_.fst, assumptions) and types_equal(
            a_.snd, b_.snd, assumptions
        )
    if isinstance(a_, FunType) and isinstance(b_, FunType):
        return types_equal(a_.inp, b_.inp, assumptions) and types_equal(
            a_.out, b_.out, assumptions
        )
    if isinstance(a_, DepFunType) and isinstance(b_, DepFunType):
        if a_.kind is not b_.kind:
            return False
        if a_.param == b_.param:
            return types_equal(a_.body, b_.body, assumptions)
        renamed = _rename_binder(b_, a_.param)
        return types_equal(a_.body, renamed, assumptions)
    return False


def check_annotations(e: Expr, assumptions=()) -> bool:
    """Plain checker: a fully annotated tree is internally consistent."""
    if e.type is None:
        raise InferenceError("node is missing a type annotation")
    if isinstance(e, (Identifier, Literal, Primitive)):
        return True
    if isinstance(e, Lambda):
        check_annotations(e.body, assumptions)
        ok = isinstance(e.type, FunType) and types_equal(
            e.type, FunType(e.param.type, e.body.type), assumptions
        )
        if not ok:
            raise InferenceError("lambda annotation is inconsistent")
        return True
    if isinstance(e, DepLambda):
        check_annotations(e.body, assumptions)
        if not isinstance(e.type, DepFunType):
            raise InferenceError("dependent lambda annotation is inconsistent")
        return True
    if isinstance(e, Apply):
        check_annotations(e.fn, assumptions)
        check_annotations(e.arg, assumptions)
        tf = e.fn.type
        if not isinstance(tf, FunType):
            raise InferenceError("application of a non-function")
        if not types_equal(tf.inp, e.arg.type, assumptions):
            raise InferenceError(
                f"argument type {type_to_text(e.arg.type)} does not match "
                f"parameter type {type_to_text(tf.inp)}"
            )
        if not types_equal(tf.out, e.type, assumptions):
            raise InferenceError("application annotation is inconsistent")
        return True
    if isinstance(e, DepApply):
        check_annotations(e.fn, assumptions)
        tf = e.fn.type
        if not isinstance(tf, DepFunType):
            raise InferenceError("dependent application of a non-dependent function")
        expected = substitute_type(tf.body, tf.param, e.arg, tf.kind)
        # implicit binders of the instantiated body are stripped on e.type,
        # so only compare when there are none left
        if not (isinstance(expected, DepFunType) and expected.implicit):
            if not types_equal(expected, e.type, assumptions):
                raise InferenceError("dependent application annotation is inconsistent")
        return True
    raise InferenceError(f"cannot check {e!r}")
