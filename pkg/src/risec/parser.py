"""Surface-syntax parser.

Grammar sketch:

    program  := ("def" ident "=" expr)* expr?
    expr     := depFun | fun | pipe
    pipe     := arith (("|>" | ">>") arith)*
    arith    := term (("+" | "-") term)*
    term     := app ("*" app)*
    app      := atom ("(" arg ")")*
    fun      := "fun(" param ("," param)* "=>" expr ")"
    depFun   := "depFun((" ident ":" kind ("," ident ":" kind)* ") =>" expr ")"

`a |> f` desugars to `f(a)`; `f >> g` desugars to a composition lambda.
Application arguments of primitives with leading explicit dependent binders
(`split`, `iterate`, `toMem`, `reduceSeq(Private)`) parse as type-level
values at the call site; everything else defers to type inference.
Comments run from `//` to end of line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import nat
from .errors import RiseSyntaxError
from .expr import Apply, DepApply, DepLambda, Expr, Identifier, Lambda, Literal, Primitive
from .types import (
    F32,
    I32,
    BOOL,
    AddressSpace,
    ArrayType,
    DataTypeVar,
    DepFunType,
    FunType,
    IndexType,
    Kind,
    TupleType,
    Type,
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<float>\d+\.\d+f?|\d+f)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<sym>\|>|>>|=>|->|[()\[\]{},:;=+\-*/%^@`])
    """,
    re.VERBOSE,
)

KINDS = {
    "Nat": Kind.NAT,
    "DataType": Kind.DATA,
    "AddrSp": Kind.ADDRESS,
    "AddressSpace": Kind.ADDRESS,
}

ADDRESS_SPACES = {
    "Global": AddressSpace.GLOBAL,
    "Local": AddressSpace.LOCAL,
    "Private": AddressSpace.PRIVATE,
}

SCALARS = {"f32": F32, "i32": I32, "bool": BOOL}


@dataclass
class Token:
    kind: str  # ident | int | float | sym | eof
    text: str
    line: int
    col: int


def tokenize(source: str, skip_backticks=True):
    tokens = []
    line, col, pos = 1, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if not m:
            raise RiseSyntaxError(f"unexpected character {source[pos]!r}", (line, col))
        text = m.group(0)
        kind = m.lastgroup
        if kind != "ws" and not (skip_backticks and text == "`"):
            tokens.append(Token(kind, text, line, col))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


class TokenStream:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self, offset=0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect(self, text) -> Token:
        tok = self.peek()
        if tok.text != text:
            raise RiseSyntaxError(f"expected {text!r}, found {tok.text!r}", (tok.line, tok.col))
        return self.next()

    def at(self, text) -> bool:
        return self.peek().text == text

    def error(self, message):
        tok = self.peek()
        raise RiseSyntaxError(message, (tok.line, tok.col))


# ---------------------------------------------------------------------------
# types and type schemes


def parse_nat(ts: TokenStream) -> nat.Nat:
    return _nat_sum(ts)


def _nat_sum(ts):
    out = _nat_mul(ts)
    while ts.at("+"):
        ts.next()
        out = nat.Sum((out, _nat_mul(ts)))
    return out


def _nat_mul(ts):
    out = _nat_pow(ts)
    while ts.peek().text in ("*", "/", "%"):
        op = ts.next().text
        rhs = _nat_pow(ts)
        if op == "*":
            out = nat.Product((out, rhs))
        elif op == "/":
            out = nat.Div(out, rhs)
        else:
            out = nat.Mod(out, rhs)
    return out


def _nat_pow(ts):
    base = _nat_atom(ts)
    if ts.at("^"):
        ts.next()
        return nat.Pow(base, _nat_atom(ts))
    return base


def _nat_atom(ts):
    tok = ts.peek()
    if tok.kind == "int":
        ts.next()
        return nat.Const(int(tok.text))
    if tok.kind == "ident":
        ts.next()
        return nat.Var(tok.text)
    if tok.text == "(":
        ts.next()
        out = parse_nat(ts)
        ts.expect(")")
        return out
    ts.error("expected a size expression")


def parse_type_expr(ts: TokenStream) -> Type:
    """A (possibly dependent) function type; used for schemes and annotations."""
    if ts.at("{"):
        ts.next()
        name = ts.next().text
        ts.expect(":")
        kind = _parse_kind(ts)
        ts.expect("}")
        ts.expect("->")
        return DepFunType(kind, name, parse_type_expr(ts), implicit=True)
    if ts.at("(") and ts.peek(1).kind == "ident" and ts.peek(2).text == ":" and ts.peek(3).text in KINDS:
        ts.next()
        name = ts.next().text
        ts.expect(":")
        kind = _parse_kind(ts)
        ts.expect(")")
        ts.expect("->")
        return DepFunType(kind, name, parse_type_expr(ts))
    left = _parse_type_atom(ts)
    if ts.at("->"):
        ts.next()
        return FunType(left, parse_type_expr(ts))
    return left


def _parse_kind(ts) -> Kind:
    tok = ts.next()
    if tok.text not in KINDS:
        raise RiseSyntaxError(f"unknown kind {tok.text!r}", (tok.line, tok.col))
    return KINDS[tok.text]


def _parse_type_atom(ts) -> Type:
    tok = ts.peek()
    if tok.text == "(":
        ts.next()
        out = parse_type_expr(ts)
        ts.expect(")")
        return out
    if tok.kind != "ident":
        ts.error("expected a type")
    ts.next()
    if tok.text in SCALARS:
        return SCALARS[tok.text]
    if tok.text == "Array":
        ts.expect("[")
        size = parse_nat(ts)
        ts.expect(",")
        elem = _parse_type_atom(ts)
        ts.expect("]")
        return ArrayType(size, elem)
    if tok.text == "Tuple":
        ts.expect("[")
        fst = _parse_type_atom(ts)
        ts.expect(",")
        snd = _parse_type_atom(ts)
        ts.expect("]")
        return TupleType(fst, snd)
    if tok.text == "Idx":
        ts.expect("[")
        size = parse_nat(ts)
        ts.expect("]")
        return IndexType(size)
    # a bare name in type position is a data-kinded variable
    return DataTypeVar(tok.text)


def parse_scheme(text: str) -> Type:
    """Parse a primitive type scheme written in the signature notation."""
    ts = TokenStream(tokenize(text))
    out = parse_type_expr(ts)
    if ts.peek().kind != "eof":
        ts.error("trailing input after type scheme")
    return out


# ---------------------------------------------------------------------------
# expressions


class _ExprParser:
    def __init__(self, ts: TokenStream, registry):
        self.ts = ts
        self.registry = registry
        self.scopes = [{}]  # name -> Identifier
        self.defs = {}  # name -> Expr, inlined on reference

    def lookup(self, name):
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        return None

    def parse_program(self):
        defs = []
        while self.ts.at("def"):
            self.ts.next()
            name = self.ts.next().text
            self.ts.expect("=")
            body = self.parse_expr()
            self.defs[name] = body
            defs.append((name, body))
        if self.ts.peek().kind != "eof":
            entry_name, entry = None, self.parse_expr()
        elif defs:
            entry_name, entry = defs[-1]
        else:
            self.ts.error("empty program")
        if self.ts.peek().kind != "eof":
            self.ts.error("trailing input after program")
        return entry_name, entry

    def parse_expr(self) -> Expr:
        return self.parse_pipe()

    def parse_pipe(self) -> Expr:
        out = self.parse_arith()
        while self.ts.peek().text in ("|>", ">>"):
            op = self.ts.next().text
            rhs = self.parse_arith()
            if op == "|>":
                out = Apply(rhs, out)
            else:
                v = Identifier("x")
                out = Lambda(v, Apply(rhs, Apply(out, v)))
        return out

    def parse_arith(self) -> Expr:
        out = self.parse_term()
        while self.ts.peek().text in ("+", "-"):
            op = "add" if self.ts.next().text == "+" else "sub"
            out = Apply(Apply(Primitive(op), out), self.parse_term())
        return out

    def parse_term(self) -> Expr:
        out = self.parse_app()
        while self.ts.at("*"):
            self.ts.next()
            out = Apply(Apply(Primitive("mul"), out), self.parse_app())
        return out

    def parse_app(self) -> Expr:
        out = self.parse_atom()
        pending = self._explicit_binders(out)
        while self.ts.at("("):
            self.ts.next()
            if pending:
                kind = pending.pop(0)
                out = DepApply(out, self._dep_arg(kind))
            elif self._peek_address_space():
                out = DepApply(out, ADDRESS_SPACES[self.ts.next().text])
            else:
                out = Apply(out, self.parse_expr())
            self.ts.expect(")")
        return out

    def _explicit_binders(self, e):
        """Leading explicit dependent binders of a primitive's scheme."""
        if not isinstance(e, Primitive) or self.registry is None:
            return []
        sig = self.registry.get(e.name)
        if sig is None:
            return []
        out = []
        scheme = sig.scheme
        while isinstance(scheme, DepFunType) and not scheme.implicit:
            out.append(scheme.kind)
            scheme = scheme.body
        return out

    def _peek_address_space(self):
        tok = self.ts.peek()
        return tok.kind == "ident" and tok.text in ADDRESS_SPACES and self.ts.peek(1).text == ")"

    def _dep_arg(self, kind):
        if kind is Kind.NAT:
            return parse_nat(self.ts)
        if kind is Kind.ADDRESS:
            tok = self.ts.next()
            if tok.text not in ADDRESS_SPACES:
                raise RiseSyntaxError(f"expected an address space, found {tok.text!r}", (tok.line, tok.col))
            return ADDRESS_SPACES[tok.text]
        return _parse_type_atom(self.ts)

    def parse_atom(self) -> Expr:
        tok = self.ts.peek()
        if tok.text == "(":
            self.ts.next()
            out = self.parse_expr()
            self.ts.expect(")")
            return out
        if tok.kind in ("int", "float"):
            self.ts.next()
            return _literal(tok)
        if tok.kind != "ident":
            self.ts.error(f"unexpected token {tok.text!r}")
        if tok.text == "fun":
            return self.parse_fun()
        if tok.text == "depFun":
            return self.parse_dep_fun()
        if tok.text in ("true", "false"):
            self.ts.next()
            return Literal(tok.text, tok.text == "true")
        self.ts.next()
        bound = self.lookup(tok.text)
        if bound is not None:
            return bound
        if tok.text in self.defs:
            return _refresh(self.defs[tok.text], {})
        if self.registry is not None and tok.text in self.registry:
            name = tok.text
            # an address-space argument selects the scoped variant of a
            # primitive that exists both with and without one
            variant = self.registry.address_space_variant(name)
            if variant and self.ts.at("(") and self._peek_address_space_after_paren():
                name = variant
            return Primitive(name)
        return Identifier(tok.text)  # unbound; inference reports it

    def _peek_address_space_after_paren(self):
        tok = self.ts.peek(1)
        return tok.kind == "ident" and tok.text in ADDRESS_SPACES and self.ts.peek(2).text == ")"

    def parse_fun(self) -> Expr:
        self.ts.expect("fun")
        self.ts.expect("(")
        params = []
        while True:
            name_tok = self.ts.next()
            if name_tok.kind != "ident":
                raise RiseSyntaxError("expected a parameter name", (name_tok.line, name_tok.col))
            ann = None
            if self.ts.at(":"):
                self.ts.next()
                ann = parse_type_expr(self.ts)
            params.append(Identifier(name_tok.text, type=ann))
            if self.ts.at(","):
                self.ts.next()
                continue
            break
        self.ts.expect("=>")
        self.scopes.append({p.name: p for p in params})
        body = self.parse_expr()
        self.scopes.pop()
        self.ts.expect(")")
        for p in reversed(params):
            body = Lambda(p, body)
        return body

    def parse_dep_fun(self) -> Expr:
        self.ts.expect("depFun")
        self.ts.expect("(")
        self.ts.expect("(")
        binders = []
        while True:
            name = self.ts.next().text
            self.ts.expect(":")
            binders.append((name, _parse_kind(self.ts)))
            if self.ts.at(","):
                self.ts.next()
                continue
            break
        self.ts.expect(")")
        self.ts.expect("=>")
        body = self.parse_expr()
        self.ts.expect(")")
        for name, kind in reversed(binders):
            body = DepLambda(kind, name, body)
        return body


def _literal(tok: Token) -> Literal:
    if tok.kind == "int":
        return Literal(tok.text, int(tok.text))
    text = tok.text
    if not text.endswith("f"):
        raise RiseSyntaxError(
            f"float literals need an 'f' suffix: {text!r}", (tok.line, tok.col)
        )
    return Literal(text, float(text[:-1]))


def _refresh(e: Expr, env: dict) -> Expr:
    """Deep copy with fresh binder ids, so inlined definitions never alias."""
    if isinstance(e, Identifier):
        return env.get(e.uid, e)
    if isinstance(e, Literal) or isinstance(e, Primitive):
        return e
    if isinstance(e, Lambda):
        p = e.param.fresh()
        return Lambda(p, _refresh(e.body, {**env, e.param.uid: p}), e.type)
    if isinstance(e, Apply):
        return Apply(_refresh(e.fn, env), _refresh(e.arg, env), e.type)
    if isinstance(e, DepLambda):
        return DepLambda(e.kind, e.param, _refresh(e.body, env), e.type)
    if isinstance(e, DepApply):
        return DepApply(_refresh(e.fn, env), e.arg, e.type)
    raise TypeError(f"unknown expression node: {e!r}")


def parse(source: str, registry=None):
    """Parse a program. Returns (entry_name, Expr); name is None for bare
    expressions."""
    if registry is None:
        from .primitives import default_registry

        registry = default_registry()
    ts = TokenStream(tokenize(source))
    return _ExprParser(ts, registry).parse_program()


def parse_expr(source: str, registry=None) -> Expr:
    return parse(source, registry)[1]
