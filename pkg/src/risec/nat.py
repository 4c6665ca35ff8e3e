"""Symbolic natural-number arithmetic used in array lengths and indices.

Terms normalize to a sum-of-products form: a polynomial over "atoms"
(variables and irreducible Div/Mod/Pow terms) with integer coefficients.
Normalization folds constants, flattens nested sums/products, sorts factors
and terms by a fixed total order, and reduces exact divisions.  Division and
modulo stay symbolic whenever they are not exactly reducible; a divisibility
assumption registry lets `(n/s)*s` cancel to `n` once a rewrite has recorded
that `s` divides `n`.

Constants may be negative internally (loop-bound arithmetic such as `k - 2`
needs them); types written by users only ever contain nonnegative values.
"""

from __future__ import annotations

from dataclasses import dataclass


class Nat:
    """Base class for symbolic naturals. Instances are immutable."""

    def __add__(self, other):
        return Sum((self, _nat(other)))

    def __radd__(self, other):
        return Sum((_nat(other), self))

    def __mul__(self, other):
        return Product((self, _nat(other)))

    def __rmul__(self, other):
        return Product((_nat(other), self))

    def __sub__(self, other):
        return Sum((self, Product((Const(-1), _nat(other)))))

    def __rsub__(self, other):
        return Sum((_nat(other), Product((Const(-1), self))))

    def __floordiv__(self, other):
        return Div(self, _nat(other))

    def __mod__(self, other):
        return Mod(self, _nat(other))

    def __pow__(self, other):
        return Pow(self, _nat(other))


def _nat(x) -> Nat:
    if isinstance(x, Nat):
        return x
    if isinstance(x, int):
        return Const(x)
    raise TypeError(f"not a Nat: {x!r}")


@dataclass(frozen=True)
class Const(Nat):
    value: int


@dataclass(frozen=True)
class Var(Nat):
    name: str


@dataclass(frozen=True)
class Sum(Nat):
    terms: tuple


@dataclass(frozen=True)
class Product(Nat):
    factors: tuple


@dataclass(frozen=True)
class Pow(Nat):
    base: Nat
    exp: Nat


@dataclass(frozen=True)
class Div(Nat):
    num: Nat
    den: Nat


@dataclass(frozen=True)
class Mod(Nat):
    num: Nat
    den: Nat


# ---------------------------------------------------------------------------
# polynomial representation: {monomial: coefficient}
# a monomial is a sorted tuple of (atom, power); atoms are normalized Nats
# that the polynomial layer treats as opaque (Var, Div, Mod, symbolic Pow).

# atoms ordered by kind rank, then recursively by payload
_KIND_RANK = {Var: 0, Const: 1, Pow: 2, Div: 3, Mod: 4, Sum: 5, Product: 6}

# expanding Pow with a larger constant exponent would blow up the polynomial
_MAX_POW_EXPAND = 8


def _sort_key(n: Nat):
    if isinstance(n, Var):
        return (0, n.name)
    if isinstance(n, Const):
        return (1, n.value)
    if isinstance(n, Pow):
        return (2, _sort_key(n.base), _sort_key(n.exp))
    if isinstance(n, Div):
        return (3, _sort_key(n.num), _sort_key(n.den))
    if isinstance(n, Mod):
        return (4, _sort_key(n.num), _sort_key(n.den))
    if isinstance(n, Sum):
        return (5, tuple(_sort_key(t) for t in n.terms))
    if isinstance(n, Product):
        return (6, tuple(_sort_key(f) for f in n.factors))
    raise TypeError(f"unknown Nat node: {n!r}")


def _poly_const(c: int):
    return {(): c} if c else {}


def _poly_add(a, b):
    out = dict(a)
    for mono, c in b.items():
        nc = out.get(mono, 0) + c
        if nc:
            out[mono] = nc
        else:
            out.pop(mono, None)
    return out


def _mono_mul(m1, m2):
    powers = {}
    for atom, p in m1 + m2:
        powers[atom] = powers.get(atom, 0) + p
    return tuple(sorted(powers.items(), key=lambda ap: _sort_key(ap[0])))


def _poly_mul(a, b):
    out = {}
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            mono = _mono_mul(m1, m2)
            nc = out.get(mono, 0) + c1 * c2
            if nc:
                out[mono] = nc
            else:
                out.pop(mono, None)
    return out


def _poly_is_const(p):
    return not p or set(p.keys()) == {()}


def _poly_divide_exact(num, den):
    """Exact polynomial division, or None.

    Supports a single-monomial divisor; that covers every division the
    compiler needs to reduce (constant chunk sizes, single length variables).
    """
    if not den:
        return None
    if len(den) == 1:
        ((dmono, dc),) = den.items()
        out = {}
        for mono, c in num.items():
            if c % dc:
                return None
            powers = dict(mono)
            for atom, p in dmono:
                if powers.get(atom, 0) < p:
                    return None
                powers[atom] -= p
                if not powers[atom]:
                    del powers[atom]
            out[tuple(sorted(powers.items(), key=lambda ap: _sort_key(ap[0])))] = c // dc
        return out
    return None


def _normalize_assumptions(assumptions):
    # assumptions are (num, den) pairs meaning "den divides num"
    out = set()
    for num, den in assumptions or ():
        out.add((normalize(num), normalize(den)))
    return out


def _cancel_assumed(poly, asms):
    """Cancel Div atoms in monomials when the registry guarantees exactness.

    A monomial containing Div(num, den) together with the factors of den
    (or a coefficient divisible by a constant den) rewrites to num times the
    rest, provided `den | num` was recorded.
    """
    if not asms:
        return poly
    changed = True
    while changed:
        changed = False
        for mono, coeff in list(poly.items()):
            for atom, p in mono:
                if not isinstance(atom, Div):
                    continue
                if (atom.num, atom.den) not in asms:
                    continue
                den_poly = _to_poly(atom.den, frozenset())
                if len(den_poly) != 1:
                    continue
                ((dmono, dc),) = den_poly.items()
                if coeff % dc:
                    continue
                powers = dict(mono)
                ok = True
                for datom, dp in dmono:
                    if powers.get(datom, 0) < dp:
                        ok = False
                        break
                if not ok:
                    continue
                # remove one Div atom and one copy of den's factors
                powers[atom] -= 1
                if not powers[atom]:
                    del powers[atom]
                for datom, dp in dmono:
                    powers[datom] -= dp
                    if not powers[datom]:
                        del powers[datom]
                rest = {
                    tuple(sorted(powers.items(), key=lambda ap: _sort_key(ap[0]))): coeff
                    // dc
                }
                replacement = _poly_mul(rest, _to_poly(atom.num, frozenset()))
                del poly[mono]
                poly = _poly_add(poly, replacement)
                changed = True
                break
            if changed:
                break
    return poly


def _to_poly(n: Nat, asms) -> dict:
    if isinstance(n, Const):
        return _poly_const(n.value)
    if isinstance(n, Var):
        return {((n, 1),): 1}
    if isinstance(n, Sum):
        out = {}
        for t in n.terms:
            out = _poly_add(out, _to_poly(t, asms))
        return out
    if isinstance(n, Product):
        out = _poly_const(1)
        for f in n.factors:
            out = _poly_mul(out, _to_poly(f, asms))
        return _cancel_assumed(out, asms)
    if isinstance(n, Pow):
        base = normalize(n.base, asms)
        exp = normalize(n.exp, asms)
        if isinstance(exp, Const) and exp.value >= 0:
            bp = _to_poly(base, asms)
            if len(bp) <= 1:
                # a single monomial raises cheaply for any exponent
                if not bp:
                    return _poly_const(0 if exp.value else 1)
                ((mono, coeff),) = bp.items()
                powered = tuple((atom, p * exp.value) for atom, p in mono)
                powered = tuple((atom, p) for atom, p in powered if p)
                return {powered: coeff**exp.value} if coeff**exp.value else {}
            if exp.value <= _MAX_POW_EXPAND:
                out = _poly_const(1)
                for _ in range(exp.value):
                    out = _poly_mul(out, bp)
                return out
        if isinstance(base, Const) and isinstance(exp, Const):
            return _poly_const(base.value**exp.value)
        return {((Pow(base, exp), 1),): 1}
    if isinstance(n, Div):
        num = _to_poly(n.num, asms)
        den = _to_poly(n.den, asms)
        if _poly_is_const(den) and den.get((), 0) == 1:
            return num
        if not _poly_is_const(den) or den.get((), 0) != 0:
            quo = _poly_divide_exact(num, den)
            if quo is not None:
                return quo
            if _poly_is_const(num) and _poly_is_const(den):
                return _poly_const(num.get((), 0) // den.get((), 0))
        return {((Div(_from_poly(num), _from_poly(den)), 1),): 1}
    if isinstance(n, Mod):
        num = _to_poly(n.num, asms)
        den = _to_poly(n.den, asms)
        if _poly_is_const(den) and den.get((), 0) == 1:
            return {}
        if _poly_is_const(den) and den.get((), 0) == 0:
            return {((Mod(_from_poly(num), _from_poly(den)), 1),): 1}
        if _poly_divide_exact(num, den) is not None:
            return {}
        if (_from_poly(num), _from_poly(den)) in asms:
            return {}
        if _poly_is_const(num) and _poly_is_const(den):
            return _poly_const(num.get((), 0) % den.get((), 0))
        return {((Mod(_from_poly(num), _from_poly(den)), 1),): 1}
    raise TypeError(f"unknown Nat node: {n!r}")


def _mono_to_nat(mono, coeff) -> Nat:
    factors = []
    if coeff != 1 or not mono:
        factors.append(Const(coeff))
    for atom, p in mono:
        factors.append(atom if p == 1 else Pow(atom, Const(p)))
    if len(factors) == 1:
        return factors[0]
    return Product(tuple(factors))


def _from_poly(poly) -> Nat:
    if not poly:
        return Const(0)
    terms = [
        _mono_to_nat(mono, coeff)
        for mono, coeff in sorted(poly.items(), key=lambda mc: _mono_key(mc[0]))
    ]
    if len(terms) == 1:
        return terms[0]
    return Sum(tuple(terms))


def _mono_key(mono):
    return tuple((_sort_key(atom), p) for atom, p in mono)


def normalize(n: Nat, assumptions=()) -> Nat:
    """Return the canonical sum-of-products form of `n`.

    Idempotent, and semantics-preserving under any concrete assignment
    (provided the assignment satisfies the divisibility assumptions).
    """
    asms = (
        assumptions
        if isinstance(assumptions, frozenset)
        else frozenset(_normalize_assumptions(assumptions))
    )
    return _from_poly(_to_poly(n, asms))


def equal(a: Nat, b: Nat, assumptions=()) -> bool:
    """True iff the normal forms of `a` and `b` are structurally identical."""
    return normalize(a, assumptions) == normalize(b, assumptions)


def evaluate(n: Nat, env: dict) -> int:
    """Evaluate under a concrete assignment. Div is floor division."""
    if isinstance(n, Const):
        return n.value
    if isinstance(n, Var):
        if n.name not in env:
            raise KeyError(f"no value for size variable '{n.name}'")
        return env[n.name]
    if isinstance(n, Sum):
        return sum(evaluate(t, env) for t in n.terms)
    if isinstance(n, Product):
        out = 1
        for f in n.factors:
            out *= evaluate(f, env)
        return out
    if isinstance(n, Pow):
        return evaluate(n.base, env) ** evaluate(n.exp, env)
    if isinstance(n, Div):
        return evaluate(n.num, env) // evaluate(n.den, env)
    if isinstance(n, Mod):
        return evaluate(n.num, env) % evaluate(n.den, env)
    raise TypeError(f"unknown Nat node: {n!r}")


def free_vars(n: Nat) -> set:
    if isinstance(n, Var):
        return {n.name}
    if isinstance(n, Const):
        return set()
    if isinstance(n, Sum):
        return set().union(*(free_vars(t) for t in n.terms))
    if isinstance(n, Product):
        return set().union(*(free_vars(f) for f in n.factors))
    if isinstance(n, (Pow,)):
        return free_vars(n.base) | free_vars(n.exp)
    if isinstance(n, (Div, Mod)):
        return free_vars(n.num) | free_vars(n.den)
    raise TypeError(f"unknown Nat node: {n!r}")


def substitute(n: Nat, mapping: dict) -> Nat:
    """Replace variables by Nats (no normalization)."""
    if isinstance(n, Var):
        return mapping.get(n.name, n)
    if isinstance(n, Const):
        return n
    if isinstance(n, Sum):
        return Sum(tuple(substitute(t, mapping) for t in n.terms))
    if isinstance(n, Product):
        return Product(tuple(substitute(f, mapping) for f in n.factors))
    if isinstance(n, Pow):
        return Pow(substitute(n.base, mapping), substitute(n.exp, mapping))
    if isinstance(n, Div):
        return Div(substitute(n.num, mapping), substitute(n.den, mapping))
    if isinstance(n, Mod):
        return Mod(substitute(n.num, mapping), substitute(n.den, mapping))
    raise TypeError(f"unknown Nat node: {n!r}")


def to_text(n: Nat, parent_prec=0) -> str:
    """Render in the surface syntax (`+`, `*`, `^`, `/`, `%`).

    Negative coefficients render as subtraction so internal loop arithmetic
    like `k - 2` stays readable.
    """
    if isinstance(n, Const):
        return str(n.value)
    if isinstance(n, Var):
        return n.name
    if isinstance(n, Sum):
        stripped = [_strip_negation(t) for t in n.terms]
        ordered = [st for st in stripped if not st[0]] + [st for st in stripped if st[0]]
        parts = []
        for i, (neg, body) in enumerate(ordered):
            s = to_text(body, 1)
            if i == 0:
                parts.append("-" + s if neg else s)
            else:
                parts.append((" - " if neg else " + ") + s)
        s = "".join(parts)
        return f"({s})" if parent_prec > 1 else s
    if isinstance(n, Product):
        s = " * ".join(to_text(f, 2) for f in n.factors)
        return f"({s})" if parent_prec > 2 else s
    if isinstance(n, Div):
        s = f"{to_text(n.num, 3)} / {to_text(n.den, 3)}"
        return f"({s})" if parent_prec >= 2 else s
    if isinstance(n, Mod):
        s = f"{to_text(n.num, 3)} % {to_text(n.den, 3)}"
        return f"({s})" if parent_prec >= 2 else s
    if isinstance(n, Pow):
        return f"{to_text(n.base, 4)}^{to_text(n.exp, 4)}"
    raise TypeError(f"unknown Nat node: {n!r}")


def _strip_negation(t: Nat):
    if isinstance(t, Const) and t.value < 0:
        return True, Const(-t.value)
    if isinstance(t, Product) and t.factors and isinstance(t.factors[0], Const):
        c = t.factors[0].value
        if c < 0:
            rest = t.factors[1:]
            if c == -1 and len(rest) == 1:
                return True, rest[0]
            if c == -1:
                return True, Product(rest)
            return True, Product((Const(-c),) + rest)
    return False, t


def solve_linear(poly_zero, unknown: str, assumptions=()):
    """Solve `poly == 0` for `unknown`, given as a polynomial dict.

    Returns the Nat solution or None.  Only handles the unknown occurring
    linearly: a*x + b = 0 with a, b free of x.  When a does not divide b
    exactly, falls back to a symbolic Div if the divisibility was recorded
    in `assumptions`.
    """
    a = {}
    b = {}
    for mono, c in poly_zero.items():
        powers = dict(mono)
        p = 0
        for atom, q in mono:
            if isinstance(atom, Var) and atom.name == unknown:
                p = q
            elif unknown in free_vars(atom):
                return None  # occurs inside an opaque atom
        if p == 0:
            b[mono] = c
        elif p == 1:
            powers.pop(Var(unknown))
            a[tuple(sorted(powers.items(), key=lambda ap: _sort_key(ap[0])))] = c
        else:
            return None  # nonlinear
    if not a:
        return None
    neg_b = {m: -c for m, c in b.items()}
    quo = _poly_divide_exact(neg_b, a)
    if quo is not None:
        return _from_poly(quo)
    num = _from_poly(neg_b)
    den = _from_poly(a)
    asms = frozenset(_normalize_assumptions(assumptions))
    if (num, den) in asms:
        return Div(num, den)
    return None
