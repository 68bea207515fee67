"""Time expressions and symbolic time constraints."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, Mapping, Union

RELATIONS = ("=", ">=", ">", "<", "<=")


@dataclass(frozen=True, slots=True)
class Num:
    value: Fraction

    def __init__(self, value) -> None:
        object.__setattr__(self, "value", Fraction(value))


@dataclass(frozen=True, slots=True)
class TVar:
    name: str


@dataclass(frozen=True, slots=True)
class Cur:
    pass


@dataclass(frozen=True, slots=True)
class Dist:
    """The travel-time atom td(src, dst)."""
    src: str
    dst: str

    @property
    def name(self) -> str:
        return f"td({self.src},{self.dst})"


@dataclass(frozen=True, slots=True)
class BinOp:
    op: str  # one of + - * /
    lhs: "TimeExpr"
    rhs: "TimeExpr"


@dataclass(frozen=True, slots=True)
class Floor:
    arg: "TimeExpr"


@dataclass(frozen=True, slots=True)
class Ceil:
    arg: "TimeExpr"


TimeExpr = Union[Num, TVar, Cur, Dist, BinOp, Floor, Ceil]


def add(a: TimeExpr, b: TimeExpr) -> TimeExpr:
    return BinOp("+", a, b)


def sub(a: TimeExpr, b: TimeExpr) -> TimeExpr:
    return BinOp("-", a, b)


class NonLinear(ValueError):
    """Multiplication of two non-constants or division by a non-constant."""


@dataclass(frozen=True, slots=True)
class TimeConstraint:
    lhs: TimeExpr
    rel: str
    rhs: TimeExpr

    def __post_init__(self) -> None:
        if self.rel not in RELATIONS:
            raise ValueError(f"bad relation {self.rel!r}")

    def __str__(self) -> str:
        return f"{show(self.lhs)} {self.rel} {show(self.rhs)}"


# --- traversal -------------------------------------------------------------

def map_expr(e: TimeExpr, f: Callable[[TimeExpr], TimeExpr | None]) -> TimeExpr:
    """Bottom-up rewrite; f returns a replacement or None to keep the node."""
    r = f(e)
    if r is not None:
        return r
    match e:
        case BinOp(op, a, b):
            return BinOp(op, map_expr(a, f), map_expr(b, f))
        case Floor(a):
            return Floor(map_expr(a, f))
        case Ceil(a):
            return Ceil(map_expr(a, f))
    return e


def map_constraint(tc: TimeConstraint,
                   f: Callable[[TimeExpr], TimeExpr | None]) -> TimeConstraint:
    return TimeConstraint(map_expr(tc.lhs, f), tc.rel, map_expr(tc.rhs, f))


def atoms(e: TimeExpr) -> Iterator[TimeExpr]:
    match e:
        case BinOp(_, a, b):
            yield from atoms(a)
            yield from atoms(b)
        case Floor(a) | Ceil(a):
            yield from atoms(a)
        case _:
            yield e


def constraint_atoms(tc: TimeConstraint) -> Iterator[TimeExpr]:
    yield from atoms(tc.lhs)
    yield from atoms(tc.rhs)


def has_cur(tc: TimeConstraint) -> bool:
    return any(isinstance(a, Cur) for a in constraint_atoms(tc))


def variables(tc: TimeConstraint) -> set[str]:
    """Names of time variables and td atoms occurring in tc."""
    out = set()
    for a in constraint_atoms(tc):
        if isinstance(a, (TVar, Dist)):
            out.add(a.name)
    return out


def has_rounding(e: TimeExpr) -> bool:
    match e:
        case Floor() | Ceil():
            return True
        case BinOp(_, a, b):
            return has_rounding(a) or has_rounding(b)
    return False


def subst_cur(tc: TimeConstraint, tv: TVar) -> TimeConstraint:
    return map_constraint(tc, lambda e: tv if isinstance(e, Cur) else None)


def rename(tc: TimeConstraint, mapping: Mapping[str, str]) -> TimeConstraint:
    def f(e):
        if isinstance(e, TVar) and e.name in mapping:
            return TVar(mapping[e.name])
        return None
    return map_constraint(tc, f)


def is_constant(e: TimeExpr) -> bool:
    return all(isinstance(a, Num) for a in atoms(e))


def check_linear(e: TimeExpr) -> None:
    """Raise NonLinear for products of non-constants or non-constant divisors."""
    match e:
        case BinOp("*", a, b):
            if not (is_constant(a) or is_constant(b)):
                raise NonLinear(f"non-linear product in {show(e)}")
        case BinOp("/", a, b):
            if not is_constant(b):
                raise NonLinear(f"division by non-constant in {show(e)}")
            if evaluate(b, {}) == 0:
                raise NonLinear(f"division by zero in {show(e)}")
    match e:
        case BinOp(_, a, b):
            check_linear(a)
            check_linear(b)
        case Floor(a) | Ceil(a):
            check_linear(a)


# --- exact evaluation ------------------------------------------------------

def evaluate(e: TimeExpr, model: Mapping[str, Fraction]) -> Fraction:
    match e:
        case Num(v):
            return v
        case TVar() | Dist():
            return Fraction(model.get(e.name, 0))
        case Cur():
            raise ValueError("cannot evaluate cur")
        case BinOp(op, a, b):
            x, y = evaluate(a, model), evaluate(b, model)
            if op == "+":
                return x + y
            if op == "-":
                return x - y
            if op == "*":
                return x * y
            return x / y
        case Floor(a):
            return Fraction(math.floor(evaluate(a, model)))
        case Ceil(a):
            return Fraction(math.ceil(evaluate(a, model)))
    raise TypeError(e)


def holds(tc: TimeConstraint, model: Mapping[str, Fraction]) -> bool:
    x, y = evaluate(tc.lhs, model), evaluate(tc.rhs, model)
    return {"=": x == y, ">=": x >= y, ">": x > y,
            "<": x < y, "<=": x <= y}[tc.rel]


# --- printing --------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def show_num(v: Fraction) -> str:
    if v.denominator == 1:
        return str(v.numerator)
    return f"{v.numerator}/{v.denominator}"


def show(e: TimeExpr, parent: int = 0, right: bool = False) -> str:
    match e:
        case Num(v):
            s = show_num(v)
            return f"({s})" if (v < 0 or v.denominator != 1) and parent else s
        case TVar(n):
            return n
        case Cur():
            return "cur"
        case Dist():
            return e.name
        case Floor(a):
            return f"floor({show(a)})"
        case Ceil(a):
            return f"ceil({show(a)})"
        case BinOp(op, a, b):
            p = _PREC[op]
            s = f"{show(a, p)} {op} {show(b, p, True)}"
            if p < parent or (p == parent and right):
                return f"({s})"
            return s
    raise TypeError(e)


# --- linear normal form ----------------------------------------------------

class Linear:
    """sum(coeffs[v] * v) + const with exact rationals."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs: dict[str, Fraction] | None = None,
                 const: Fraction = Fraction(0)):
        self.coeffs = {k: v for k, v in (coeffs or {}).items() if v != 0}
        self.const = Fraction(const)

    def __add__(self, o: "Linear") -> "Linear":
        c = dict(self.coeffs)
        for k, v in o.coeffs.items():
            c[k] = c.get(k, 0) + v
        return Linear(c, self.const + o.const)

    def scale(self, f: Fraction) -> "Linear":
        return Linear({k: v * f for k, v in self.coeffs.items()}, self.const * f)

    def __sub__(self, o: "Linear") -> "Linear":
        return self + o.scale(Fraction(-1))

    def is_const(self) -> bool:
        return not self.coeffs

    def __repr__(self) -> str:
        return f"Linear({self.coeffs}, {self.const})"


class NotLinear(Exception):
    pass


def linearize(e: TimeExpr) -> Linear:
    """Linear form of e; raises NotLinear for floor/ceil or non-linear terms."""
    match e:
        case Num(v):
            return Linear(const=v)
        case TVar(n):
            return Linear({n: Fraction(1)})
        case Dist():
            return Linear({e.name: Fraction(1)})
        case BinOp("+", a, b):
            return linearize(a) + linearize(b)
        case BinOp("-", a, b):
            return linearize(a) - linearize(b)
        case BinOp("*", a, b):
            x, y = linearize(a), linearize(b)
            if x.is_const():
                return y.scale(x.const)
            if y.is_const():
                return x.scale(y.const)
            raise NotLinear(show(e))
        case BinOp("/", a, b):
            y = linearize(b)
            if not y.is_const() or y.const == 0:
                raise NotLinear(show(e))
            return linearize(a).scale(1 / y.const)
    raise NotLinear(show(e))


def normalize(tc: TimeConstraint) -> list[tuple[Linear, str]]:
    """Rewrite tc as a list of `L rel 0` with rel in {<=, <}."""
    d = linearize(tc.lhs) - linearize(tc.rhs)
    neg = d.scale(Fraction(-1))
    match tc.rel:
        case "<=":
            return [(d, "<=")]
        case "<":
            return [(d, "<")]
        case ">=":
            return [(neg, "<=")]
        case ">":
            return [(neg, "<")]
        case "=":
            return [(d, "<="), (neg, "<=")]
    raise ValueError(tc.rel)


def negate(tc: TimeConstraint) -> list[TimeConstraint]:
    """Alternatives whose disjunction is the negation of tc."""
    opposite = {">=": "<", ">": "<=", "<": ">=", "<=": ">"}
    if tc.rel == "=":
        return [TimeConstraint(tc.lhs, "<", tc.rhs),
                TimeConstraint(tc.lhs, ">", tc.rhs)]
    return [TimeConstraint(tc.lhs, opposite[tc.rel], tc.rhs)]
