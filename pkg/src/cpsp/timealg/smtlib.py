"""SMT-LIB v2 encoding of constraint stores and a subprocess solver client."""

from __future__ import annotations

import os
import shutil
import subprocess
from fractions import Fraction
from typing import Iterable

from .expr import (BinOp, Ceil, Cur, Dist, Floor, Num, TimeConstraint,
                   TimeExpr, TVar, variables)


class SolverUnavailable(RuntimeError):
    pass


class MalformedSolverReply(RuntimeError):
    pass


def symbol(name: str) -> str:
    if name and all(c.isalnum() or c in "_.@~!$%^&*+-<>?/" for c in name) \
            and not name[0].isdigit():
        return name
    return f"|{name}|"


def num(v: Fraction) -> str:
    v = Fraction(v)
    mag = abs(v)
    s = f"{mag.numerator}.0" if mag.denominator == 1 else \
        f"(/ {mag.numerator}.0 {mag.denominator}.0)"
    return f"(- {s})" if v < 0 else s


class _Encoder:
    def __init__(self) -> None:
        self.aux: list[tuple[str, str, str]] = []  # (int var, kind, arg sexpr)

    def expr(self, e: TimeExpr) -> str:
        match e:
            case Num(v):
                return num(v)
            case TVar(n):
                return symbol(n)
            case Dist():
                return symbol(e.name)
            case Cur():
                raise ValueError("cur leaked into a constraint store")
            case BinOp(op, a, b):
                return f"({op} {self.expr(a)} {self.expr(b)})"
            case Floor(a) | Ceil(a):
                i = f"_round{len(self.aux)}"
                self.aux.append((i, "floor" if isinstance(e, Floor) else "ceil",
                                 self.expr(a)))
                return f"(to_real {i})"
        raise TypeError(e)

    def constraint(self, tc: TimeConstraint) -> str:
        rel = "=" if tc.rel == "=" else tc.rel
        return f"({rel} {self.expr(tc.lhs)} {self.expr(tc.rhs)})"


def encode(constraints: Iterable[TimeConstraint]) -> str:
    """Complete QF_LIRA script deciding the conjunction of constraints."""
    constraints = list(constraints)
    names = sorted({v for tc in constraints for v in variables(tc)})
    enc = _Encoder()
    asserts = [enc.constraint(tc) for tc in constraints]
    lines = ["(set-option :produce-models true)", "(set-logic QF_LIRA)"]
    for n in names:
        lines.append(f"(declare-const {symbol(n)} Real)")
    for i, _, _ in enc.aux:
        lines.append(f"(declare-const {i} Int)")
    for n in names:
        lines.append(f"(assert (>= {symbol(n)} 0.0))")
    for i, kind, arg in enc.aux:
        r = f"(to_real {i})"
        if kind == "floor":
            lines.append(f"(assert (<= {r} {arg}))")
            lines.append(f"(assert (< {arg} (+ {r} 1.0)))")
        else:
            lines.append(f"(assert (< (- {r} 1.0) {arg}))")
            lines.append(f"(assert (<= {arg} {r}))")
    for a in asserts:
        lines.append(f"(assert {a})")
    lines += ["(check-sat)", "(get-model)", "(exit)"]
    return "\n".join(lines) + "\n"


# --- replies ---------------------------------------------------------------

def parse_sexprs(text: str) -> list:
    tokens = _tokenize(text)
    out, pos = [], 0
    while pos < len(tokens):
        e, pos = _read(tokens, pos)
        out.append(e)
    return out


def _tokenize(text: str) -> list[str]:
    toks, i, n = [], 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "()":
            toks.append(c)
            i += 1
        elif c == "|":
            j = text.index("|", i + 1)
            toks.append(text[i:j + 1])
            i = j + 1
        elif c == '"':
            j = text.index('"', i + 1)
            toks.append(text[i:j + 1])
            i = j + 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()|\"":
                j += 1
            toks.append(text[i:j])
            i = j
    return toks


def _read(tokens, pos):
    tok = tokens[pos]
    if tok == "(":
        lst, pos = [], pos + 1
        while pos < len(tokens) and tokens[pos] != ")":
            e, pos = _read(tokens, pos)
            lst.append(e)
        if pos >= len(tokens):
            raise MalformedSolverReply("unbalanced parentheses")
        return lst, pos + 1
    if tok == ")":
        raise MalformedSolverReply("unexpected ')'")
    return tok, pos + 1


def _unquote(sym: str) -> str:
    return sym[1:-1] if sym.startswith("|") else sym


def value_of(sx) -> Fraction:
    if isinstance(sx, str):
        try:
            return Fraction(sx)
        except ValueError:
            raise MalformedSolverReply(f"bad numeral {sx!r}") from None
    if sx and sx[0] == "-" and len(sx) == 2:
        return -value_of(sx[1])
    if sx and sx[0] == "/" and len(sx) == 3:
        return value_of(sx[1]) / value_of(sx[2])
    if sx and sx[0] == "to_real" and len(sx) == 2:
        return value_of(sx[1])
    raise MalformedSolverReply(f"unsupported model value {sx!r}")


def parse_reply(text: str) -> tuple[str, dict[str, Fraction] | None]:
    exprs = parse_sexprs(text)
    if not exprs or exprs[0] not in ("sat", "unsat", "unknown"):
        raise MalformedSolverReply(f"unexpected solver output: {text[:200]!r}")
    status = exprs[0]
    if status != "sat":
        return status, None
    if len(exprs) < 2 or not isinstance(exprs[1], list):
        raise MalformedSolverReply("sat without a model")
    body = exprs[1]
    if body and body[0] == "model":
        body = body[1:]
    model = {}
    for d in body:
        if not (isinstance(d, list) and len(d) == 5 and d[0] == "define-fun"):
            raise MalformedSolverReply(f"bad model entry {d!r}")
        name = _unquote(d[1])
        if d[3] in ("Real", "Int"):
            model[name] = value_of(d[4])
    return status, model


class SmtSolver:
    """Runs a solver executable once per query on a full SMT-LIB script."""

    def __init__(self, path: str | None = None, args: list[str] | None = None,
                 timeout: float | None = 30.0):
        path = path or os.environ.get("CPSP_SOLVER") or "z3"
        resolved = shutil.which(path)
        if resolved is None:
            raise SolverUnavailable(f"solver executable {path!r} not found")
        self.path = resolved
        if args is None:
            base = os.path.basename(resolved)
            if base.startswith("z3"):
                args = ["-in", "-smt2"]
            elif base.startswith("cvc"):
                args = ["--lang", "smt2", "--incremental"]
            else:
                args = []
        self.args = args
        self.timeout = timeout
        self.calls = 0

    def run(self, script: str) -> tuple[str, dict[str, Fraction] | None]:
        self.calls += 1
        try:
            proc = subprocess.run([self.path, *self.args], input=script,
                                  capture_output=True, text=True,
                                  timeout=self.timeout)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise SolverUnavailable(str(exc)) from exc
        out = proc.stdout
        # unsat/unknown make get-model fail; that error is expected
        if proc.returncode not in (0, 1) and not out.strip():
            raise SolverUnavailable(
                f"solver exited with {proc.returncode}: {proc.stderr.strip()}")
        first = out.strip().split(None, 1)
        if first and first[0] in ("unsat", "unknown"):
            return first[0], None
        return parse_reply(out)
