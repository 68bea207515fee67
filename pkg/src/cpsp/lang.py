"""Timed protocol roles, positions, and the scenario file format.

Surface syntax::

    role verifier(P) {
      new v;
      send v # t = cur;
      recv v # cur <= t + 4;
    }

    scenario edf {
      participants p1, p2;
      topology { td(p1,p2) > 0; }
      kp key(k);
      run p1: verifier(p2);
      goal complete(p1) with td(p1,p2) > 4, td(p2,p1) > 4;
    }

A conditional ends its branch: no command may follow an ``if`` block.
Position 1 addresses the first command of a role and ``pos.1``/``pos.2``
its successor/else-branch; the empty position addresses the role entry.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Union

from . import terms as T
from .terms import Message
from .timealg.expr import (BinOp, Ceil, Cur, Dist, Floor, NonLinear, Num,
                           TimeConstraint, TimeExpr, TVar, check_linear)
from .topology import AgentId, Topology, canonical_extension

Position = tuple[int, ...]


# --- AST -------------------------------------------------------------------

@dataclass(frozen=True)
class Nil:
    pass


@dataclass(frozen=True)
class New:
    var: str
    rest: "Command" = Nil()


@dataclass(frozen=True)
class Send:
    msg: Message
    tc: TimeConstraint | None = None
    rest: "Command" = Nil()


@dataclass(frozen=True)
class Recv:
    msg: Message
    tc: TimeConstraint | None = None
    rest: "Command" = Nil()


@dataclass(frozen=True)
class UnifTest:
    lhs: Message
    rhs: Message


@dataclass(frozen=True)
class TimeCmp:
    tc: TimeConstraint


@dataclass(frozen=True)
class And:
    left: "BoolExpr"
    right: "BoolExpr"


@dataclass(frozen=True)
class Not:
    arg: "BoolExpr"


BoolExpr = Union[UnifTest, TimeCmp, And, Not]


@dataclass(frozen=True)
class If:
    guard: BoolExpr
    tc: TimeConstraint | None = None
    then: "Command" = Nil()
    orelse: "Command" = Nil()


Command = Union[Nil, New, Send, Recv, If]


@dataclass(frozen=True)
class Role:
    name: str
    params: tuple[str, ...]
    body: Command

    def time_vars(self) -> set[str]:
        out = set()
        for _, c in walk(self.body):
            for tc in command_constraints(c):
                out |= {a.name for a in _tvars(tc)}
        return out


def _tvars(tc: TimeConstraint):
    from .timealg.expr import constraint_atoms
    return [a for a in constraint_atoms(tc) if isinstance(a, TVar)]


def guard_constraints(b: BoolExpr) -> Iterator[TimeConstraint]:
    match b:
        case TimeCmp(tc):
            yield tc
        case And(x, y):
            yield from guard_constraints(x)
            yield from guard_constraints(y)
        case Not(x):
            yield from guard_constraints(x)


def command_constraints(c: Command) -> Iterator[TimeConstraint]:
    match c:
        case Send(_, tc) | Recv(_, tc):
            if tc is not None:
                yield tc
        case If(g, tc):
            if tc is not None:
                yield tc
            yield from guard_constraints(g)


class InvalidPosition(KeyError):
    pass


def walk(body: Command, pos: Position = (1,)) -> Iterator[tuple[Position, Command]]:
    """(position, command) for every non-nil command reachable from body."""
    match body:
        case Nil():
            return
        case New(_, rest) | Send(_, _, rest) | Recv(_, _, rest):
            yield pos, body
            yield from walk(rest, pos + (1,))
        case If(_, _, then, orelse):
            yield pos, body
            yield from walk(then, pos + (1,))
            yield from walk(orelse, pos + (2,))


def positions(r: Role) -> set[Position]:
    return {()} | {p for p, _ in walk(r.body)}


def command_at(r: Role, pos: Position) -> Command:
    if pos == ():
        return r.body
    if not pos or pos[0] != 1:
        raise InvalidPosition(pos)
    c = r.body
    for step in pos[1:]:
        c = successor(c, step)
    if isinstance(c, Nil):
        raise InvalidPosition(pos)
    return c


def successor(c: Command, step: int) -> Command:
    match c, step:
        case (New(_, rest) | Send(_, _, rest) | Recv(_, _, rest)), 1:
            return rest
        case If(_, _, then, _), 1:
            return then
        case If(_, _, _, orelse), 2:
            return orelse
    raise InvalidPosition(step)


def format_position(pos: Position) -> str:
    return ".".join(map(str, pos)) if pos else "eps"


def parse_position(s: str) -> Position:
    if s in ("", "eps"):
        return ()
    return tuple(int(x) for x in s.split("."))


# --- scenario --------------------------------------------------------------

@dataclass(frozen=True)
class Complete:
    participant: str


@dataclass(frozen=True)
class Reach:
    participant: str
    pos: Position


@dataclass(frozen=True)
class Goal:
    conditions: tuple[Complete | Reach, ...] = ()
    constraints: tuple[TimeConstraint, ...] = ()


@dataclass(frozen=True)
class Run:
    agent: str
    role: str
    args: tuple[Message, ...] = ()


@dataclass
class Scenario:
    name: str
    participants: list[AgentId]
    topology: Topology
    roles: dict[str, Role]
    runs: list[Run]
    kp: list[Message]
    goal: Goal
    intruders: list[AgentId] = field(default_factory=list)

    @property
    def explicit_intruders(self) -> bool:
        return bool(self.intruders)

    def participant_topology(self) -> Topology:
        return self.topology.restrict([a.name for a in self.participants])

    def intruder_knowledge(self) -> list[Message]:
        """K_P: listed keys plus every participant's public key."""
        out = list(self.kp)
        for a in self.participants:
            pk = T.PK(T.name(a.name))
            if pk not in out:
                out.append(pk)
        return out


# --- errors ----------------------------------------------------------------

class ParseError(ValueError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {msg}")
        self.line, self.col = line, col


class ScopeError(ParseError):
    pass


class UnknownRole(ValueError):
    pass


class DuplicateAgent(ValueError):
    pass


# --- tokenizer -------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<num>\d+(?:\.\d+)*)
  | (?P<id>[A-Za-z_][A-Za-z0-9_@']*)
  | (?P<op>:=:|<=|>=|[(){}\[\],;#:<>=+\-*/&!])
""", re.VERBOSE)


@dataclass(frozen=True)
class Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Tok]:
    out, pos, line, lstart = [], 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - lstart + 1)
        kind = m.lastgroup
        s = m.group()
        if kind != "ws":
            out.append(Tok(kind, s, line, pos - lstart + 1))
        nl = s.count("\n")
        if nl:
            line += nl
            lstart = pos + s.rfind("\n") + 1
        pos = m.end()
    out.append(Tok("eof", "", line, pos - lstart + 1))
    return out


_CONST_CTORS = {"nonce": "nonce", "key": "symkey", "name": "participant",
                "text": "text"}


class Parser:
    def __init__(self, text: str, agents: set[str] | None = None):
        self.toks = tokenize(text)
        self.i = 0
        # bare identifiers naming these agents parse as name constants
        self.agents = agents or set()

    # helpers
    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: Tok | None = None) -> ParseError:
        t = tok or self.tok
        return ParseError(msg, t.line, t.col)

    def at(self, *texts: str) -> bool:
        return self.tok.kind in ("op", "id") and self.tok.text in texts

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Tok:
        if not self.at(text):
            raise self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.i += 1
        return t

    def ident(self) -> str:
        if self.tok.kind != "id":
            raise self.error(f"expected identifier, found {self.tok.text!r}")
        s = self.tok.text
        self.i += 1
        return s

    # messages
    def message(self) -> Message:
        t = self.tok
        if self.accept("["):
            items = [self.message()]
            while self.accept(","):
                items.append(self.message())
            self.expect("]")
            return T.tup(*items)
        if t.kind != "id":
            raise self.error(f"expected a message, found {t.text!r}")
        word = self.ident()
        if self.at("("):
            if word in _CONST_CTORS:
                self.expect("(")
                n = self.ident()
                self.expect(")")
                kind = _CONST_CTORS[word]
                if kind == "participant" and n.startswith("ti_"):
                    kind = "intruder"
                return T.Const(n, kind)
            if word == "var":
                self.expect("(")
                n = self.ident()
                self.expect(")")
                return T.Var(n)
            if word in ("sk", "pk"):
                self.expect("(")
                a = self.message()
                self.expect(")")
                return T.SK(a) if word == "sk" else T.PK(a)
            if word == "enc":
                self.expect("(")
                m = self.message()
                self.expect(",")
                k = self.message()
                self.expect(")")
                return T.Enc(m, k)
            raise self.error(f"unknown message constructor {word!r}", t)
        if word in self.agents:
            return T.name(word)
        return T.Var(word)

    # time expressions
    def texpr(self) -> TimeExpr:
        e = self.tterm()
        while self.at("+", "-"):
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.tterm())
        return e

    def tterm(self) -> TimeExpr:
        e = self.tfactor()
        while self.at("*", "/"):
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.tfactor())
        return e

    def tfactor(self) -> TimeExpr:
        t = self.tok
        if self.accept("-"):
            return BinOp("-", Num(0), self.tfactor())
        if self.accept("("):
            e = self.texpr()
            self.expect(")")
            return e
        if t.kind == "num":
            self.i += 1
            if t.text.count(".") > 1:
                raise self.error(f"bad number {t.text!r}", t)
            v = Num(Fraction(t.text))
            return v
        if t.kind == "id":
            w = self.ident()
            if w == "cur":
                return Cur()
            if w in ("floor", "ceil") and self.accept("("):
                e = self.texpr()
                self.expect(")")
                return Floor(e) if w == "floor" else Ceil(e)
            if w == "td" and self.accept("("):
                a = self.ident()
                self.expect(",")
                b = self.ident()
                self.expect(")")
                return Dist(a, b)
            return TVar(w)
        raise self.error(f"expected a time expression, found {t.text!r}")

    def constraint(self) -> TimeConstraint:
        start = self.tok
        lhs = self.texpr()
        if not self.at("=", ">=", ">", "<", "<="):
            raise self.error("expected a comparison operator")
        rel = self.tok.text
        self.i += 1
        rhs = self.texpr()
        try:
            check_linear(lhs)
            check_linear(rhs)
        except NonLinear as exc:
            raise self.error(str(exc), start) from None
        return TimeConstraint(lhs, rel, rhs)

    # boolean guards
    def bexpr(self) -> BoolExpr:
        b = self.bterm()
        while self.accept("&"):
            b = And(b, self.bterm())
        return b

    def bterm(self) -> BoolExpr:
        if self.accept("!"):
            return Not(self.bterm())
        mark = self.i
        if self.accept("("):
            try:
                b = self.bexpr()
                self.expect(")")
                return b
            except ParseError:
                self.i = mark
        try:
            m1 = self.message()
            if self.accept(":=:"):
                return UnifTest(m1, self.message())
        except ParseError:
            pass
        self.i = mark
        return TimeCmp(self.constraint())

    # roles
    def role(self) -> Role:
        self.expect("role")
        rname = self.ident()
        self.expect("(")
        params = []
        if not self.at(")"):
            params.append(self.ident())
            while self.accept(","):
                params.append(self.ident())
        self.expect(")")
        self.expect("{")
        body = self.body(set(params))
        self.expect("}")
        return Role(rname, tuple(params), body)

    def body(self, bound: set[str]) -> Command:
        if self.at("}") or self.tok.kind == "eof":
            return Nil()
        t = self.tok
        if self.accept("new"):
            v = self.ident()
            self.expect(";")
            return New(v, self.body(bound | {v}))
        if self.at("send", "recv"):
            word = self.ident()
            m = self.message()
            tc = self.constraint() if self.accept("#") else None
            self.expect(";")
            if word == "send":
                self._check_scope(m, bound, t)
                return Send(m, tc, self.body(bound))
            return Recv(m, tc, self.body(bound | T.vars_of(m)))
        if self.accept("if"):
            g = self.bexpr()
            self._check_guard(g, bound, t)
            tc = self.constraint() if self.accept("#") else None
            self.expect("{")
            then = self.body(bound)
            self.expect("}")
            orelse: Command = Nil()
            if self.accept("else"):
                self.expect("{")
                orelse = self.body(bound)
                self.expect("}")
            if not self.at("}") and self.tok.kind != "eof":
                raise self.error("no command may follow a conditional block")
            return If(g, tc, then, orelse)
        raise self.error(f"expected a command, found {t.text!r}")

    def _check_scope(self, m: Message, bound: set[str], t: Tok) -> None:
        free = T.vars_of(m) - bound
        if free:
            raise ScopeError(f"unbound variable(s) {', '.join(sorted(free))}",
                             t.line, t.col)

    def _check_guard(self, g: BoolExpr, bound: set[str], t: Tok) -> None:
        match g:
            case UnifTest(a, b):
                self._check_scope(a, bound, t)
                self._check_scope(b, bound, t)
            case And(x, y):
                self._check_guard(x, bound, t)
                self._check_guard(y, bound, t)
            case Not(x):
                self._check_guard(x, bound, t)

    # scenarios
    def scenario_block(self, roles: dict[str, Role]) -> Scenario:
        self.expect("scenario")
        sname = self.ident()
        self.expect("{")
        participants: list[AgentId] = []
        intruders: list[AgentId] = []
        topo: list[TimeConstraint] = []
        kp: list[Message] = []
        runs: list[tuple[Run, Tok]] = []
        goal = Goal()
        seen: set[str] = set()
        while not self.accept("}"):
            t = self.tok
            if self.at("participants", "intruders"):
                word = self.ident()
                names = [self.ident()]
                while self.accept(","):
                    names.append(self.ident())
                self.expect(";")
                for n in names:
                    if n in seen:
                        raise DuplicateAgent(f"agent {n!r} declared twice")
                    seen.add(n)
                    kind = "participant" if word == "participants" else "intruder"
                    (participants if kind == "participant" else intruders).append(
                        AgentId(n, kind))
                self.agents = set(seen)
            elif self.accept("topology"):
                self.expect("{")
                while not self.accept("}"):
                    topo.append(self.constraint())
                    self.expect(";")
                self.accept(";")
            elif self.accept("kp"):
                kp.append(self.message())
                while self.accept(","):
                    kp.append(self.message())
                self.expect(";")
            elif self.accept("run"):
                agent = self.ident()
                self.expect(":")
                rname = self.ident()
                self.expect("(")
                args = []
                if not self.at(")"):
                    args.append(self.message())
                    while self.accept(","):
                        args.append(self.message())
                self.expect(")")
                self.expect(";")
                runs.append((Run(agent, rname, tuple(args)), t))
            elif self.accept("goal"):
                conds = [self.goal_condition()]
                while self.accept("&"):
                    conds.append(self.goal_condition())
                extra = []
                if self.accept("with"):
                    extra.append(self.constraint())
                    while self.accept(","):
                        extra.append(self.constraint())
                self.expect(";")
                goal = Goal(tuple(conds), tuple(extra))
            else:
                raise self.error(f"unexpected {t.text!r} in scenario")
        pnames = {a.name for a in participants}
        for run, t in runs:
            if run.role not in roles:
                raise UnknownRole(f"{t.line}:{t.col}: run references undeclared role {run.role!r}")
            if run.agent not in pnames:
                raise ParseError(f"run agent {run.agent!r} is not a declared participant",
                                 t.line, t.col)
            if len(run.args) != len(roles[run.role].params):
                raise ParseError(f"role {run.role} expects {len(roles[run.role].params)} "
                                 f"argument(s)", t.line, t.col)
        for c in goal.conditions:
            if c.participant not in pnames:
                raise ParseError(f"goal mentions undeclared participant {c.participant!r}")
        try:
            topology = Topology(tuple(participants + intruders), tuple(topo))
            for tc in goal.constraints:
                Topology(tuple(participants + intruders), (tc,))
        except ValueError as exc:
            raise ParseError(str(exc)) from None
        if not intruders:
            topology = canonical_extension(topology)
        return Scenario(sname, participants, topology, dict(roles),
                        [r for r, _ in runs], kp, goal, intruders)

    def goal_condition(self) -> Complete | Reach:
        if self.accept("complete"):
            self.expect("(")
            p = self.ident()
            self.expect(")")
            return Complete(p)
        if self.accept("reach"):
            self.expect("(")
            p = self.ident()
            self.expect(",")
            t = self.tok
            if t.kind == "num":
                pos = parse_position(t.text)
            elif t.text == "eps":
                pos = ()
            else:
                raise self.error("expected a position")
            self.i += 1
            self.expect(")")
            return Reach(p, pos)
        raise self.error("expected complete(...) or reach(...)")


def parse_role(text: str) -> Role:
    """Parse either a full `role NAME(...) { ... }` or a bare command list."""
    p = Parser(text)
    if p.at("role"):
        r = p.role()
    else:
        body = p.body(set())
        r = Role("anonymous", (), body)
    if p.tok.kind != "eof":
        raise p.error(f"trailing input {p.tok.text!r}")
    return r


def parse_file(text: str) -> tuple[dict[str, Role], list[Scenario]]:
    p = Parser(text)
    roles: dict[str, Role] = {}
    scenarios: list[Scenario] = []
    while p.tok.kind != "eof":
        if p.at("role"):
            r = p.role()
            roles[r.name] = r
        elif p.at("scenario"):
            scenarios.append(p.scenario_block(roles))
        else:
            raise p.error(f"expected 'role' or 'scenario', found {p.tok.text!r}")
    return roles, scenarios


def parse_scenario(text: str, name: str | None = None) -> Scenario:
    _, scenarios = parse_file(text)
    if not scenarios:
        raise ParseError("no scenario block found")
    if name is None:
        return scenarios[0]
    for s in scenarios:
        if s.name == name:
            return s
    raise ParseError(f"no scenario named {name!r}")


# --- printing --------------------------------------------------------------

def format_message(m: Message) -> str:
    match m:
        case T.Const(n, kind):
            tag = {"nonce": "nonce", "symkey": "key", "participant": "name",
                   "intruder": "name", "text": "text"}[kind]
            return f"{tag}({n})"
        case T.Var(n):
            return n
        case T.SK(a):
            return f"sk({format_message(a)})"
        case T.PK(a):
            return f"pk({format_message(a)})"
        case T.Enc(p, k):
            return f"enc({format_message(p)}, {format_message(k)})"
        case T.Tuple(items):
            return "[" + ", ".join(format_message(i) for i in items) + "]"
    raise TypeError(m)


def format_guard(b: BoolExpr) -> str:
    match b:
        case UnifTest(x, y):
            return f"{format_message(x)} :=: {format_message(y)}"
        case TimeCmp(tc):
            return str(tc)
        case And(x, y):
            return f"{format_guard(x)} & {_paren_guard(y)}"
        case Not(x):
            return f"!{_paren_guard(x)}"
    raise TypeError(b)


def _paren_guard(b: BoolExpr) -> str:
    return f"({format_guard(b)})" if isinstance(b, (And, TimeCmp)) else format_guard(b)


def format_command(c: Command, with_rest: bool = False) -> str:
    """One-line rendering of a single command (without its continuation)."""
    match c:
        case Nil():
            return "nil"
        case New(v):
            return f"new {v}"
        case Send(m, tc) | Recv(m, tc):
            word = "send" if isinstance(c, Send) else "recv"
            s = f"{word} {format_message(m)}"
            return s + (f" # {tc}" if tc is not None else "")
        case If(g, tc):
            s = f"if {format_guard(g)}"
            return s + (f" # {tc}" if tc is not None else "")
    raise TypeError(c)


def format_body(c: Command, indent: int = 1) -> list[str]:
    pad = "  " * indent
    lines = []
    while True:
        match c:
            case Nil():
                return lines
            case New(_, rest) | Send(_, _, rest) | Recv(_, _, rest):
                lines.append(pad + format_command(c) + ";")
                c = rest
            case If(_, _, then, orelse):
                lines.append(pad + format_command(c) + " {")
                lines += format_body(then, indent + 1)
                lines.append(pad + "} else {")
                lines += format_body(orelse, indent + 1)
                lines.append(pad + "}")
                return lines


def format_role(r: Role) -> str:
    lines = [f"role {r.name}({', '.join(r.params)}) {{"]
    lines += format_body(r.body)
    lines.append("}")
    return "\n".join(lines) + "\n"


def format_scenario(s: Scenario) -> str:
    out = [format_role(r) for r in s.roles.values()]
    lines = [f"scenario {s.name} {{"]
    if s.participants:
        lines.append("  participants " + ", ".join(a.name for a in s.participants) + ";")
    if s.intruders:
        lines.append("  intruders " + ", ".join(a.name for a in s.intruders) + ";")
    user = s.topology.constraints
    if s.topology.canonical:
        user = s.participant_topology().constraints
    lines.append("  topology {")
    for tc in user:
        lines.append(f"    {tc};")
    lines.append("  }")
    if s.kp:
        lines.append("  kp " + ", ".join(format_message(m) for m in s.kp) + ";")
    for r in s.runs:
        lines.append(f"  run {r.agent}: {r.role}("
                     + ", ".join(format_message(a) for a in r.args) + ");")
    if s.goal.conditions:
        conds = []
        for c in s.goal.conditions:
            if isinstance(c, Complete):
                conds.append(f"complete({c.participant})")
            else:
                conds.append(f"reach({c.participant}, {format_position(c.pos)})")
        g = "  goal " + " & ".join(conds)
        if s.goal.constraints:
            g += " with " + ", ".join(str(tc) for tc in s.goal.constraints)
        lines.append(g + ";")
    lines.append("}")
    return "\n".join(out) + "\n" + "\n".join(lines) + "\n"
