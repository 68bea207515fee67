"""Timed strands, bundles, constraint extraction and well-formedness."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping

from . import terms as T
from .lang import (And, Command, If, New, Nil, Not, Position, Recv, Role, Send,
                   TimeCmp, UnifTest, command_at, format_command,
                   format_message, format_position, walk)
from .terms import Message, Substitution
from .timealg.expr import (Dist, TimeConstraint, TVar, add, holds, rename,
                           subst_cur)
from .timealg.store import ConstraintStore, Oracle, Sat, Unsat, Verdict
from .topology import Topology, all_constraints


class UnboundParam(ValueError):
    pass


@dataclass(frozen=True, slots=True, order=True)
class Node:
    agent: str
    strand: int
    pos: Position
    tvar: str

    def __str__(self) -> str:
        return f"<{self.agent},s{self.strand},{format_position(self.pos)}>@{self.tvar}"


@dataclass(frozen=True)
class Strand:
    """A role instance: the agent running it and its (instantiated) program.

    Intruder rule strands use the same representation with un-annotated
    send and receive commands, so positions work uniformly.
    """
    sid: int
    agent: str
    kind: str  # participant | intruder
    role: Role

    @property
    def is_intruder(self) -> bool:
        return self.kind == "intruder"


# --- instantiation ---------------------------------------------------------

def map_messages(c: Command, f: Callable[[Message], Message]) -> Command:
    def guard(b):
        match b:
            case UnifTest(x, y):
                return UnifTest(f(x), f(y))
            case And(x, y):
                return And(guard(x), guard(y))
            case Not(x):
                return Not(guard(x))
        return b
    match c:
        case Nil():
            return c
        case New(v, rest):
            return New(v, map_messages(rest, f))
        case Send(m, tc, rest):
            return Send(f(m), tc, map_messages(rest, f))
        case Recv(m, tc, rest):
            return Recv(f(m), tc, map_messages(rest, f))
        case If(g, tc, then, orelse):
            return If(guard(g), tc, map_messages(then, f), map_messages(orelse, f))
    raise TypeError(c)


def map_time(c: Command, f: Callable[[TimeConstraint], TimeConstraint]) -> Command:
    def guard(b):
        match b:
            case TimeCmp(tc):
                return TimeCmp(f(tc))
            case And(x, y):
                return And(guard(x), guard(y))
            case Not(x):
                return Not(guard(x))
        return b
    opt = lambda tc: None if tc is None else f(tc)
    match c:
        case Nil():
            return c
        case New(v, rest):
            return New(v, map_time(rest, f))
        case Send(m, tc, rest):
            return Send(m, opt(tc), map_time(rest, f))
        case Recv(m, tc, rest):
            return Recv(m, opt(tc), map_time(rest, f))
        case If(g, tc, then, orelse):
            return If(guard(g), opt(tc), map_time(then, f), map_time(orelse, f))
    raise TypeError(c)


def _fresh_news(c: Command, sid: int) -> Command:
    """Replace each `new v` by a strand-stamped nonce throughout its scope."""
    match c:
        case New(v, rest):
            fresh = f"{v}@s{sid}"
            s = Substitution({v: T.nonce(fresh)})
            return New(fresh, _fresh_news(map_messages(rest, s.apply), sid))
        case Send(m, tc, rest):
            return Send(m, tc, _fresh_news(rest, sid))
        case Recv(m, tc, rest):
            return Recv(m, tc, _fresh_news(rest, sid))
        case If(g, tc, then, orelse):
            return If(g, tc, _fresh_news(then, sid), _fresh_news(orelse, sid))
    return c


def instantiate(role: Role, agent: str, sid: int,
                args: Iterable[Message] = ()) -> Strand:
    """Bind parameters, stamp fresh nonces, rename variables per strand."""
    args = tuple(args)
    if len(args) != len(role.params):
        raise UnboundParam(f"role {role.name} takes {len(role.params)} "
                           f"argument(s), got {len(args)}")
    body = map_messages(role.body, Substitution(dict(zip(role.params, args))).apply)
    body = _fresh_news(body, sid)
    local = set()
    for _, c in walk(body):
        if isinstance(c, Recv):
            local |= T.vars_of(c.msg)
    body = map_messages(body, lambda m: T.rename_vars(m, {v: f"{v}@s{sid}" for v in local}))
    tvars = role.time_vars()
    body = map_time(body, lambda tc: rename(tc, {v: f"{v}@s{sid}" for v in tvars}))
    return Strand(sid, agent, "participant", Role(role.name, (), body))


# --- bundles ---------------------------------------------------------------

@dataclass(frozen=True)
class TimedBundle:
    """Persistent bundle; every extension returns a new value."""
    strands: tuple[Strand, ...] = ()
    nodes: tuple[Node, ...] = ()
    seq: tuple[tuple[Node, Node], ...] = ()
    msg: tuple[tuple[Node, Node], ...] = ()
    subst: Substitution = field(default_factory=Substitution)
    # branch and goal constraints recorded by the search, with source tags
    extra: tuple[tuple[TimeConstraint, str], ...] = ()
    next_tv: int = 1

    def strand(self, sid: int) -> Strand:
        for s in self.strands:
            if s.sid == sid:
                return s
        raise KeyError(sid)

    def add_strand(self, s: Strand) -> "TimedBundle":
        if any(x.sid == s.sid for x in self.strands):
            raise ValueError(f"strand id {s.sid} already used")
        return replace(self, strands=self.strands + (s,))

    def next_sid(self) -> int:
        return max((s.sid for s in self.strands), default=0) + 1

    def node_at(self, sid: int, pos: Position) -> Node | None:
        for n in self.nodes:
            if n.strand == sid and n.pos == pos:
                return n
        return None

    def add_node(self, sid: int, pos: Position,
                 tvar: str | None = None) -> tuple["TimedBundle", Node]:
        """Append the node at pos, with the ⇒ edge from its parent if present."""
        s = self.strand(sid)
        nxt = self.next_tv
        if tvar is None:
            taken = {m.tvar for m in self.nodes}
            while f"tv{nxt}" in taken:  # hand-named nodes may sit ahead of the counter
                nxt += 1
            tvar, nxt = f"tv{nxt}", nxt + 1
        n = Node(s.agent, sid, pos, tvar)
        seq = self.seq
        if len(pos) > 1:
            parent = self.node_at(sid, pos[:-1])
            if parent is not None:
                seq = seq + ((parent, n),)
        return replace(self, nodes=self.nodes + (n,), seq=seq, next_tv=nxt), n

    def add_msg(self, src: Node, dst: Node) -> "TimedBundle":
        return replace(self, msg=self.msg + ((src, dst),))

    def with_subst(self, s: Substitution) -> "TimedBundle":
        return replace(self, subst=s)

    def add_extra(self, tc: TimeConstraint, tag: str) -> "TimedBundle":
        return replace(self, extra=self.extra + ((tc, tag),))

    def command(self, n: Node) -> Command:
        return command_at(self.strand(n.strand).role, n.pos)

    def message(self, n: Node) -> Message | None:
        """The sent or received message at n under the bundle substitution."""
        c = self.command(n)
        if isinstance(c, (Send, Recv)):
            return self.subst.apply(c.msg)
        return None

    def is_intruder(self, n: Node) -> bool:
        return self.strand(n.strand).is_intruder

    def participant_nodes(self) -> list[Node]:
        return [n for n in self.nodes if not self.is_intruder(n)]


# --- constraint extraction -------------------------------------------------

def node_constraints(b: TimedBundle) -> list[tuple[TimeConstraint, str]]:
    """Constraints from annotations, ⇒ edges and → edges, in node order."""
    out: list[tuple[TimeConstraint, str]] = []
    for n in b.nodes:
        c = b.command(n)
        tc = getattr(c, "tc", None)
        if tc is not None:
            out.append((subst_cur(tc, TVar(n.tvar)), "role-annotation"))
    for n1, n2 in b.seq:
        out.append((TimeConstraint(TVar(n2.tvar), ">=", TVar(n1.tvar)), "seq-edge"))
    for n1, n2 in b.msg:
        out.append((TimeConstraint(TVar(n2.tvar), ">=",
                                   add(TVar(n1.tvar), Dist(n1.agent, n2.agent))),
                    "msg-edge"))
    out.extend(b.extra)
    return out


def timed_constraint_set(b: TimedBundle, t: Topology | None = None) -> ConstraintStore:
    store = ConstraintStore()
    for tc, tag in node_constraints(b):
        store = store.add(tc, tag)
    if t is not None:
        store = store.add_all(all_constraints(t), "topology")
    return store


# --- well-formedness -------------------------------------------------------

@dataclass
class Report:
    violations: list[tuple[int, str]] = field(default_factory=list)
    verdict: Verdict | None = None

    @property
    def ok(self) -> bool:
        return not self.violations

    def clauses(self) -> set[int]:
        return {c for c, _ in self.violations}


def _graph(b: TimedBundle) -> dict[Node, list[Node]]:
    g: dict[Node, list[Node]] = {n: [] for n in b.nodes}
    for x, y in b.seq + b.msg:
        g.setdefault(x, []).append(y)
    return g


def is_acyclic(b: TimedBundle) -> bool:
    g = _graph(b)
    state: dict[Node, int] = {}
    for root in g:
        if root in state:
            continue
        stack = [(root, iter(g[root]))]
        state[root] = 1
        while stack:
            n, it = stack[-1]
            for m in it:
                if state.get(m) == 1:
                    return False
                if m not in state:
                    state[m] = 1
                    stack.append((m, iter(g.get(m, []))))
                    break
            else:
                state[n] = 2
                stack.pop()
    return True


def eval_guard(g, subst: Substitution,
               model: Mapping | None, tvar: str) -> bool | None:
    """Truth of a guard on a ground bundle; None if it cannot be decided."""
    match g:
        case UnifTest(x, y):
            x, y = subst.apply(x), subst.apply(y)
            if x == y:
                return True
            if T.unify(x, y) is None:
                return False
            return None
        case TimeCmp(tc):
            if model is None:
                return None
            return holds(subst_cur(tc, TVar(tvar)), model)
        case And(x, y):
            a, c = eval_guard(x, subst, model, tvar), eval_guard(y, subst, model, tvar)
            if a is False or c is False:
                return False
            return None if a is None or c is None else True
        case Not(x):
            a = eval_guard(x, subst, model, tvar)
            return None if a is None else not a
    raise TypeError(g)


def wellformed(b: TimedBundle, t: Topology | None = None,
               oracle: Oracle | None = None) -> Report:
    r = Report()
    if not is_acyclic(b):
        r.violations.append((1, "graph has a cycle"))
    incoming: dict[Node, list[Node]] = {}
    for x, y in b.msg:
        incoming.setdefault(y, []).append(x)
        cx, cy = b.command(x), b.command(y)
        if not isinstance(cx, Send) or not isinstance(cy, Recv):
            r.violations.append((2, f"→ edge {x} -> {y} is not send-to-receive"))
        elif b.subst.apply(cx.msg) != b.subst.apply(cy.msg):
            r.violations.append((2, f"→ edge {x} -> {y} carries different messages"))
    for n in b.nodes:
        c = b.command(n)
        if isinstance(c, Recv) and len(incoming.get(n, [])) != 1:
            r.violations.append((2, f"receive {n} has {len(incoming.get(n, []))} "
                                    f"incoming → edges"))
    seq = set(b.seq)
    for n in b.nodes:
        if len(n.pos) > 1:
            parent = b.node_at(n.strand, n.pos[:-1])
            if parent is None or (parent, n) not in seq:
                r.violations.append((3, f"{n} lacks its ⇒ predecessor"))
    verdict = (oracle or Oracle()).check(timed_constraint_set(b, t))
    r.verdict = verdict
    model = verdict.model if isinstance(verdict, Sat) else None
    for n in b.nodes:
        c = b.command(n)
        if not isinstance(c, If):
            continue
        kids = [m for m in b.nodes if m.strand == n.strand and m.pos[:-1] == n.pos]
        if len(kids) > 1:
            r.violations.append((4, f"conditional {n} takes both branches"))
        elif kids:
            truth = eval_guard(c.guard, b.subst, model, n.tvar)
            if truth is not None and kids[0].pos[-1] != (1 if truth else 2):
                r.violations.append((4, f"conditional {n} takes the wrong branch"))
    if isinstance(verdict, Unsat):
        r.violations.append((5, "timed constraint set is unsatisfiable"))
    return r


# --- origination -----------------------------------------------------------

def node_messages(b: TimedBundle, n: Node) -> list[Message]:
    c = b.command(n)
    match c:
        case New(v):
            return [T.nonce(v)]
        case Send(m) | Recv(m):
            return [b.subst.apply(m)]
        case If(g):
            out = []
            def collect(x):
                match x:
                    case UnifTest(p, q):
                        out.extend([b.subst.apply(p), b.subst.apply(q)])
                    case And(p, q):
                        collect(p)
                        collect(q)
                    case Not(p):
                        collect(p)
            collect(g)
            return out
    return []


def reachable(b: TimedBundle, src: Node) -> set[Node]:
    g = _graph(b)
    seen, stack = {src}, [src]
    while stack:
        for m in g.get(stack.pop(), []):
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return seen


def origination_ok(b: TimedBundle) -> bool:
    for n in b.nodes:
        c = b.command(n)
        if not isinstance(c, New):
            continue
        fresh = T.nonce(c.var)
        reach = reachable(b, n)
        for m in b.nodes:
            if m in reach:
                continue
            if any(fresh in T.constants(x) for x in node_messages(b, m)):
                return False
    return True


# --- export ----------------------------------------------------------------

SCHEMA = 1


def node_label(b: TimedBundle, n: Node) -> str:
    c = b.command(n)
    match c:
        case Send(m):
            term = "+" + format_message(b.subst.apply(m))
        case Recv(m):
            term = "-" + format_message(b.subst.apply(m))
        case _:
            term = format_command(c)
    return f"{n.agent}:{term}@{n.tvar}"


def to_json(b: TimedBundle, t: Topology | None = None,
            model: Mapping | None = None, stats: Mapping | None = None,
            goal: str | None = None) -> dict:
    ids = {n: i for i, n in enumerate(b.nodes)}
    store = timed_constraint_set(b, t)
    return {
        "schema": SCHEMA,
        "strands": [{"id": s.sid, "agent": s.agent, "kind": s.kind,
                     "role": s.role.name} for s in b.strands],
        "nodes": [{"id": ids[n], "agent": n.agent, "strand": n.strand,
                   "pos": format_position(n.pos), "tvar": n.tvar,
                   "label": node_label(b, n)} for n in b.nodes],
        "seq_edges": [[ids[x], ids[y]] for x, y in b.seq],
        "msg_edges": [[ids[x], ids[y]] for x, y in b.msg],
        "constraints": [{"constraint": str(tc), "source": store.tag(tc) or "other"}
                        for tc in store],
        "model": None if model is None else {k: str(v) for k, v in sorted(model.items())},
        "goal": goal,
        "stats": dict(stats or {}),
    }


class SchemaMismatch(ValueError):
    pass


def _dot_id(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def json_to_dot(data: Mapping) -> str:
    if not isinstance(data, Mapping) or data.get("schema") != SCHEMA:
        raise SchemaMismatch(f"expected trace schema {SCHEMA}")
    try:
        lines = ["digraph bundle {", "  rankdir=TB;", "  node [shape=box];"]
        by_strand: dict[int, list] = {}
        for n in data["nodes"]:
            by_strand.setdefault(n["strand"], []).append(n)
        for s in data["strands"]:
            lines.append(f"  subgraph cluster_s{s['id']} {{")
            lines.append(f"    label={_dot_id(s['agent'] + ' (' + s['role'] + ')')};")
            if s["kind"] == "intruder":
                lines.append("    style=dashed;")
            for n in by_strand.get(s["id"], []):
                lines.append(f"    n{n['id']} [label={_dot_id(n['label'])}];")
            lines.append("  }")
        for x, y in data["seq_edges"]:
            lines.append(f"  n{x} -> n{y} [style=solid];")
        for x, y in data["msg_edges"]:
            lines.append(f"  n{x} -> n{y} [style=dashed];")
    except (KeyError, TypeError) as exc:
        raise SchemaMismatch(f"malformed trace: {exc}") from None
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_dot(b: TimedBundle, t: Topology | None = None) -> str:
    return json_to_dot(to_json(b, t))
