"""Restricted bundles, equivalence, and rebuilding bundles over co-located intruders.

A trial takes a participant execution, routes every delivered message
through randomly scattered intruders, then canonicalizes the result and
checks that participants observe the same bundle and that any timing that
worked with scattered intruders still works with co-located ones.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Sequence

from . import terms as T
from .intruder import Derivation, KnowledgeEntry, Materializer
from .lang import Command, Nil, Recv, Role, Scenario, Send
from .strands import Node, Strand, TimedBundle, timed_constraint_set
from .timealg.expr import Cur, Num, TimeConstraint, TVar
from .timealg.store import Oracle, Sat
from .topology import Topology, canonical_extension, concrete


class NonCompliantBundle(ValueError):
    """An intruder path does not have the send, intruders, receive shape."""


@dataclass(frozen=True)
class RestrictedBundle:
    nodes: frozenset[Node]
    seq: frozenset[tuple[Node, Node]]
    msg: frozenset[tuple[Node, Node]]


def _incoming(b: TimedBundle) -> dict[Node, list[Node]]:
    inc: dict[Node, list[Node]] = {}
    for x, y in b.msg:
        inc.setdefault(y, []).append(x)
    return inc


def restrict(b: TimedBundle, participants: Sequence[str] | None = None) -> RestrictedBundle:
    """Participant view: intruder activity collapses into direct edges."""
    if participants is None:
        keep = set(b.participant_nodes())
    else:
        keep = {n for n in b.nodes if n.agent in set(participants)}
    seq = frozenset((x, y) for x, y in b.seq if x in keep and y in keep)
    inc = _incoming(b)
    preds: dict[Node, list[Node]] = {}
    for x, y in b.seq:
        preds.setdefault(y, []).append(x)
    msg = set()
    for n in keep:
        if not isinstance(b.command(n), Recv):
            continue
        seen: set[Node] = set()
        stack = list(inc.get(n, []))
        while stack:
            m = stack.pop()
            if m in seen:
                continue
            seen.add(m)
            if m in keep:
                msg.add((m, n))
                continue
            stack.extend(inc.get(m, []))
            stack.extend(preds.get(m, []))
    return RestrictedBundle(frozenset(keep), seq, frozenset(msg))


def equivalent(b1: TimedBundle, t1: Topology, b2: TimedBundle, t2: Topology) -> bool:
    """Same participant view, compared over fixed participant node identities."""
    parts = sorted(set(t1.participants) | set(t2.participants))
    return restrict(b1, parts) == restrict(b2, parts)


# --- canonicalization ------------------------------------------------------

_SHAPES = {
    "text": "+", "key": "+", "flush": "-", "forward": "-+",
    "encrypt": "--+", "decrypt": "--+",
}


def _signs(c: Command) -> str:
    out = ""
    while not isinstance(c, Nil):
        if isinstance(c, Send):
            out += "+"
        elif isinstance(c, Recv):
            out += "-"
        else:
            return "?"
        c = c.rest
    return out


def check_shape(b: TimedBundle) -> None:
    """Raise NonCompliantBundle unless every intruder strand is a rule strand
    and every path into a participant receive runs through intruders only."""
    for s in b.strands:
        if not s.is_intruder:
            continue
        signs = _signs(s.role.body)
        rule = s.role.name
        ok = (_SHAPES.get(rule) == signs
              or (rule == "concat" and len(signs) >= 3 and signs == "-" * (len(signs) - 1) + "+")
              or (rule == "decompose" and len(signs) >= 3 and signs == "-" + "+" * (len(signs) - 1)))
        if not ok:
            raise NonCompliantBundle(f"intruder strand {s.sid} ({rule}) has shape {signs}")
    inc = _incoming(b)
    for x, y in b.msg:
        if not isinstance(b.command(x), Send) or not isinstance(b.command(y), Recv):
            raise NonCompliantBundle(f"edge {x} -> {y} is not send-to-receive")
    used = {x for x, _ in b.msg}
    for n in b.nodes:
        c = b.command(n)
        if isinstance(c, Recv) and len(inc.get(n, [])) != 1:
            raise NonCompliantBundle(f"receive {n} is not fed by exactly one send")
        if isinstance(c, Send) and b.is_intruder(n) and n not in used:
            raise NonCompliantBundle(f"intruder send {n} feeds no receive")


def extract_derivation(b: TimedBundle, src: Node) -> Derivation:
    """How the message sent at src was put together, back to participant sends."""
    inc = _incoming(b)
    m = b.message(src)
    if not b.is_intruder(src):
        return Derivation("forward", m, entry=KnowledgeEntry(m, src.agent, src.tvar))
    s = b.strand(src.strand)
    inputs = [n for n in sorted(b.nodes, key=lambda n: len(n.pos))
              if n.strand == s.sid and isinstance(b.command(n), Recv)]

    def premise(n: Node) -> Derivation:
        return extract_derivation(b, inc[n][0])

    match s.role.name:
        case "text":
            return Derivation("text", m)
        case "key":
            return Derivation("key", m, entry=KnowledgeEntry(m))
        case "forward":
            return premise(inputs[0])
        case "concat":
            return Derivation("concat", m, tuple(premise(n) for n in inputs))
        case "decompose":
            return Derivation("decompose", m, (premise(inputs[0]),),
                              index=len(src.pos) - 2)
        case "encrypt" | "decrypt":
            return Derivation(s.role.name, m, tuple(premise(n) for n in inputs))
    raise NonCompliantBundle(f"unknown intruder rule {s.role.name!r}")


def participant_skeleton(b: TimedBundle) -> TimedBundle:
    """Participant strands, nodes and ⇒ edges only."""
    keep = set(b.participant_nodes())
    return replace(b, strands=tuple(s for s in b.strands if not s.is_intruder),
                   nodes=tuple(n for n in b.nodes if n in keep),
                   seq=tuple(e for e in b.seq if e[0] in keep and e[1] in keep),
                   msg=())


def deliveries(b: TimedBundle) -> list[tuple[Node, Derivation]]:
    inc = _incoming(b)
    out = []
    for n in b.participant_nodes():
        if isinstance(b.command(n), Recv):
            out.append((n, extract_derivation(b, inc[n][0])))
    return out


def canonicalize(b1: TimedBundle) -> TimedBundle:
    """Rebuild every intruder path as broadcast-then-compose-at-destination."""
    check_shape(b1)
    mat = Materializer(participant_skeleton(b1), b1.subst)
    for n, d in deliveries(b1):
        mat.deliver(d, n)
    return mat.bundle


# --- scattered intruder placement ------------------------------------------

@dataclass
class Scatterer(Materializer):
    """Materializer that routes through randomly chosen explicit intruders."""
    intruders: list[str] = field(default_factory=list)
    rng: random.Random = field(default_factory=random.Random)
    max_hops: int = 2

    def _route(self, src: Node, m, hops: int) -> Node:
        node = src
        for _ in range(hops):
            ti = self.rng.choice(self.intruders)
            rcv, snd = self._strand(ti, "forward", [("-", m), ("+", m)])
            self._edge(node, rcv)
            node = snd
        return node

    def emit(self, d: Derivation, owner: str, recipient: str) -> Node:
        if d.rule == "forward":
            src = self.send_node(d.entry.tvar)
            return self._route(src, self.subst.apply(d.msg),
                               self.rng.randint(1, self.max_hops))
        # compose at a random intruder; premises gathered there
        return super().emit(d, self.rng.choice(self.intruders), recipient)

    def deliver(self, d: Derivation, recv: Node) -> None:
        top = self.emit(d, self.rng.choice(self.intruders), recv.agent)
        if self.rng.random() < 0.5:
            top = self._route(top, self.subst.apply(d.msg), 1)
        self._edge(top, recv)


def scatter(skeleton: TimedBundle, dels: Sequence[tuple[Node, Derivation]],
            intruders: Sequence[str], rng: random.Random,
            max_hops: int = 2) -> TimedBundle:
    sc = Scatterer(skeleton, skeleton.subst, intruders=list(intruders), rng=rng,
                   max_hops=max_hops)
    for n, d in dels:
        sc.deliver(d, n)
    return sc.bundle


# --- random instances ------------------------------------------------------

def grid_topology(participants: Sequence[str], intruders: Sequence[str],
                  rng: random.Random, size: int = 6) -> Topology:
    """Concrete distances from L1 distances between random grid points."""
    names = list(participants) + list(intruders)
    pts = {a: (rng.randint(0, size), rng.randint(0, size)) for a in names}
    dist = {}
    for a in names:
        for b in names:
            (x1, y1), (x2, y2) = pts[a], pts[b]
            dist[(a, b)] = Fraction(abs(x1 - x2) + abs(y1 - y2))
    kinds = [(p, "participant") for p in participants] + [(i, "intruder") for i in intruders]
    return concrete(kinds, dist)


def random_skeleton(participants: Sequence[str], rng: random.Random,
                    events: int = 5, keys: Sequence[T.Message] = (T.key("k"),),
                    ) -> tuple[TimedBundle, list[tuple[Node, Derivation]]]:
    """Participants exchanging fresh nonces that intruders forward or compose.

    Sends may carry a lower bound on their time and receives an upper bound,
    so some instances are unsatisfiable. Returns the participant-only bundle
    and the derivation feeding each receive.
    """
    progs: dict[str, list[tuple]] = {p: [] for p in participants}
    order: list[tuple[str, int]] = []
    sent: list[tuple[str, int]] = []
    for k in range(events):
        p = rng.choice(list(participants))
        if not sent or rng.random() < 0.45:
            lower = rng.choice([None, rng.randint(0, 6)])
            progs[p].append(("send", T.nonce(f"n{k}"), lower))
            sent.append((p, len(progs[p]) - 1))
        else:
            srcs = rng.sample(sent, k=min(len(sent), rng.randint(1, 3)))
            key = rng.choice(list(keys)) if rng.random() < 0.3 else None
            upper = rng.choice([None, rng.randint(2, 20)])
            progs[p].append(("recv", srcs, key, upper))
        order.append((p, len(progs[p]) - 1))

    def payload(srcs, key):
        m = T.tup(*(progs[a][i][1] for a, i in srcs))
        return m if key is None else T.Enc(m, key)

    b = TimedBundle()
    sids: dict[str, int] = {}
    for p in participants:
        body: Command = Nil()
        for ev in reversed(progs[p]):
            match ev:
                case ("send", n, lower):
                    body = Send(n, _bound(">=", lower), body)
                case ("recv", srcs, key, upper):
                    body = Recv(payload(srcs, key), _bound("<=", upper), body)
        sids[p] = len(sids) + 1
        b = b.add_strand(Strand(sids[p], p, "participant", Role(f"r_{p}", (), body)))
    nodes: dict[tuple[str, int], Node] = {}
    for p, i in order:
        b, nodes[(p, i)] = b.add_node(sids[p], (1,) * (i + 1))

    dels = []
    for p, i in order:
        ev = progs[p][i]
        if ev[0] != "recv":
            continue
        _, srcs, key, _ = ev
        leaves = []
        for src in srcs:
            n = nodes[src]
            m = b.message(n)
            leaves.append(Derivation("forward", m, entry=KnowledgeEntry(m, n.agent, n.tvar)))
        d = leaves[0] if len(leaves) == 1 else Derivation(
            "concat", T.tup(*(l.msg for l in leaves)), tuple(leaves))
        if key is not None:
            d = Derivation("encrypt", T.Enc(d.msg, key),
                           (Derivation("key", key, entry=KnowledgeEntry(key)), d))
        dels.append((nodes[(p, i)], d))
    return b, dels


def _bound(rel: str, value: int | None) -> TimeConstraint | None:
    return None if value is None else TimeConstraint(Cur(), rel, Num(value))


# --- trials ----------------------------------------------------------------

@dataclass
class TrialResult:
    equivalent: bool
    sat_scattered: bool
    sat_canonical: bool
    model_extends: bool
    intruders: int
    participants: int

    @property
    def passed(self) -> bool:
        if not self.equivalent:
            return False
        return not self.sat_scattered or (self.sat_canonical and self.model_extends)


def _participant_vars(b: TimedBundle) -> set[str]:
    return {n.tvar for n in b.participant_nodes()}


def run_trial(b1: TimedBundle, t1: Topology,
              canon: Callable[[TimedBundle], TimedBundle] = canonicalize,
              oracle: Oracle | None = None) -> TrialResult:
    """Canonicalize b1 and check both obligations against its topology t1."""
    oracle = oracle or Oracle("auto")
    b2 = canon(b1)
    t2 = canonical_extension(t1.restrict(t1.participants))
    eq = equivalent(b1, t1, b2, t2)
    v1 = oracle.check(timed_constraint_set(b1, t1))
    v2 = oracle.check(timed_constraint_set(b2, t2))
    extends = False
    if isinstance(v1, Sat):
        # participant times and participant distances carry over unchanged
        fixed = [TimeConstraint(TVar(v), "=", Num(v1.model.get(v, 0)))
                 for v in sorted(_participant_vars(b1))]
        store = timed_constraint_set(b2, t2).add_all(fixed, "fixed")
        extends = isinstance(oracle.check(store), Sat)
    return TrialResult(eq, isinstance(v1, Sat), isinstance(v2, Sat), extends,
                       len(t1.intruders), len(t1.participants))


def random_trial(rng: random.Random, max_participants: int = 3,
                 max_intruders: int = 4,
                 canon: Callable[[TimedBundle], TimedBundle] = canonicalize,
                 oracle: Oracle | None = None) -> TrialResult:
    parts = [f"p{i}" for i in range(1, rng.randint(1, max_participants) + 1)]
    intr = [f"ti{i}" for i in range(1, rng.randint(1, max_intruders) + 1)]
    t1 = grid_topology(parts, intr, rng)
    skel, dels = random_skeleton(parts, rng, events=rng.randint(2, 6))
    b1 = scatter(skel, dels, intr, rng)
    return run_trial(b1, t1, canon, oracle)


def scenario_trial(sc: Scenario, rng: random.Random,
                   canon: Callable[[TimedBundle], TimedBundle] = canonicalize,
                   oracle: Oracle | None = None) -> TrialResult | None:
    """Trial on a random complete execution of the scenario's runs.

    Returns None when the scenario declares no intruders (nothing to move).
    """
    from .search import random_execution
    intr = [a.name for a in sc.intruders]
    if not intr:
        return None
    parts = [a.name for a in sc.participants]
    oracle = oracle or Oracle("auto")
    declared = list(sc.topology.constraints)
    for _ in range(200):
        t1 = grid_topology(parts, intr, rng)
        if isinstance(oracle.check(list(t1.constraints) + declared), Sat):
            break
    else:
        return None
    ex = random_execution(sc, rng)
    if ex is None:
        return None
    skel, dels = ex
    b1 = scatter(skel, dels, intr, rng)
    return run_trial(b1, t1, canon, oracle)
