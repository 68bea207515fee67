"""Timed intruder deduction.

Two realizations of the same rules:

* `derive` works symbolically on a knowledge pool and returns unifiers plus
  the timing side conditions (one per pool entry actually used);
* `materialize` turns a derivation into explicit intruder strands owned by
  the recipient's co-located intruder, with broadcast forward strands from
  every other source's intruder.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import terms as T
from .lang import Command, Nil, Recv, Role, Send
from .strands import Node, Strand, TimedBundle
from .terms import Message, Substitution
from .timealg.expr import Dist, TimeConstraint, TVar, add
from .topology import canonical_intruder

RULES = ("text", "flush", "forward", "concat", "decompose", "key", "encrypt",
         "decrypt")

PUBLIC_KINDS = ("text", "participant", "intruder")

Origin = tuple[str, str]  # (source agent, send time variable)


@dataclass(frozen=True, slots=True)
class KnowledgeEntry:
    msg: Message
    source: str | None = None  # None for initial knowledge
    tvar: str | None = None

    @property
    def origin(self) -> Origin | None:
        if self.source is None:
            return None
        return (self.source, self.tvar)


@dataclass(frozen=True)
class DeducibilityConstraint:
    pool: tuple[KnowledgeEntry, ...]
    target: Message
    recipient: str
    recv_tvar: str


@dataclass(frozen=True)
class Derivation:
    rule: str  # one of RULES, or "var" for a deferred variable target
    msg: Message
    premises: tuple["Derivation", ...] = ()
    entry: KnowledgeEntry | None = None
    index: int | None = None  # component taken by decompose

    def leaves(self) -> list[KnowledgeEntry]:
        if self.entry is not None:
            return [self.entry]
        return [e for p in self.premises for e in p.leaves()]

    def origins(self) -> frozenset[Origin]:
        return frozenset(e.origin for e in self.leaves() if e.origin is not None)

    def deferred(self) -> set[str]:
        if self.rule == "var":
            return {self.msg.name}
        return {v for p in self.premises for v in p.deferred()}

    def size(self) -> int:
        return 1 + sum(p.size() for p in self.premises)


@dataclass(frozen=True)
class DeriveResult:
    derivation: Derivation
    subst: Substitution
    origins: frozenset[Origin]
    residuals: frozenset[str]
    constraints: tuple[TimeConstraint, ...] = ()

    def __iter__(self):
        # unpacks as (derivation, substitution, constraints)
        return iter((self.derivation, self.subst, self.constraints))


def timing_constraints(origins: Iterable[Origin], recipient: str,
                       recv_tvar: str) -> tuple[TimeConstraint, ...]:
    """recv >= send + td(source, recipient) for every origin used.

    A message from the recipient itself reaches its own intruder at no cost.
    """
    out = []
    for src, tv in sorted(origins):
        rhs = TVar(tv) if src == recipient else add(TVar(tv), Dist(src, recipient))
        out.append(TimeConstraint(TVar(recv_tvar), ">=", rhs))
    return tuple(out)


# --- closure ---------------------------------------------------------------

@dataclass(frozen=True)
class ClosureEntry:
    msg: Message
    origins: frozenset[Origin]
    derivation: Derivation
    initial: bool = False  # initial knowledge, used by the key rule


def _dominated(cands: list[ClosureEntry], msg: Message, origins: frozenset) -> bool:
    return any(c.msg == msg and c.origins <= origins for c in cands)


def decompose_closure(pool: Iterable[KnowledgeEntry], s: Substitution,
                      ) -> list[ClosureEntry]:
    """Saturate under projection and decryption with a derivable inverse key."""
    out: list[ClosureEntry] = []
    for e in pool:
        m = s.apply(e.msg)
        origins = frozenset([e.origin]) if e.origin else frozenset()
        rule = "forward" if e.source is not None else "key"
        if not _dominated(out, m, origins):
            out.append(ClosureEntry(m, origins, Derivation(rule, m, entry=e),
                                    e.source is None))
    done: set[int] = set()
    changed = True
    while changed:
        changed = False
        i = 0
        while i < len(out):
            c = out[i]
            i += 1
            if id(c) in done:
                continue
            match c.msg:
                case T.Tuple(items):
                    done.add(id(c))
                    for j, item in enumerate(items):
                        if not _dominated(out, item, c.origins):
                            out.append(ClosureEntry(
                                item, c.origins,
                                Derivation("decompose", item, (c.derivation,), index=j)))
                            changed = True
                case T.Enc(payload, k):
                    try:
                        kinv = T.inverse_key(k)
                    except T.NotAKey:
                        done.add(id(c))
                        continue
                    key = _ground_derivation(kinv, s, out)
                    if key is None:
                        continue  # retry once more knowledge is available
                    done.add(id(c))
                    origins = c.origins | key.origins()
                    if not _dominated(out, payload, origins):
                        out.append(ClosureEntry(
                            payload, origins,
                            Derivation("decrypt", payload, (key, c.derivation))))
                        changed = True
                case _:
                    done.add(id(c))
    return out


def _ground_derivation(target: Message, s: Substitution,
                       closure: list[ClosureEntry]) -> Derivation | None:
    """First derivation of target that binds no variables."""
    for r in _solve(s.apply(target), s, closure):
        if r[1] == s and not r[3]:
            return r[0]
    return None


# --- symbolic derivation ---------------------------------------------------

_Partial = tuple[Derivation, Substitution, frozenset, frozenset]


def _order(c: ClosureEntry) -> int:
    return {"forward": 0, "decompose": 1, "decrypt": 2}.get(c.derivation.rule, 3)


def _dedup(results: list[_Partial]) -> list[_Partial]:
    """Keep the first result per (subst, residuals) among minimal origin sets."""
    kept: list[_Partial] = []
    for r in results:
        if any(k[1] == r[1] and k[3] == r[3] and k[2] <= r[2] for k in kept):
            continue
        kept = [k for k in kept if not (k[1] == r[1] and k[3] == r[3] and r[2] < k[2])]
        kept.append(r)
    return kept


def _solve(t: Message, s: Substitution, closure: list[ClosureEntry]) -> list[_Partial]:
    t = s.apply(t)
    if isinstance(t, T.Var):
        return [(Derivation("var", t), s, frozenset(), frozenset([t.name]))]
    out: list[_Partial] = []
    if isinstance(t, T.Const) and t.kind in PUBLIC_KINDS:
        out.append((Derivation("text", t), s, frozenset(), frozenset()))
    entries = sorted((c for c in closure if not c.initial or c.derivation.rule != "key"),
                     key=_order)
    split = [c for c in entries if _order(c) < 2]
    later = [c for c in entries if _order(c) >= 2]
    out += _unify_entries(t, s, split)
    match t:
        case T.Tuple(items):
            partial: list[_Partial] = [((), s, frozenset(), frozenset())]
            for item in items:
                nxt = []
                for ds, s1, o1, r1 in partial:
                    for d, s2, o2, r2 in _solve(item, s1, closure):
                        nxt.append((ds + (d,), s2, o1 | o2, r1 | r2))
                partial = _dedup(nxt)
            for ds, s1, o, r in partial:
                out.append((Derivation("concat", s1.apply(t), ds), s1, o, r))
    out += _unify_entries(t, s, later)
    match t:
        case T.Enc(payload, k):
            for dk, s1, o1, r1 in _solve(k, s, closure):
                for dp, s2, o2, r2 in _solve(payload, s1, closure):
                    out.append((Derivation("encrypt", s2.apply(t), (dk, dp)),
                                s2, o1 | o2, r1 | r2))
    for c in closure:
        if c.initial and c.derivation.rule == "key":
            u = T.unify(t, c.msg, s)
            if u is not None:
                out.append((c.derivation, u, c.origins, frozenset()))
    return _dedup(out)


def _unify_entries(t: Message, s: Substitution,
                   entries: list[ClosureEntry]) -> list[_Partial]:
    out = []
    for c in entries:
        m = s.apply(c.msg)
        if isinstance(m, T.Var):
            continue
        u = T.unify(t, m, s)
        if u is not None:
            out.append((c.derivation, u, c.origins, frozenset()))
    return out


def derive(dc: DeducibilityConstraint, s: Substitution | None = None
           ) -> list[DeriveResult]:
    """All most-general ways the intruder can deliver dc.target under s.

    Each result carries its unifier, the pool origins it depends on and the
    resulting timing constraints; variables left as targets are reported
    as residuals for the caller to defer.
    """
    s = s if s is not None else Substitution()
    closure = decompose_closure(dc.pool, s)
    results = []
    for d, u, origins, residuals in _solve(dc.target, s, closure):
        results.append(DeriveResult(
            d, u, origins, residuals,
            timing_constraints(origins, dc.recipient, dc.recv_tvar)))
    return results


def derivable(pool: Iterable[KnowledgeEntry], target: Message) -> bool:
    """Ground derivability, ignoring timing."""
    dc = DeducibilityConstraint(tuple(pool), target, "_", "_")
    return any(not r.residuals for r in derive(dc))


def graft(d: Derivation, resolved: Mapping[str, Derivation]) -> Derivation:
    """Replace deferred variable leaves by their later derivations."""
    if d.rule == "var":
        sub = resolved.get(d.msg.name)
        return graft(sub, resolved) if sub is not None else d
    if not d.premises:
        return d
    return Derivation(d.rule, d.msg, tuple(graft(p, resolved) for p in d.premises),
                      d.entry, d.index)


def ground(d: Derivation, s: Substitution) -> Derivation:
    return Derivation(d.rule, s.apply(d.msg), tuple(ground(p, s) for p in d.premises),
                      d.entry, d.index)


# --- explicit intruder strands ---------------------------------------------

def _chain(*cmds) -> Command:
    """Linear program from (sign, message) pairs."""
    body: Command = Nil()
    for kind, m in reversed(cmds):
        body = Send(m, None, body) if kind == "+" else Recv(m, None, body)
    return body


@dataclass
class Materializer:
    """Adds intruder strands to a bundle; broadcast strands are shared."""
    bundle: TimedBundle
    subst: Substitution = field(default_factory=Substitution)
    broadcasts: dict[Node, Node] = field(default_factory=dict)

    def _strand(self, owner: str, rule: str, cmds) -> list[Node]:
        sid = self.bundle.next_sid()
        role = Role(rule, (), _chain(*cmds))
        self.bundle = self.bundle.add_strand(Strand(sid, owner, "intruder", role))
        nodes, pos = [], (1,)
        for _ in cmds:
            self.bundle, n = self.bundle.add_node(sid, pos)
            nodes.append(n)
            pos = pos + (1,)
        return nodes

    def _edge(self, src: Node, dst: Node) -> None:
        self.bundle = self.bundle.add_msg(src, dst)

    def send_node(self, tvar: str) -> Node:
        for n in self.bundle.nodes:
            if n.tvar == tvar:
                return n
        raise KeyError(f"no node with time variable {tvar}")

    def broadcast(self, src: Node, m: Message) -> Node:
        """Forward strand of the sender's own intruder, re-sending m."""
        if src not in self.broadcasts:
            ti = canonical_intruder(src.agent)
            rcv, snd = self._strand(ti, "forward", [("-", m), ("+", m)])
            self._edge(src, rcv)
            self.broadcasts[src] = snd
        return self.broadcasts[src]

    def emit(self, d: Derivation, owner: str, recipient: str) -> Node:
        """A send node carrying d.msg, built at owner's location."""
        m = self.subst.apply(d.msg)
        match d.rule:
            case "forward":
                src = self.send_node(d.entry.tvar)
                return src if src.agent == recipient else self.broadcast(src, m)
            case "text" | "key":
                return self._strand(owner, d.rule, [("+", m)])[0]
            case "var":
                raise ValueError(f"variable {d.msg} was never resolved")
            case "decompose":
                tup = self.subst.apply(d.premises[0].msg)
                items = tup.items
                nodes = self._strand(owner, "decompose",
                                     [("-", tup)] + [("+", x) for x in items])
                self._edge(self.emit(d.premises[0], owner, recipient), nodes[0])
                return nodes[1 + d.index]
            case "concat":
                ins = [self.subst.apply(p.msg) for p in d.premises]
                nodes = self._strand(owner, "concat",
                                     [("-", x) for x in ins] + [("+", m)])
                for p, n in zip(d.premises, nodes):
                    self._edge(self.emit(p, owner, recipient), n)
                return nodes[-1]
            case "encrypt" | "decrypt":
                a, b = (self.subst.apply(p.msg) for p in d.premises)
                nodes = self._strand(owner, d.rule, [("-", a), ("-", b), ("+", m)])
                for p, n in zip(d.premises, nodes):
                    self._edge(self.emit(p, owner, recipient), n)
                return nodes[-1]
        raise ValueError(f"unknown rule {d.rule}")

    def deliver(self, d: Derivation, recv: Node) -> None:
        """Feed participant receive node recv through its own intruder."""
        p = recv.agent
        owner = canonical_intruder(p)
        top = self.emit(d, owner, p)
        if d.rule == "forward":
            m = self.subst.apply(d.msg)
            rcv, snd = self._strand(owner, "forward", [("-", m), ("+", m)])
            self._edge(top, rcv)
            top = snd
        self._edge(top, recv)


def materialize(d: Derivation, bundle: TimedBundle, recv: Node,
                subst: Substitution | None = None) -> TimedBundle:
    """Bundle extended with the intruder strands realizing d at recv."""
    m = Materializer(bundle, subst or bundle.subst)
    m.deliver(d, recv)
    return m.bundle
