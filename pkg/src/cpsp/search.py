"""Forward symbolic search for timing attacks.

Strands advance one command at a time. New, send and conditional steps run
eagerly in strand order; only receives branch, both over which strand moves
and over the ways the intruder can produce the expected message. Receives
are discharged by symbolic deduction against a shared knowledge pool under
the co-located intruder configuration, so intruder strands are only built
once an attack is found.
"""

from __future__ import annotations

import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterator

from . import terms as T
from .intruder import (DeducibilityConstraint, Derivation, KnowledgeEntry,
                       Materializer, derive, graft, ground)
from .lang import (And, Complete, Goal, If, New, Nil, Not, Reach, Recv,
                   Scenario, Send, TimeCmp, UnifTest, command_at)
from .strands import (Node, Report, TimedBundle, instantiate,
                      timed_constraint_set, wellformed)
from .terms import Message, Substitution
from .timealg.expr import TimeConstraint, TVar, negate, subst_cur
from .timealg.store import (ConstraintStore, Oracle, Sat, Unknown, Unsat,
                            verify_model)
from .topology import Topology, all_constraints, canonical_extension

__all__ = ["Goal", "Complete", "Reach", "SearchConfig", "SearchState",
           "AttackTrace", "SearchOutcome", "LimitExceeded", "initial_state",
           "successors", "prune", "search", "find_attack"]


class LimitExceeded(RuntimeError):
    """The search was cut off before it could decide."""


@dataclass(frozen=True)
class SearchConfig:
    max_depth: int = 64
    max_states: int = 100_000
    backend: str = "auto"
    solver_path: str | None = None
    solver_timeout: float | None = 30.0
    workers: int = 1
    seed: int = 0
    prune: bool = True
    first_limit: int = 8


@dataclass(frozen=True)
class Pending:
    """A variable the intruder may still choose, with its delivery context."""
    var: str
    pool: tuple[KnowledgeEntry, ...]
    recipient: str
    recv_tvar: str


@dataclass(frozen=True)
class SearchState:
    bundle: TimedBundle
    frontier: tuple[tuple[int, tuple[int, ...] | None], ...]
    pool: tuple[KnowledgeEntry, ...]
    store: ConstraintStore
    pending: tuple[Pending, ...] = ()
    disunifs: tuple[tuple[Message, Message], ...] = ()
    deliveries: tuple[tuple[Node, Derivation], ...] = ()
    resolved: tuple[tuple[tuple[str, str], Derivation], ...] = ()
    next_text: int = 1

    @property
    def subst(self) -> Substitution:
        return self.bundle.subst

    @property
    def depth(self) -> int:
        return len(self.bundle.nodes)

    def next_pos(self, sid: int):
        return dict(self.frontier)[sid]

    def advance(self, sid: int, pos) -> "SearchState":
        return replace(self, frontier=tuple((s, pos if s == sid else p)
                                            for s, p in self.frontier))


@dataclass
class Stats:
    states: int = 0
    solver_calls: int = 0
    smt_calls: int = 0
    max_depth: int = 0
    passes: int = 0
    # goal checks the backend could not decide; these block a "safe" verdict
    unknown: int = 0
    wall_ms: float = 0.0

    def as_dict(self) -> dict:
        return {"states": self.states, "solver_calls": self.solver_calls,
                "smt_calls": self.smt_calls, "max_depth": self.max_depth,
                "passes": self.passes, "unknown": self.unknown, "wall_ms": round(self.wall_ms, 3)}


@dataclass
class AttackTrace:
    bundle: TimedBundle
    model: dict[str, Fraction]
    goal: Goal
    topology: Topology
    stats: Stats
    report: Report | None = None


@dataclass
class SearchOutcome:
    attack: AttackTrace | None
    exhaustive: bool
    stats: Stats

    @property
    def exit_code(self) -> int:
        if self.attack is not None:
            return 0
        return 1 if self.exhaustive else 2


# --- initial state ---------------------------------------------------------

def search_topology(sc: Scenario) -> Topology:
    """Participant-only topology; the co-located intruders add nothing to it."""
    return sc.participant_topology()


def initial_state(sc: Scenario) -> SearchState:
    b = TimedBundle()
    frontier = []
    for i, run in enumerate(sc.runs, start=1):
        s = instantiate(sc.roles[run.role], run.agent, i, run.args)
        b = b.add_strand(s)
        frontier.append((i, None if isinstance(s.role.body, Nil) else (1,)))
    pool = tuple(KnowledgeEntry(m) for m in sc.intruder_knowledge())
    store = ConstraintStore().add_all(all_constraints(search_topology(sc)), "topology")
    return SearchState(b, tuple(frontier), pool, store)


# --- helpers ---------------------------------------------------------------

def _disunifs_hold(st: SearchState, s: Substitution) -> bool:
    return all(s.apply(a) != s.apply(b) for a, b in st.disunifs)


def _settle(subst: Substitution, pending: tuple[Pending, ...],
            resolved: tuple, cons: tuple) -> Iterator[tuple]:
    """Re-solve deferred targets whose variable became bound."""
    for i, p in enumerate(pending):
        if p.var not in subst:
            continue
        rest = pending[:i] + pending[i + 1:]
        dc = DeducibilityConstraint(p.pool, subst.apply(T.Var(p.var)),
                                    p.recipient, p.recv_tvar)
        for r in derive(dc, subst):
            new = tuple(Pending(v, p.pool, p.recipient, p.recv_tvar)
                        for v in sorted(r.residuals))
            yield from _settle(r.subst, rest + new,
                               resolved + (((p.recv_tvar, p.var), r.derivation),),
                               cons + r.constraints)
        return
    yield subst, pending, resolved, cons


def _rebind(st: SearchState, subst: Substitution, tag: str = "intruder",
            extra_pending: tuple[Pending, ...] = (),
            cons: tuple = ()) -> list[SearchState]:
    """States for a new substitution, settling deferred targets."""
    out = []
    for s, pending, resolved, cs in _settle(subst, st.pending + extra_pending,
                                             st.resolved, tuple(cons)):
        if not _disunifs_hold(st, s):
            continue
        out.append(replace(st, bundle=st.bundle.with_subst(s), pending=pending,
                           resolved=resolved,
                           store=st.store.add_all(cs, tag)))
    return out


def _annotate(st: SearchState, node: Node, tc) -> SearchState:
    if tc is None:
        return st
    return replace(st, store=st.store.add(subst_cur(tc, TVar(node.tvar)),
                                          "role-annotation"))


def _place(st: SearchState, sid: int, pos) -> tuple[SearchState, Node]:
    b, n = st.bundle.add_node(sid, pos)
    st = replace(st, bundle=b)
    if len(pos) > 1:
        parent = b.node_at(sid, pos[:-1])
        if parent is not None:
            st = replace(st, store=st.store.add(
                TimeConstraint(TVar(n.tvar), ">=", TVar(parent.tvar)), "seq-edge"))
    return st, n


def _next(c, pos):
    return pos + (1,) if not isinstance(c.rest, Nil) else None


def _key_vars(m: Message) -> list[str]:
    out: list[str] = []
    for x in T.subterms(m):
        if isinstance(x, (T.SK, T.PK)) and isinstance(x.agent, T.Var):
            if x.agent.name not in out:
                out.append(x.agent.name)
    return out


def _guard_cases(g, truth: bool, s: Substitution, tvar: str
                 ) -> list[tuple[Substitution, list, list]]:
    """Ways for guard g to evaluate to truth: (subst, constraints, disunifs)."""
    match g:
        case UnifTest(a, b):
            if truth:
                u = T.unify(a, b, s)
                return [] if u is None else [(u, [], [])]
            if s.apply(a) == s.apply(b):
                return []
            return [(s, [], [(a, b)])]
        case TimeCmp(tc):
            tc = subst_cur(tc, TVar(tvar))
            if truth:
                return [(s, [tc], [])]
            return [(s, [alt], []) for alt in negate(tc)]
        case Not(x):
            return _guard_cases(x, not truth, s, tvar)
        case And(x, y):
            if truth:
                out = []
                for s1, c1, d1 in _guard_cases(x, True, s, tvar):
                    for s2, c2, d2 in _guard_cases(y, True, s1, tvar):
                        out.append((s2, c1 + c2, d1 + d2))
                return out
            # not x, or (x and not y): disjoint cases
            out = list(_guard_cases(x, False, s, tvar))
            for s1, c1, d1 in _guard_cases(x, True, s, tvar):
                for s2, c2, d2 in _guard_cases(y, False, s1, tvar):
                    out.append((s2, c1 + c2, d1 + d2))
            return out
    raise TypeError(g)


# --- successor relation ----------------------------------------------------

@dataclass
class _Ctx:
    sc: Scenario
    oracle: Oracle
    agents: list[str] = field(default_factory=list)
    # drop unsatisfiable branches as soon as they appear
    pruning: bool = True


def _eager(st: SearchState, ctx: _Ctx) -> list[tuple[SearchState, bool]] | None:
    """Run the first non-receive step, if any strand has one."""
    for sid, pos in st.frontier:
        if pos is None:
            continue
        c = command_at(st.bundle.strand(sid).role, pos)
        match c:
            case New():
                st1, _ = _place(st, sid, pos)
                return [(st1.advance(sid, _next(c, pos)), False)]
            case Send(m, tc):
                out = []
                substs = [st.subst]
                for v in _key_vars(st.subst.apply(m)):
                    substs = [s.bind(v, T.name(a)) for s in substs for a in ctx.agents]
                for s in substs:
                    cands = [st] if s == st.subst else _rebind(st, s)
                    for st1 in cands:
                        st1, n = _place(st1, sid, pos)
                        st1 = _annotate(st1, n, tc)
                        st1 = replace(st1, pool=st1.pool + (
                            KnowledgeEntry(m, n.agent, n.tvar),))
                        check = tc is not None or s != st.subst
                        out.append((st1.advance(sid, _next(c, pos)), check))
                return out
            case If(g, tc, then, orelse):
                out = []
                st0, n = _place(st, sid, pos)
                st0 = _annotate(st0, n, tc)
                for truth, branch, step in ((True, then, 1), (False, orelse, 2)):
                    for s, cons, dis in _guard_cases(g, truth, st0.subst, n.tvar):
                        st1 = replace(st0, disunifs=st0.disunifs + tuple(dis))
                        b = st1.bundle
                        for tc1 in cons:
                            b = b.add_extra(tc1, "guard")
                        st1 = replace(st1, bundle=b,
                                      store=st1.store.add_all(cons, "guard"))
                        nxt = None if isinstance(branch, Nil) else pos + (step,)
                        for st2 in _rebind(st1, s):
                            # record the branch taken even if it is empty
                            out.append((st2.advance(sid, nxt), True))
                return out
    return None


def _receives(st: SearchState, ctx: _Ctx) -> list[tuple[SearchState, bool]]:
    out = []
    for sid, pos in st.frontier:
        if pos is None:
            continue
        c = command_at(st.bundle.strand(sid).role, pos)
        assert isinstance(c, Recv)
        st0, n = _place(st, sid, pos)
        st0 = _annotate(st0, n, c.tc)
        dc = DeducibilityConstraint(st0.pool, st0.subst.apply(c.msg), n.agent, n.tvar)
        for r in derive(dc, st0.subst):
            new = tuple(Pending(v, st0.pool, n.agent, n.tvar) for v in sorted(r.residuals))
            st1 = replace(st0, deliveries=st0.deliveries + ((n, r.derivation),))
            for st2 in _rebind(st1, r.subst, extra_pending=new, cons=r.constraints):
                out.append((st2.advance(sid, _next(c, pos)), True))
    return out


def successors(st: SearchState, ctx: _Ctx) -> list[SearchState]:
    """Successor states, dropping those whose store is unsatisfiable.

    The solver is consulted only after receives, conditionals and timed
    annotations; a plain send or fresh value only adds a one-sided bound on
    a new variable and cannot make a satisfiable store unsatisfiable.
    """
    kids = _eager(st, ctx)
    if kids is None:
        kids = _receives(st, ctx)
    if not ctx.pruning:
        return [k for k, _ in kids]
    return [k for k, check in kids if not (check and prune(k, ctx.oracle))]


def prune(st: SearchState, oracle: Oracle) -> bool:
    """True iff the state's constraint store is unsatisfiable."""
    v = oracle.check(st.store)
    return isinstance(v, Unsat)


# --- goals -----------------------------------------------------------------

def goal_reached(st: SearchState, goal: Goal) -> bool:
    if not goal.conditions:
        return False
    for cond in goal.conditions:
        strands = [s for s in st.bundle.strands if s.agent == cond.participant]
        match cond:
            case Complete():
                if not strands:
                    return False
                done = dict(st.frontier)
                if any(done[s.sid] is not None for s in strands):
                    return False
            case Reach(_, pos):
                if not any(st.bundle.node_at(s.sid, pos) is not None for s in strands):
                    return False
    return True


def _close(st: SearchState) -> SearchState | None:
    """Bind every still-free intruder choice to fresh text."""
    s, k = st.subst, st.next_text
    for p in st.pending:
        if p.var not in s:
            s = s.bind(p.var, T.text(f"i@{k}"))
            k += 1
    for st1 in _rebind(replace(st, next_text=k), s):
        return st1
    return None


def check_goal(st: SearchState, ctx: _Ctx, stats: Stats) -> AttackTrace | None:
    closed = _close(st)
    if closed is None:
        return None
    goal = ctx.sc.goal
    store = closed.store.add_all(goal.constraints, "goal")
    v = ctx.oracle.check(store)
    if isinstance(v, Unknown):
        stats.unknown += 1
    if not isinstance(v, Sat):
        return None
    return build_attack(closed, ctx)


def build_attack(st: SearchState, ctx: _Ctx) -> AttackTrace | None:
    sc = ctx.sc
    b = st.bundle
    for tc in sc.goal.constraints:
        b = b.add_extra(tc, "goal")
    mat = Materializer(b, b.subst)
    resolved: dict[str, dict[str, Derivation]] = {}
    for (tvar, var), d in st.resolved:
        resolved.setdefault(tvar, {})[var] = d
    for node, d in st.deliveries:
        d = ground(graft(d, resolved.get(node.tvar, {})), b.subst)
        mat.deliver(d, node)
    final = mat.bundle
    topo = canonical_extension(sc.participant_topology())
    report = wellformed(final, topo, ctx.oracle)
    if not isinstance(report.verdict, Sat):
        return None
    model = dict(report.verdict.model)
    if not verify_model(timed_constraint_set(final, topo), model):
        return None
    return AttackTrace(final, model, sc.goal, topo, Stats(), report)


# --- drivers ---------------------------------------------------------------

def _dfs(root: SearchState, ctx: _Ctx, limit: int, cfg: SearchConfig,
         stats: Stats) -> tuple[AttackTrace | None, bool]:
    """Depth-limited DFS; returns (attack, truncated)."""
    truncated = False
    stack = [root]
    while stack:
        st = stack.pop()
        stats.states += 1
        stats.max_depth = max(stats.max_depth, st.depth)
        if stats.states > cfg.max_states:
            raise LimitExceeded(f"more than {cfg.max_states} states")
        if goal_reached(st, ctx.sc.goal):
            attack = check_goal(st, ctx, stats)
            if attack is not None:
                return attack, truncated
        kids = successors(st, ctx)
        if not kids:
            continue
        if st.depth >= limit:
            truncated = True
            continue
        stack.extend(reversed(kids))
    return None, truncated


def _oracle(cfg: SearchConfig) -> Oracle:
    return Oracle(cfg.backend, cfg.solver_path, cfg.solver_timeout)


def _context(sc: Scenario, cfg: SearchConfig) -> _Ctx:
    return _Ctx(sc, _oracle(cfg), [a.name for a in sc.participants], cfg.prune)


def _iddfs(roots: list[SearchState], ctx: _Ctx, cfg: SearchConfig,
           stats: Stats) -> tuple[AttackTrace | None, bool]:
    limit = min(cfg.first_limit, cfg.max_depth)
    while True:
        stats.passes += 1
        any_truncated = False
        for root in roots:
            attack, truncated = _dfs(root, ctx, limit, cfg, stats)
            if attack is not None:
                return attack, True
            any_truncated |= truncated
        if not any_truncated:
            return None, True
        if limit >= cfg.max_depth:
            return None, False
        limit = min(limit * 2, cfg.max_depth)


def _worker(args) -> tuple[AttackTrace | None, bool, dict, str | None]:
    sc, cfg, roots = args
    stats = Stats()
    ctx = _context(sc, cfg)
    try:
        attack, exhaustive = _iddfs(roots, ctx, cfg, stats)
        err = None
    except LimitExceeded as exc:
        attack, exhaustive, err = None, False, str(exc)
    stats.solver_calls, stats.smt_calls = ctx.oracle.calls, ctx.oracle.smt_calls
    return attack, exhaustive, stats.as_dict(), err


def _split_roots(st: SearchState, ctx: _Ctx, n: int, stats: Stats) -> list[SearchState]:
    """Breadth-first expansion until there are at least n subtrees."""
    frontier = [st]
    while 0 < len(frontier) < n:
        nxt = []
        grew = False
        for s in frontier:
            stats.states += 1
            if goal_reached(s, ctx.sc.goal):
                nxt.append(s)
                continue
            kids = successors(s, ctx)
            grew |= bool(kids)
            nxt.extend(kids)
        if not grew:
            break
        frontier = nxt
    return frontier


def search(sc: Scenario, cfg: SearchConfig | None = None) -> SearchOutcome:
    cfg = cfg or SearchConfig()
    t0 = time.perf_counter()
    stats = Stats()
    ctx = _context(sc, cfg)
    root = initial_state(sc)
    if cfg.prune and prune(root, ctx.oracle):
        stats.wall_ms = (time.perf_counter() - t0) * 1000
        stats.solver_calls = ctx.oracle.calls
        return SearchOutcome(None, True, stats)
    workers = max(1, cfg.workers)
    if workers == 1:
        try:
            attack, exhaustive = _iddfs([root], ctx, cfg, stats)
        except LimitExceeded:
            attack, exhaustive = None, False
        stats.solver_calls, stats.smt_calls = ctx.oracle.calls, ctx.oracle.smt_calls
    else:
        roots = _split_roots(root, ctx, workers, stats)
        chunks = [roots[i::workers] for i in range(workers)]
        chunks = [c for c in chunks if c]
        attack, exhaustive = None, True
        with ProcessPoolExecutor(max_workers=len(chunks)) as ex:
            results = list(ex.map(_worker, [(sc, cfg, c) for c in chunks]))
        stats.solver_calls, stats.smt_calls = ctx.oracle.calls, ctx.oracle.smt_calls
        for a, exh, st, _ in results:
            stats.states += st["states"]
            stats.solver_calls += st["solver_calls"]
            stats.smt_calls += st["smt_calls"]
            stats.max_depth = max(stats.max_depth, st["max_depth"])
            stats.passes = max(stats.passes, st["passes"])
            stats.unknown += st["unknown"]
            if a is not None and attack is None:
                attack = a
            exhaustive &= exh
    stats.wall_ms = (time.perf_counter() - t0) * 1000
    if attack is not None:
        attack.stats = stats
    exhaustive = exhaustive and not stats.unknown
    return SearchOutcome(attack, exhaustive or attack is not None, stats)


def find_attack(sc: Scenario, cfg: SearchConfig | None = None) -> AttackTrace | None:
    out = search(sc, cfg)
    if out.attack is None and not out.exhaustive:
        raise LimitExceeded("search limits reached without a verdict")
    return out.attack


def random_execution(sc: Scenario, rng: random.Random, max_steps: int = 64,
                     cfg: SearchConfig | None = None
                     ) -> tuple[TimedBundle, list[tuple[Node, Derivation]]] | None:
    """A random maximal run of the scenario's strands.

    Returns the participant-only bundle and the ground derivation feeding
    each receive, or None if the walk ends in an unsatisfiable store.
    """
    ctx = _context(sc, cfg or SearchConfig())
    st = initial_state(sc)
    for _ in range(max_steps):
        kids = successors(st, ctx)
        if not kids:
            break
        st = rng.choice(kids)
    closed = _close(st)
    if closed is None or not isinstance(ctx.oracle.check(closed.store), Sat):
        return None
    resolved: dict[str, dict[str, Derivation]] = {}
    for (tvar, var), d in closed.resolved:
        resolved.setdefault(tvar, {})[var] = d
    b = closed.bundle
    dels = [(n, ground(graft(d, resolved.get(n.tvar, {})), b.subst))
            for n, d in closed.deliveries]
    return b, dels
