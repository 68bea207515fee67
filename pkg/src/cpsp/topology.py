"""Symbolic network topology over td(a,b) travel-time atoms."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations

from .timealg.expr import Dist, Num, TimeConstraint, add, constraint_atoms


@dataclass(frozen=True, slots=True)
class AgentId:
    name: str
    kind: str = "participant"  # or "intruder"

    def __str__(self) -> str:
        return self.name


def canonical_intruder(participant: str) -> str:
    return f"ti_{participant}"


@dataclass(frozen=True)
class Topology:
    agents: tuple[AgentId, ...] = ()
    constraints: tuple[TimeConstraint, ...] = ()
    canonical: bool = False

    def __post_init__(self) -> None:
        names = [a.name for a in self.agents]
        if len(set(names)) != len(names):
            raise ValueError("duplicate agent names in topology")
        known = set(names)
        for tc in self.constraints:
            for a in constraint_atoms(tc):
                if isinstance(a, Dist) and not {a.src, a.dst} <= known:
                    raise ValueError(f"{a.name} mentions an unregistered agent")

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.agents]

    @property
    def participants(self) -> list[str]:
        return [a.name for a in self.agents if a.kind == "participant"]

    @property
    def intruders(self) -> list[str]:
        return [a.name for a in self.agents if a.kind == "intruder"]

    def restrict(self, names) -> "Topology":
        """Sub-topology on the given agents, keeping constraints that fit."""
        names = set(names)
        keep = tuple(tc for tc in self.constraints
                     if all(not isinstance(a, Dist) or {a.src, a.dst} <= names
                            for a in constraint_atoms(tc)))
        return Topology(tuple(a for a in self.agents if a.name in names), keep,
                        self.canonical)

    def with_constraints(self, extra) -> "Topology":
        return Topology(self.agents, self.constraints + tuple(extra), self.canonical)


def pair_atoms(t: Topology) -> list[Dist]:
    return [Dist(a, b) for a, b in permutations(t.names, 2)]


def nonnegativity(t: Topology) -> list[TimeConstraint]:
    return [TimeConstraint(d, ">=", Num(0)) for d in pair_atoms(t)]


def triangle_axioms(t: Topology) -> list[TimeConstraint]:
    """td(a,c) <= td(a,b) + td(b,c) for every ordered triple of distinct agents."""
    return [TimeConstraint(Dist(a, c), "<=", add(Dist(a, b), Dist(b, c)))
            for a, b, c in permutations(t.names, 3)]


def axioms(t: Topology) -> list[TimeConstraint]:
    return nonnegativity(t) + triangle_axioms(t)


def all_constraints(t: Topology) -> list[TimeConstraint]:
    return list(t.constraints) + axioms(t)


def canonical_extension(t: Topology) -> Topology:
    """Add one co-located intruder per participant, mirroring participant distances.

    An intruder hands a message to itself at no cost; this is what lets the
    intruder's own rule strands chain without delay.
    """
    if any(a.kind != "participant" for a in t.agents):
        raise ValueError("canonical extension expects a participant-only topology")
    parts = t.names
    if not parts:
        return t
    intr = [AgentId(canonical_intruder(p), "intruder") for p in parts]
    zero = Num(0)
    extra = []
    for p in parts:
        ti = canonical_intruder(p)
        extra.append(TimeConstraint(Dist(p, ti), "=", zero))
        extra.append(TimeConstraint(Dist(ti, p), "=", zero))
        extra.append(TimeConstraint(Dist(ti, ti), "=", zero))
    for p, q in permutations(parts, 2):
        extra.append(TimeConstraint(Dist(canonical_intruder(p), canonical_intruder(q)),
                                    "=", Dist(p, q)))
    return Topology(t.agents + tuple(intr), t.constraints + tuple(extra), True)


def concrete(names_kinds: list[tuple[str, str]],
             dist: dict[tuple[str, str], Fraction]) -> Topology:
    """Topology fixing every listed td atom to a number."""
    agents = tuple(AgentId(n, k) for n, k in names_kinds)
    cs = tuple(TimeConstraint(Dist(a, b), "=", Num(v)) for (a, b), v in dist.items())
    return Topology(agents, cs)
