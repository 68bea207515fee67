from __future__ import annotations

import shutil

import pytest

from cpsp import terms as T
from cpsp.intruder import _chain
from cpsp.lang import Role, parse_role
from cpsp.strands import Strand, TimedBundle, instantiate
from cpsp.topology import AgentId, Topology

VERIFIER = parse_role("role verifier() { new c; send c # tv = cur; recv c # cur <= tv + 4; }")
PROVER = parse_role("role prover() { recv x; send x; }")

# the role's time variable is stamped per strand; reference sets call it tv
RENAME = {"tv@s1": "tv"}

HAS_Z3 = shutil.which("z3") is not None
needs_z3 = pytest.mark.skipif(not HAS_Z3, reason="z3 executable not on PATH")


def _forward(sid: int, owner: str, m) -> Strand:
    return Strand(sid, owner, "intruder", Role("forward", (), _chain(("-", m), ("+", m))))


def honest_pair() -> tuple[TimedBundle, dict[str, object]]:
    """Verifier p1 and echo prover p2 exchanging one nonce directly."""
    b = TimedBundle()
    b = b.add_strand(instantiate(VERIFIER, "p1", 1))
    b = b.add_strand(instantiate(PROVER, "p2", 2))
    c = T.nonce("c@s1")
    b = b.with_subst(T.Substitution({"x@s2": c}))
    nodes = {}
    for sid, pos, tv in [(1, (1,), "tv1"), (1, (1, 1), "tv2"), (1, (1, 1, 1), "tv3"),
                         (2, (1,), "tv4"), (2, (1, 1), "tv5")]:
        b, nodes[tv] = b.add_node(sid, pos, tv)
    return b, nodes


def ex3_bundle() -> TimedBundle:
    b, n = honest_pair()
    b = b.add_msg(n["tv2"], n["tv4"]).add_msg(n["tv5"], n["tv3"])
    return b


def ex4_bundle() -> TimedBundle:
    """The relay: ti1 near p1 and ti2 near p2 forward both ways."""
    b, n = honest_pair()
    c = T.nonce("c@s1")
    for sid, owner, tvs in [(3, "ti1", ("tv6", "tv7")), (4, "ti2", ("tv8", "tv9")),
                            (5, "ti2", ("tv10", "tv11")), (6, "ti1", ("tv12", "tv13"))]:
        b = b.add_strand(_forward(sid, owner, c))
        b, n[tvs[0]] = b.add_node(sid, (1,), tvs[0])
        b, n[tvs[1]] = b.add_node(sid, (1, 1), tvs[1])
    for x, y in [("tv2", "tv6"), ("tv7", "tv8"), ("tv9", "tv4"),
                 ("tv5", "tv10"), ("tv11", "tv12"), ("tv13", "tv3")]:
        b = b.add_msg(n[x], n[y])
    return b


def ex4_topology(extra=()) -> Topology:
    agents = (AgentId("p1"), AgentId("p2"), AgentId("ti1", "intruder"),
              AgentId("ti2", "intruder"))
    return Topology(agents, tuple(extra))


@pytest.fixture
def ex3():
    return ex3_bundle()


@pytest.fixture
def ex4():
    return ex4_bundle()


# --- acceptance reporting --------------------------------------------------

ACCEPTANCE: list[str] = []


def record(criterion: int, title: str, ok: bool, detail: str) -> None:
    """Log one acceptance line; the terminal summary prints them all."""
    line = f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {title} ({detail})"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
