from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from cpsp.timealg.expr import Dist, Num, TimeConstraint
from cpsp.timealg.store import Sat, Unsat, builtin_check
from cpsp.topology import (AgentId, Topology, all_constraints, canonical_extension,
                           canonical_intruder, concrete, triangle_axioms)


def parts(*names):
    return Topology(tuple(AgentId(n) for n in names))


def test_axiom_counts():
    t = parts("p1", "p2", "p3")
    assert len(triangle_axioms(t)) == 3 * 2 * 1
    assert len(all_constraints(t)) == 6 + 6


def test_unregistered_agent_rejected():
    with pytest.raises(ValueError):
        Topology((AgentId("p1"),), (TimeConstraint(Dist("p1", "q"), ">", Num(1)),))


def test_canonical_extension_shape():
    t = parts("p1", "p2").with_constraints([TimeConstraint(Dist("p1", "p2"), ">", Num(4))])
    c = canonical_extension(t)
    assert c.canonical
    assert c.intruders == [canonical_intruder("p1"), canonical_intruder("p2")]
    text = {str(tc) for tc in c.constraints}
    assert "td(p1,ti_p1) = 0" in text and "td(ti_p1,ti_p1) = 0" in text
    assert "td(ti_p1,ti_p2) = td(p1,p2)" in text
    assert isinstance(builtin_check(all_constraints(c)), Sat)


def test_canonical_extension_needs_participants_only():
    with pytest.raises(ValueError):
        canonical_extension(Topology((AgentId("p1"), AgentId("ti", "intruder"))))


def test_restrict_drops_foreign_constraints():
    t = parts("p1", "p2", "p3").with_constraints(
        [TimeConstraint(Dist("p1", "p3"), ">", Num(4)),
         TimeConstraint(Dist("p1", "p2"), "<", Num(1))])
    r = t.restrict(["p1", "p2"])
    assert r.names == ["p1", "p2"] and len(r.constraints) == 1


def test_triangle_violation_detected():
    t = concrete([("a", "participant"), ("b", "participant"), ("c", "intruder")],
                 {("a", "b"): Fraction(5), ("a", "c"): Fraction(1), ("c", "b"): Fraction(1)})
    assert isinstance(builtin_check(all_constraints(t)), Unsat)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=2, max_size=4))
def test_grid_distances_satisfy_axioms(points):
    names = [f"a{i}" for i in range(len(points))]
    dist = {(a, b): Fraction(abs(p[0] - q[0]) + abs(p[1] - q[1]))
            for a, p in zip(names, points) for b, q in zip(names, points) if a != b}
    t = concrete([(n, "participant") for n in names], dist)
    assert isinstance(builtin_check(all_constraints(t)), Sat)
