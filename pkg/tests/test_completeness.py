import random
from dataclasses import replace
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from conftest import ex3_bundle, ex4_bundle, ex4_topology, honest_pair

from cpsp import terms as T
from cpsp.completeness import (NonCompliantBundle, canonicalize, check_shape, equivalent,
                               random_trial, restrict, run_trial, scenario_trial)
from cpsp.cli import load
from cpsp.intruder import DeducibilityConstraint, KnowledgeEntry, derive, materialize
from cpsp.lang import parse_role
from cpsp.strands import TimedBundle, instantiate, timed_constraint_set
from cpsp.timealg.expr import Dist, Num, TimeConstraint
from cpsp.timealg.store import Oracle, Sat
from cpsp.topology import AgentId, Topology, canonical_extension


def _pairs(r):
    return {(x.tvar, y.tvar) for x, y in r.msg}


def test_relay_restricts_to_direct_exchange(ex4):
    r = restrict(ex4)
    assert len(r.nodes) == 5
    assert _pairs(r) == {("tv2", "tv4"), ("tv5", "tv3")}
    assert r == restrict(ex3_bundle())


def test_intruder_free_bundle_is_its_own_view(ex3):
    r = restrict(ex3)
    assert r.msg == frozenset(ex3.msg) and r.seq == frozenset(ex3.seq)
    assert restrict(canonicalize(ex3)) == r


def test_equivalence_is_reflexive_and_sees_ordering(ex3):
    t = Topology((AgentId("p1"), AgentId("p2")))
    assert equivalent(ex3, t, ex3, t)
    _, n = honest_pair()
    other = ex3_bundle().add_msg(n["tv2"], n["tv3"])
    assert not equivalent(ex3, t, other, t)


def test_canonical_relay_is_equivalent_and_inherits_models(ex4):
    legs = {("p1", "ti1"): 1, ("ti1", "ti2"): Fraction(1, 2), ("ti2", "p2"): 0,
            ("p2", "ti2"): 0, ("ti2", "ti1"): Fraction(1, 2), ("ti1", "p1"): 1}
    t1 = ex4_topology([TimeConstraint(Dist(a, b), "=", Num(v)) for (a, b), v in legs.items()])
    b2 = canonicalize(ex4)
    assert {s.agent for s in b2.strands if s.is_intruder} <= {"ti_p1", "ti_p2"}
    res = run_trial(ex4, t1, oracle=Oracle("builtin"))
    assert res.equivalent and res.sat_scattered and res.sat_canonical and res.model_extends


def _three_senders():
    """p1 and p2 each send a nonce; the intruder seals both under k for p3."""
    b = TimedBundle()
    b = b.add_strand(instantiate(parse_role("role a() { send nonce(c1); }"), "p1", 1))
    b = b.add_strand(instantiate(parse_role("role b() { send nonce(c2); }"), "p2", 2))
    b = b.add_strand(instantiate(
        parse_role("role c() { recv enc([nonce(c1), nonce(c2)], key(k)); }"), "p3", 3))
    b, s1 = b.add_node(1, (1,))
    b, s2 = b.add_node(2, (1,))
    b, rcv = b.add_node(3, (1,))
    c1, c2, k = T.nonce("c1"), T.nonce("c2"), T.key("k")
    pool = (KnowledgeEntry(c1, "p1", s1.tvar), KnowledgeEntry(c2, "p2", s2.tvar),
            KnowledgeEntry(k))
    res = derive(DeducibilityConstraint(pool, T.Enc(T.tup(c1, c2), k), "p3", rcv.tvar))
    best = min(res, key=lambda r: r.derivation.size)
    return materialize(best.derivation, b, rcv), s1, s2, rcv


def test_three_senders_compose_into_one_receive():
    b, s1, s2, rcv = _three_senders()
    r = restrict(b)
    assert r.msg == {(s1, rcv), (s2, rcv)}  # the key is intruder knowledge, no edge
    b2 = canonicalize(b)
    assert restrict(b2) == r


def test_bad_intruder_shape_rejected(ex4):
    check_shape(ex4)
    s = next(s for s in ex4.strands if s.is_intruder)
    liar = replace(s, role=replace(s.role, name="encrypt"))
    bad = replace(ex4, strands=tuple(liar if x is s else x for x in ex4.strands))
    with pytest.raises(NonCompliantBundle):
        check_shape(bad)
    _, n = honest_pair()
    with pytest.raises(NonCompliantBundle):
        check_shape(ex4.add_msg(n["tv2"], n["tv3"]))  # tv3 fed twice


def _drop_last_edge(b):
    b2 = canonicalize(b)
    return replace(b2, msg=b2.msg[:-1])


def test_broken_canonicalization_is_caught():
    rng = random.Random(11)
    results = [random_trial(rng, canon=_drop_last_edge, oracle=Oracle("builtin"))
               for _ in range(10)]
    assert not all(r.passed for r in results)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_random_scattered_bundles_canonicalize(seed):
    res = random_trial(random.Random(seed), oracle=Oracle("builtin"))
    assert res.passed, res


def test_scenario_trials_on_scattered_relay():
    sc = load("corpus/mafia-fraud-scattered.cpsp", None)
    rng = random.Random(5)
    results = [scenario_trial(sc, rng, oracle=Oracle("builtin")) for _ in range(5)]
    ran = [r for r in results if r is not None]
    assert ran and all(r.passed for r in ran)


def test_scenario_without_intruders_is_skipped():
    sc = load("corpus/mafia-fraud.cpsp", None)
    assert scenario_trial(sc, random.Random(0)) is None


@pytest.mark.parametrize("d, sat", [(1, True), (2, True), (Fraction(5, 2), False), (3, False)])
def test_canonical_form_keeps_the_verdict(d, sat):
    """With td(p1,p2) = d the round trip costs 2d against the verifier's bound of 4."""
    t1 = ex4_topology([TimeConstraint(Dist("p1", "p2"), "=", Num(d)),
                       TimeConstraint(Dist("p2", "p1"), "=", Num(d))])
    t2 = canonical_extension(t1.restrict(t1.participants))
    o = Oracle("builtin")
    assert isinstance(o.check(timed_constraint_set(canonicalize(ex4_bundle()), t2)), Sat) == sat
    res = run_trial(ex4_bundle(), t1, oracle=o)
    assert res.passed and res.sat_scattered == sat
