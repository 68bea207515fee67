import random

import pytest

from conftest import needs_z3

from cpsp.cli import load
from cpsp.completeness import restrict
from cpsp.search import (LimitExceeded, SearchConfig, find_attack, random_execution, search)
from cpsp.strands import is_acyclic, timed_constraint_set
from cpsp.timealg.store import verify_model

VERDICTS = {
    "external-distance-fraud": True,
    "in-between-ticks": True,
    "mafia-fraud": True,
    "mafia-fraud-scattered": True,
    "nsl-db-hijack": True,
    "edf-silent-prover": False,
    "exact-clock": False,
    "honest-near": False,
}


def scenario(name):
    return load(f"corpus/{name}.cpsp")


@pytest.mark.parametrize("name, attack", sorted(VERDICTS.items()))
def test_corpus_verdicts(name, attack):
    out = search(scenario(name))
    assert out.exhaustive
    assert (out.attack is not None) == attack
    assert out.exit_code == (0 if attack else 1)


@pytest.mark.parametrize("name", [n for n, a in VERDICTS.items() if a])
def test_attacks_come_with_a_checked_witness(name):
    a = search(scenario(name)).attack
    assert a.report.ok, a.report.violations
    assert is_acyclic(a.bundle)
    assert verify_model(timed_constraint_set(a.bundle, a.topology), a.model)


@pytest.mark.parametrize("name", sorted(VERDICTS))
def test_pruning_never_changes_the_verdict(name):
    sc = scenario(name)
    fast, slow = search(sc), search(sc, SearchConfig(prune=False))
    assert (fast.attack is None) == (slow.attack is None)
    assert slow.stats.states >= fast.stats.states


def test_search_is_deterministic():
    sc = scenario("nsl-db-hijack")
    a, b = search(sc).attack, search(sc).attack
    assert a.bundle == b.bundle and a.model == b.model


def test_parallel_workers_agree():
    for name, attack in VERDICTS.items():
        out = search(scenario(name), SearchConfig(workers=2))
        assert (out.attack is not None) == attack, name


def test_state_budget_gives_no_verdict():
    out = search(scenario("honest-near"), SearchConfig(max_states=2))
    assert out.attack is None and not out.exhaustive and out.exit_code == 2
    with pytest.raises(LimitExceeded):
        find_attack(scenario("honest-near"), SearchConfig(max_states=2))


def test_depth_budget_gives_no_verdict():
    out = search(scenario("honest-near"), SearchConfig(max_depth=1))
    assert out.exit_code == 2


@needs_z3
def test_smt_backend_agrees():
    for name in ("external-distance-fraud", "exact-clock"):
        out = search(scenario(name), SearchConfig(backend="smt"))
        assert (out.attack is not None) == VERDICTS[name]
        assert out.stats.smt_calls > 0


def test_random_executions_are_honest_runs():
    sc = scenario("mafia-fraud")
    rng = random.Random(2)
    got = [random_execution(sc, rng) for _ in range(10)]
    ran = [g for g in got if g is not None]
    assert ran
    for b, dels in ran:
        assert not any(s.is_intruder for s in b.strands)
        assert {n for n, _ in dels} <= set(b.nodes)
        assert not restrict(b).msg  # deliveries are left for the intruder
