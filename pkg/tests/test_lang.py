from importlib import resources

import pytest
from hypothesis import given, settings, strategies as st

from cpsp import terms as T
from cpsp.lang import (Complete, DuplicateAgent, If, InvalidPosition, Nil, ParseError, Recv,
                       ScopeError, Send, UnknownRole, command_at, format_message,
                       format_position, format_role, format_scenario, parse_position,
                       parse_role, parse_scenario, positions, successor)

PASSPORT = """role passport() {
  new v; send v;
  recv [vmac, venc] # t0 = cur;
  if vmac :=: enc(venc, key(kM)) # t1 = t0 + tMac {
    if venc :=: enc(v, key(kE)) # t2 = t1 + tEnc {
      send text(done) # cur = t2;
    } else {
      send text(error) # cur = t2;
    }
  } else {
    send text(error) # cur = t1;
  }
}"""


def corpus():
    root = resources.files("cpsp") / "corpus"
    return sorted((p.name, p.read_text()) for p in root.iterdir() if p.name.endswith(".cpsp"))


def test_positions_follow_control_flow():
    r = parse_role(PASSPORT)
    c = command_at(r, parse_position("1.1.1.1.2"))
    assert isinstance(c, Send) and c.msg == T.text("error")
    assert str(c.tc) == "cur = t1"
    assert isinstance(command_at(r, (1, 1, 1, 1)), If)
    assert len(positions(r)) == 9  # eight commands plus the entry point
    assert r.time_vars() == {"t0", "t1", "t2", "tMac", "tEnc"}


def test_position_errors():
    r = parse_role(PASSPORT)
    with pytest.raises(InvalidPosition):
        command_at(r, (1, 2))
    with pytest.raises(InvalidPosition):
        command_at(r, (2,))
    assert format_position(()) == "eps"
    assert parse_position("eps") == ()


def test_successor_of_nil_and_branches():
    r = parse_role(PASSPORT)
    cond = command_at(r, (1, 1, 1, 1))
    assert isinstance(successor(cond, 2), Send)
    last = command_at(r, (1, 1, 1, 1, 2))
    assert isinstance(successor(last, 1), Nil)


def test_bare_command_list():
    r = parse_role("new v; send v # t = cur; recv v # cur <= t + 4;")
    assert r.name == "anonymous"
    assert isinstance(command_at(r, (1, 1, 1)), Recv)


@pytest.mark.parametrize("src, err", [
    ("role r() { send x; }", ScopeError),
    ("role r() { recv x # cur * cur <= 3; }", ParseError),
    ("role r() { recv x; if x :=: text(a) { send x; } send x; }", ParseError),
    ("role r() { send $; }", ParseError),
])
def test_role_errors(src, err):
    with pytest.raises(err):
        parse_role(src)


def test_error_locations():
    with pytest.raises(ParseError) as e:
        parse_role("role r() {\n  send $; }")
    assert (e.value.line, e.value.col) == (2, 8)


@pytest.mark.parametrize("src, err", [
    ("scenario s { participants p1; run p1: nope(); goal complete(p1); }", UnknownRole),
    ("scenario s { participants p1, p1; goal complete(p1); }", DuplicateAgent),
    ("role r(A) { send A; } scenario s { participants p1; run p1: r(); "
     "goal complete(p1); }", ParseError),
    ("role r(A) { send A; } scenario s { participants p1; run p1: r(p1); "
     "goal complete(p9); }", ParseError),
])
def test_scenario_errors(src, err):
    with pytest.raises(err):
        parse_scenario(src)


def test_scenario_defaults_to_canonical_intruders():
    sc = parse_scenario(dict(corpus())["mafia-fraud.cpsp"])
    assert sc.topology.names == ["p1", "p2", "ti_p1", "ti_p2"]
    assert sc.goal.conditions == (Complete("p1"),)
    assert T.PK(T.name("p2")) in sc.intruder_knowledge()


def test_explicit_intruders_kept():
    sc = parse_scenario(dict(corpus())["mafia-fraud-scattered.cpsp"])
    assert [a.name for a in sc.intruders] == ["ti1", "ti2"]
    assert not sc.topology.canonical


@pytest.mark.parametrize("name, text", corpus())
def test_corpus_round_trips(name, text):
    sc = parse_scenario(text)
    again = parse_scenario(format_scenario(sc))
    assert format_scenario(again) == format_scenario(sc)
    assert again.roles == sc.roles and again.runs == sc.runs and again.goal == sc.goal


def test_role_round_trip():
    r = parse_role(PASSPORT)
    assert parse_role(format_role(r)) == r


msgs = st.recursive(
    st.sampled_from([T.nonce("n"), T.key("k"), T.name("p1"), T.text("hello"),
                     T.PK(T.name("p1")), T.SK(T.name("p2"))]),
    lambda kids: st.one_of(
        st.builds(T.Enc, kids, st.sampled_from([T.key("k"), T.PK(T.name("p2"))])),
        st.lists(kids, min_size=2, max_size=3).map(lambda xs: T.Tuple(tuple(xs)))),
    max_leaves=5)


@settings(max_examples=80, deadline=None)
@given(msgs)
def test_message_printing_round_trips(m):
    r = parse_role(f"role r() {{ send {format_message(m)}; }}")
    assert command_at(r, (1,)).msg == m
