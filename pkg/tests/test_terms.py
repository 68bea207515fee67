import pytest
from hypothesis import given, strategies as st

from cpsp import terms as T
from cpsp.terms import Enc, PK, SK, Substitution, Tuple, Var, unify

atoms = st.sampled_from([T.nonce("n"), T.nonce("m"), T.key("k"), T.name("a"),
                         T.text("t"), PK(T.name("a")), SK(T.name("b"))])
variables = st.sampled_from([Var("x"), Var("y"), Var("z")])


def messages(leaves):
    return st.recursive(leaves, lambda kids: st.one_of(
        st.builds(Enc, kids, st.sampled_from([T.key("k"), PK(T.name("a"))])),
        st.lists(kids, min_size=2, max_size=3).map(lambda xs: Tuple(tuple(xs)))),
        max_leaves=6)


ground = messages(atoms)
open_msgs = messages(st.one_of(atoms, variables))


def test_singleton_tuple_is_its_element():
    assert T.tup(T.nonce("n")) == T.nonce("n")
    assert isinstance(T.tup(T.nonce("n"), T.key("k")), Tuple)
    with pytest.raises(ValueError):
        T.tup()


def test_unknown_constant_kind_rejected():
    with pytest.raises(ValueError):
        T.Const("n", "widget")


def test_inverse_keys():
    a = T.name("a")
    assert T.inverse_key(PK(a)) == SK(a)
    assert T.inverse_key(SK(a)) == PK(a)
    assert T.inverse_key(T.key("k")) == T.key("k")
    with pytest.raises(T.NotAKey):
        T.inverse_key(T.nonce("n"))


def test_unify_binds_nested_variables():
    m1 = Enc(Tuple((Var("x"), T.nonce("n"))), PK(Var("a")))
    m2 = Enc(Tuple((T.key("k"), Var("y"))), PK(T.name("p1")))
    s = unify(m1, m2)
    assert s is not None
    assert s.apply(m1) == s.apply(m2)
    assert s["a"] == T.name("p1")


def test_unify_occurs_check_and_clash():
    assert unify(Var("x"), Tuple((Var("x"), T.nonce("n")))) is None
    assert unify(T.nonce("n"), T.nonce("m")) is None
    assert unify(Tuple((T.nonce("n"), T.nonce("m"))),
                 Tuple((T.nonce("n"), T.nonce("m"), T.nonce("m")))) is None


def test_bind_keeps_substitution_idempotent():
    s = Substitution({"x": Var("y")}).bind("y", T.nonce("n"))
    assert s["x"] == T.nonce("n")
    assert s.apply(s.apply(Var("x"))) == s.apply(Var("x"))


def test_vars_and_depth():
    m = Enc(Tuple((Var("x"), T.nonce("n"))), SK(Var("a")))
    assert T.vars_of(m) == {"x", "a"}
    assert not T.is_ground(m)
    assert T.depth(T.nonce("n")) < T.depth(m)


@given(open_msgs, open_msgs)
def test_unifier_equates_both_sides(a, b):
    s = unify(a, b)
    if s is not None:
        assert s.apply(a) == s.apply(b)


@given(ground)
def test_ground_message_unifies_with_itself_only_trivially(m):
    s = unify(m, m)
    assert s is not None and len(s) == 0


@given(open_msgs)
def test_renaming_is_reversible(m):
    fwd = {v: v + "'" for v in T.vars_of(m)}
    back = {v + "'": v for v in T.vars_of(m)}
    assert T.rename_vars(T.rename_vars(m, fwd), back) == m
