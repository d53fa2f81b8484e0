from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mcmpst import (
    Channel, End, LinearityViolation, LocalContext, McmpstError, chan,
    compose_contexts, erase_end, parse_type, rational_from_decimal, rational_str,
)


def test_rational_from_decimal():
    assert rational_from_decimal("0.35") == Fraction(7, 20)
    assert rational_from_decimal("1") == Fraction(1)
    assert rational_from_decimal("7/10") == Fraction(7, 10)


def test_rational_malformed():
    with pytest.raises(McmpstError):
        rational_from_decimal("x")
    with pytest.raises(McmpstError):
        rational_from_decimal("1/0")


@given(st.integers(min_value=0, max_value=10 ** 6),
       st.integers(min_value=1, max_value=10 ** 6))
def test_rational_roundtrip(num, den):
    q = Fraction(num, den)
    assert rational_from_decimal(rational_str(q)) == q


def test_channel_requires_roles():
    with pytest.raises(McmpstError):
        Channel("s", frozenset())


def test_compose_disjoint_roles():
    t = parse_type("end")
    d1 = LocalContext([(chan("s", "p"), t)])
    d2 = LocalContext([(chan("s", "j"), t)])
    out = compose_contexts(d1, d2)
    assert len(out) == 2


def test_compose_overlap_rejected():
    t = parse_type("end")
    d1 = LocalContext([(chan("s", "j", "d"), t)])
    d2 = LocalContext([(chan("s", "j"), t)])
    with pytest.raises(LinearityViolation):
        compose_contexts(d1, d2)


def test_compose_unit():
    t = parse_type("(1: p->q!l().end)")
    d = LocalContext([(chan("s", "p"), t)])
    assert compose_contexts(d, LocalContext()) == d


def test_compose_commutative_associative_updown():
    t = parse_type("end")
    a = LocalContext([(chan("s", "p"), t)])
    b = LocalContext([(chan("s", "q"), t)])
    c = LocalContext([(chan("s", "r"), t)])
    left = compose_contexts(compose_contexts(a, b), c)
    right = compose_contexts(a, compose_contexts(b, c))
    assert set(left.bindings) == set(right.bindings)
    assert set(compose_contexts(a, b).bindings) == set(compose_contexts(b, a).bindings)


def test_roles_in_different_sessions_may_overlap():
    t = parse_type("end")
    compose_contexts(LocalContext([(chan("s", "p"), t)]),
                     LocalContext([(chan("s2", "p"), t)]))


def test_erase_end():
    t = parse_type("(1: p->q!l().end)")
    d = LocalContext([(chan("s", "p"), End()), (chan("s", "q"), t)])
    out = erase_end(d)
    assert len(out) == 1 and out.bindings[0][0] == chan("s", "q")
    assert erase_end(out) == out
    assert erase_end(LocalContext()) == LocalContext()
