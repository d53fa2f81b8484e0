import random
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from mcmpst import (
    ParseError, parse_context, parse_file, parse_process, parse_type, pretty,
)
from mcmpst.core import Choice, InputT, Mixed, PInput, POut, ProbSum

from gen import random_process, random_type


def test_probsum_with_decimals(courthouse):
    td = parse_type("(0.5: d->j!wk().end (+) 0.2: d->j!str().end"
                    " (+) 0.3: d->j!wit().end)")
    (ps,) = td.branches
    assert [s.prob for s in ps.summands] == \
        [Fraction(1, 2), Fraction(1, 5), Fraction(3, 10)]
    assert courthouse.types["Td"] == td


def test_end():
    from mcmpst.core import End
    assert parse_type("end") == End()


def test_context_role_set():
    d = parse_context("s[{j,d}] : p<-q?l().end")
    (ch, _), = d.bindings
    assert ch.roles == frozenset({"j", "d"})


def test_trailing_end_optional():
    assert parse_type("p<-q?l()") == parse_type("p<-q?l().end")
    assert parse_process("s[p] p->q!l()") == parse_process("s[p] p->q!l().0")


def test_process_prob_one_shorthand():
    p = parse_process("s[p] p->q!l(1).0")
    (s,) = p.summands
    assert isinstance(s, POut) and s.rows[0].prob == 1


def test_parse_errors_are_positioned():
    with pytest.raises(ParseError) as e:
        parse_file("type T = (0.5: p->q!l().end")
    assert e.value.line is not None


def test_unbound_name():
    with pytest.raises(ParseError):
        parse_type("Nope")


def test_duplicate_definition():
    with pytest.raises(ParseError):
        parse_file("type T = end\ntype T = end")


def test_alias_cycle():
    with pytest.raises(ParseError):
        parse_file("type A = B\ntype B = A\n")


def test_comments_and_probability_range():
    pf = parse_file("# comment\ntype T = end # not a comment marker inside\n")
    assert "T" in pf.types
    with pytest.raises(ParseError):
        parse_type("(1.5: p->q!l().end)")


def test_courthouse_roundtrip(courthouse):
    for name, t in courthouse.types.items():
        assert parse_type(pretty(t)) == t, name
    for name, d in courthouse.contexts.items():
        assert parse_context(pretty(d)) == d, name
    for name, p in courthouse.processes.items():
        assert parse_process(pretty(p)) == p, name


def test_roundtrip_seeded_types():
    rng = random.Random(2024)
    for _ in range(300):
        t = random_type(rng)
        assert parse_type(pretty(t)) == t, pretty(t)


def test_roundtrip_seeded_processes():
    rng = random.Random(2025)
    for _ in range(300):
        p = random_process(rng)
        assert parse_process(pretty(p)) == p, pretty(p)


@settings(max_examples=120, deadline=None,
          suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(min_value=0, max_value=10 ** 9), st.booleans())
def test_roundtrip_property(seed, proc):
    rng = random.Random(seed)
    if proc:
        p = random_process(rng)
        assert parse_process(pretty(p)) == p
    else:
        t = random_type(rng)
        assert parse_type(pretty(t)) == t


def test_grammar_total_on_junk():
    # grammar-conformant or positioned diagnostic, never a crash
    for text in ["", "type", "process P =", "context C {", "type T = rec",
                 "process P = s[p]", "type T = ()", "\x00"]:
        try:
            parse_file(text)
        except ParseError:
            pass
