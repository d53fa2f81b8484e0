import random
from fractions import Fraction

import pytest

from mcmpst import (
    IllFormedType, NotRecursive, canonical_type, merge_similar, parse_type,
    pre, pretty, types_equal, unfold, well_formed,
)
from mcmpst.typemeta import InPfx, OutPfx, TauPfx

from gen import random_type


def test_well_formed_courthouse_defendant():
    t = parse_type("(0.5: d->j!wk().end (+) 0.2: d->j!str().end"
                   " (+) 0.3: d->j!wit().end)")
    assert well_formed(t) == []


def test_well_formed_sum_below_one():
    t = parse_type("(0.5: d->j!wk().end (+) 0.2: d->j!str().end)")
    diags = well_formed(t)
    assert any("7/10" in d for d in diags)


def test_well_formed_payload_clash():
    t = parse_type("p<-q?l(nat).end + p<-q?l(bool).end")
    assert well_formed(t)


def test_well_formed_continuation_clash_outputs():
    t = parse_type("(0.5: p->q!l().p<-q?a().end (+) 0.5: p->q!l().p<-q?b().end)")
    assert well_formed(t)


def test_unfold():
    t = parse_type("rec t. p<-q?l().t")
    u = unfold(t)
    assert u == parse_type("p<-q?l().(rec t. p<-q?l().t)")


def test_unfold_outer_only():
    t = parse_type("rec t. rec u. p<-q?l().u")
    u = unfold(t)
    assert pretty(u) == "rec u. p<-q?l().u"


def test_unfold_requires_rec():
    with pytest.raises(NotRecursive):
        unfold(parse_type("end"))


def test_prefixes_running_example():
    base = parse_type("(0.5: a->b!one().end (+) 0.2: a->c!two().end"
                      " (+) 0.3: tau.p<-q?l().end)")
    got = pre(base)
    cont = canonical_type(parse_type("p<-q?l().end"))
    assert got == frozenset({
        OutPfx(Fraction(1, 2), "a", "b"),
        OutPfx(Fraction(1, 5), "a", "c"),
        TauPfx(Fraction(3, 10), cont),
    })
    # new continuations on the outputs and different labels keep the prefixes
    t1 = parse_type("(0.5: a->b!one().a<-b?x().end (+) 0.2: a->c!two().a<-c?y().end"
                    " (+) 0.3: tau.p<-q?l().end)")
    t2 = parse_type("(0.5: a->b!three().end (+) 0.2: a->c!four().end"
                    " (+) 0.1: tau.p<-q?l().end (+) 0.2: tau.p<-q?l().end)")
    assert pre(t1) == got
    assert pre(t2) == got
    # a different tau continuation or missing partner changes them
    t3 = parse_type("(0.5: a->b!one().end (+) 0.2: a->c!two().end (+) 0.3: tau.end)")
    t4 = parse_type("(0.7: a->b!one().end (+) 0.3: tau.p<-q?l().end)")
    assert pre(t3) != got
    assert pre(t4) != got


def test_pre_input():
    assert pre(parse_type("p<-q?l(nat).end")) == frozenset({InPfx("p", "q")})


def test_merge_similar_paper_equation():
    t = parse_type("(0.1: tau.p<-q?l().end (+) 0.2: tau.p<-q?l().end"
                   " (+) 0.7: a->b!m().end)")
    merged = merge_similar(t)
    probs = sorted(s.prob for s in merged.branches[0].summands)
    assert probs == [Fraction(3, 10), Fraction(7, 10)]


def test_merge_similar_outputs():
    t = parse_type("(0.5: a->b!l().end (+) 0.5: a->b!l().end)")
    merged = merge_similar(t)
    (ps,) = merged.branches
    assert len(ps.summands) == 1 and ps.summands[0].prob == 1


def test_merge_similar_idempotent_random():
    rng = random.Random(5)
    for _ in range(40):
        t = random_type(rng)
        m = merge_similar(t)
        assert merge_similar(m) == m
        assert pre(m) == pre(t)


def test_unfold_preserves_wf_and_pre():
    rng = random.Random(9)
    seen = 0
    from mcmpst.core import Rec
    while seen < 10:
        t = random_type(rng, depth=3)
        if not isinstance(t, Rec):
            continue
        seen += 1
        u = unfold(t)
        assert bool(well_formed(t)) == bool(well_formed(u))
        assert pre(u) == pre(t)


def test_types_equal_alpha():
    a = parse_type("rec t. p<-q?l().t")
    b = parse_type("rec u. p<-q?l().u")
    assert types_equal(a, b)
    assert not types_equal(a, parse_type("rec t. p<-q?m().t"))


def test_unguarded_recursion_rejected():
    from mcmpst.core import Rec, TypeVar
    with pytest.raises(IllFormedType):
        well_formed(Rec("t", TypeVar("t")))
