import random
from fractions import Fraction

import pytest

from mcmpst import (
    Active, Derivation, Goal, LocalContext, Plain, SearchBudgetExceeded, chan,
    check_derivation, dfree, format_derivation, parse_context, parse_type,
    pretty, safe, sub_multi, sub_single, sub_standard, validate_derivation,
)

from gen import gen_scenario, multi_weaken_ctx, random_context, std_weaken, random_type


# -- standard subtyping -------------------------------------------------------

T_SUP = ("a<-b?in1().end"
         " + (0.7: a->c!out1().end (+) 0.3: a->c!out2().end)"
         " + (1: a->c!out3().end)")
T_SUB = "a<-b?in1().end + a<-b?in2().end + (1: a->c!out3().end)"


def test_standard_paper_derivation():
    d = sub_standard(parse_type(T_SUB), parse_type(T_SUP))
    assert d is not None
    assert check_derivation(d)
    rules = set()

    def walk(n):
        rules.add(n.rule)
        for c in n.children:
            walk(c)

    walk(d)
    assert {"Sub-Σ", "Sub-Σ-?", "Sub-Σ-!", "Sub-end"} <= rules


def test_standard_end_axiom():
    d = sub_standard(parse_type("end"), parse_type("end"))
    assert d is not None and d.rule == "Sub-end"


def test_standard_rejects_unmatched_extra_input():
    tb = parse_type("b<-a?l_nat(nat).b<-c?l_bool(bool).end")
    tbp = parse_type("b<-a?l_nat(nat).b<-c?l_bool(bool).end + b<-c?new(nat).end")
    assert sub_standard(tbp, tb) is None


def test_standard_rejects_dropped_prefix():
    ta = parse_type("(1: a->b!hi().end) + (1: a->c!oops().end)")
    tap = parse_type("(1: a->c!oops().end)")
    assert sub_standard(tap, ta) is None


def test_standard_reflexive_random():
    rng = random.Random(3)
    for _ in range(40):
        t = random_type(rng)
        assert sub_standard(t, t) is not None, pretty(t)


def test_standard_recursion():
    a = parse_type("rec t. a<-b?l().t")
    b = parse_type("rec u. a<-b?l().a<-b?l().u")
    assert sub_standard(a, b) is not None
    assert sub_standard(b, a) is not None
    c = parse_type("rec t. a<-b?m().t")
    assert sub_standard(a, c) is None


# -- single-channel subtyping -------------------------------------------------

def test_single_example_pair():
    sub = parse_context(f"s[a]: {T_SUB}")
    sup = parse_context(f"s[a]: {T_SUP}")
    d = sub_single(sub, sup)
    assert d is not None and check_derivation(d)


def test_single_reflexivity_random():
    rng = random.Random(4)
    for _ in range(25):
        d = random_context(rng)
        assert sub_single(d, d) is not None, pretty(d)


def test_single_role_subset():
    sub = parse_context("s[a]: a<-x?l().end")
    sup = parse_context("s[{a,b}]: a<-x?l().end")
    assert sub_single(sub, sup) is not None
    assert sub_single(sup, sub) is None  # superset roles cannot shrink


def test_single_rejects_multi_channel_merge(courthouse):
    assert sub_single(courthouse.contexts["DRcore"],
                      courthouse.contexts["DIcore"]) is None


# -- multi-channel subtyping --------------------------------------------------

def test_multi_courthouse(courthouse):
    d = sub_multi(courthouse.contexts["DRcore"], courthouse.contexts["DIcore"])
    assert d is not None
    assert validate_derivation(d) is None


def test_multi_courthouse_starred(courthouse):
    d = sub_multi(courthouse.contexts["DRcoreS"], courthouse.contexts["DIcoreS"])
    assert d is not None
    assert validate_derivation(d) is None
    text = format_derivation(d)
    assert "S-τ-R" in text  # the internal action of the interface
    assert "1/5" in text    # the 7/10 case split into 1/2 + 1/5


def test_multi_non_antisymmetric():
    a = parse_context("s[r]: (1: tau.end)")
    b = parse_context("s[r]: (1: tau.(1: tau.end))")
    d1, d2 = sub_multi(a, b), sub_multi(b, a)
    assert d1 is not None and d2 is not None
    assert check_derivation(d1) and check_derivation(d2)


def test_multi_absorbing_empty():
    assert sub_multi(LocalContext(), LocalContext()) is not None
    d = parse_context("s[r]: (1: r->x!l().end)")
    assert sub_multi(d, LocalContext()) is None
    # the converse direction allows tau chains above the empty context
    assert sub_multi(LocalContext(), parse_context("s[r]: (1: tau.end)")) is not None
    assert sub_multi(LocalContext(), parse_context("s[r]: r<-x?l().end")) is None


def test_multi_reflexivity_random():
    rng = random.Random(6)
    for _ in range(25):
        d = random_context(rng)
        got = sub_multi(d, d)
        assert got is not None, pretty(d)
        assert validate_derivation(got) is None, pretty(d)


def test_multi_weakening_chain():
    rng = random.Random(8)
    for _ in range(15):
        d3 = random_context(rng, allow_rec=False)
        d2 = multi_weaken_ctx(rng, d3)
        d1 = multi_weaken_ctx(rng, d2)
        assert sub_multi(d1, d2) is not None
        assert sub_multi(d2, d3) is not None
        assert sub_multi(d1, d3) is not None


def test_inclusion_standard_single_multi():
    rng = random.Random(12)
    c = chan("s", "a", "b")
    for _ in range(30):
        t = random_type(rng)
        t_sub = std_weaken(rng, t)
        assert sub_standard(t_sub, t) is not None
        sub = LocalContext([(c, t_sub)])
        sup = LocalContext([(c, t)])
        assert sub_single(sub, sup) is not None
        assert sub_multi(sub, sup) is not None


def test_multi_rejects_bad_pairs(courthouse):
    # an interface that omits the final release is not a supertype
    bad = parse_context(
        "s[{j,d}]: j<-p?lws().(7/10: j->p!glt(bool).end"
        " (+) 3/10: j->w!rqs().j<-w?st().(1: j->p!glt(bool).end))")
    assert sub_multi(courthouse.contexts["DRcore"], bad) is None


def test_multi_safety_dfree_transfer(courthouse):
    # subtyping preserves safety and deadlock-freedom downwards
    sup = courthouse.contexts["DImixed"]
    sub = parse_context("s[p]: Tp, s[j]: Tj, s[d]: Td, s[w]: Tw",
                        types=courthouse.types)
    assert sub_multi(sub, sup) is not None
    assert safe(sup).holds and dfree(sup).holds
    assert safe(sub).holds and dfree(sub).holds


def test_budget_exhaustion_raises(courthouse):
    with pytest.raises(SearchBudgetExceeded):
        sub_multi(courthouse.contexts["DRcoreS"],
                  courthouse.contexts["DIcoreS"], budget=5)


def test_multi_recursive_contexts():
    a = parse_context("s[a]: rec t. a<-x?l().t")
    b = parse_context("s[a]: rec u. a<-x?l().a<-x?l().u")
    d = sub_multi(a, b)
    assert d is not None and validate_derivation(d) is None


def test_check_derivation_rejects_forged():
    ctx = parse_context("s[a]: a<-b?l().end, s[b]: (1: b->a!l().end)")
    sup = parse_context("s[{a,b}]: a<-b?l().end")
    goal = Goal(Active(chan("s", "a"), ctx), Fraction(1), sup)
    inner = Goal(Plain(parse_context("s[b]: (1: b->a!l().end)")),
                 Fraction(1), LocalContext())
    forged = Derivation("S-?", goal, (Derivation("S-∅-1", inner),))
    assert not check_derivation(forged)
    assert "outside the context" in validate_derivation(forged)


def test_check_derivation_axiom():
    d = Derivation("S-∅-1", Goal(Plain(LocalContext()), Fraction(1),
                                 LocalContext()))
    assert check_derivation(d)


def test_scenario_subset_subtyping():
    # a scenario context is a subtype of itself with merged bindings absent;
    # check prover-validated interface relations hold for generated cases
    rng = random.Random(13)
    for _ in range(8):
        ctx = gen_scenario(rng).context()
        got = sub_multi(ctx, ctx)
        assert got is not None and validate_derivation(got) is None
