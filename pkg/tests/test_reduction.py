import random
from fractions import Fraction

from mcmpst import (
    EMPTY_ENV, canonical_process, check, enabled, explore, is_error, normalize,
    parse_context, parse_process, pretty, reach, simulate,
)
from mcmpst.core import Inact, Par, Res
from mcmpst.reduction import alternatives, free_sessions, subst_values
from mcmpst.core import VarV, NatV

from gen import gen_scenario


def test_normalize_unit_and_flatten():
    p = parse_process("(0 | s[a] a->b!l().0) | 0")
    n = normalize(p)
    assert n == parse_process("s[a] a->b!l().0")


def test_normalize_idempotent(courthouse):
    for name in ("PI", "PR", "PIres", "PRres"):
        n = normalize(courthouse.processes[name])
        assert normalize(n) == n


def test_normalize_hoists_restriction_with_renaming():
    # s is free on the left, so the right-hand restriction must be renamed
    p = parse_process("s[a] a->b!l().0 | new s. s[c] c->d!m().0")
    n = normalize(p)
    assert isinstance(n, Res)
    assert n.session != "s"
    assert "s" in free_sessions(n)


def test_normalize_def_scope_hoist():
    p = parse_process("(def X(; s[p]: end) = 0 in s[a] a->b!l().0) | s[c] c->d!m().0")
    n = normalize(p)
    from mcmpst.core import Def
    assert isinstance(n, Def)
    comps = pretty(n)
    assert "a->b!l" in comps and "c->d!m" in comps


def test_normalize_def_gc():
    p = parse_process("def X(; s[p]: end) = 0 in 0")
    assert normalize(p) == Inact()


def test_subst_capture_avoiding():
    p = parse_process("s[a] a<-b?l(x) . s[a] a->b!m(y) . 0")
    q = subst_values(p, {"y": VarV("x")})
    # the binder x must be renamed so the substituted x stays free
    binder = q.summands[0].binder
    assert binder != "x"
    inner = q.summands[0].cont
    assert inner.summands[0].rows[0].action.payload == VarV("x")


def test_enabled_first_step(courthouse):
    reds = enabled(courthouse.processes["PI"])
    assert len(reds) == 1
    (r,) = reds
    assert r.rule == "R-Com" and "lws" in r.description and r.prob == 1


def test_enabled_second_step(courthouse):
    (first,) = enabled(courthouse.processes["PI"])
    probs = sorted(r.prob for r in enabled(first.result))
    assert probs == [Fraction(3, 10), Fraction(7, 20), Fraction(7, 20)]


def test_enabled_inact():
    assert enabled(Inact()) == []


def test_enabled_cond_and_call():
    p = parse_process("if true then s[a] a->b!l().0 else 0")
    (r,) = enabled(p)
    assert r.rule == "R-Cond-T"
    p2 = parse_process("def X(; s[a]: (1: a->b!l().end)) = s[a] a->b!l().0 "
                       "in X(; s[a])")
    rds = enabled(p2)
    assert any(r.rule == "R-Def" for r in rds)


def test_call_channel_substitution():
    p = parse_process("def X(; s[a]: (1: a->b!l().end)) = s[a] a->b!l().0 "
                      "in (X(; s2[a]) | s2[b] b<-a?l().0)")
    # unfolding rewires the declaration body onto the call's channel
    (call,) = [r for r in enabled(p) if r.rule == "R-Def"]
    after = enabled(call.result)
    assert any(r.rule == "R-Com" for r in after)


def test_explore_interface_masses(courthouse):
    outs = explore(courthouse.processes["PI"], 10)
    masses = sorted(o.mass for o in outs)
    assert masses == [Fraction(3, 10), Fraction(7, 20), Fraction(7, 20)]
    assert all(isinstance(o.terminal, Inact) for o in outs)
    assert sum(masses) == 1


def test_explore_refinement_split_paths(courthouse):
    (first,) = enabled(courthouse.processes["PR"])
    outs = explore(first.result, 12)
    masses = sorted(o.mass for o in outs)
    assert Fraction(3, 20) in masses and Fraction(1, 5) in masses
    assert sum(masses) == 1
    terminals = {canonical_process(o.terminal) for o in outs}
    assert len(terminals) == 1


def test_explore_deadlock():
    p = parse_process("s[a] (1: a->c!oops().0) | s[b] b<-a?hi().0")
    (o,) = explore(p, 5)
    assert o.deadlocked and o.mass == 1 and o.error is None


def test_explore_truncation():
    p = parse_process("def X(; s[a]: rec t. (1: tau.t)) = s[a] tau . X(; s[a]) "
                      "in X(; s[a])")
    outs = explore(p, 3)
    assert outs and all(o.truncated for o in outs)


def test_is_error_paper_example():
    p = parse_process(
        "s[a] a->b!l_nat(1).0"
        " | s[b] { b<-a?l_nat(x) . s[b] b<-c?l_bool(y).0 + b<-c?new(z).0 }"
        " | s[c] c->b!l_bool(true).0")
    assert is_error(p) == "communication"


def test_is_error_value():
    assert is_error(parse_process("if x then 0 else 0")) == "value"


def test_is_error_clean(courthouse):
    assert is_error(courthouse.processes["PI"]) is None


def test_simulate_deterministic(courthouse):
    a = simulate(courthouse.processes["PR"], seed=9, max_steps=20)
    b = simulate(courthouse.processes["PR"], seed=9, max_steps=20)
    assert a.steps == b.steps and a.cumulative == b.cumulative


def test_simulate_empty():
    t = simulate(Inact(), seed=1)
    assert t.steps == [] and t.cumulative == 1


def test_simulate_guilty_paths(courthouse):
    found_i = found_r = False
    for seed in range(80):
        t = simulate(courthouse.processes["PI"], seed=seed, max_steps=20,
                     scheduler="script", script=[0, 0, 0, 0])
        if t.cumulative == Fraction(7, 20):
            found_i = True
            break
    for seed in range(80):
        t = simulate(courthouse.processes["PR"], seed=seed, max_steps=20,
                     scheduler="script", script=[0, 0, 0, 0, 0])
        if t.cumulative == Fraction(7, 20) and \
                any("wk" in d for _, d, _ in t.steps):
            found_r = True
            break
    assert found_i and found_r


def test_scheduler_first(courthouse):
    t = simulate(courthouse.processes["PI"], seed=0, scheduler="first",
                 max_steps=20)
    assert t.steps[0][1].endswith("lws")


def test_alternatives_grouping(courthouse):
    (first,) = enabled(courthouse.processes["PI"])
    alts = alternatives(first.result)
    # one probabilistic sum: a single nondeterministic alternative
    assert len(alts) == 1
    assert sorted(q for q, _ in alts[0].rows) == \
        [Fraction(3, 10), Fraction(7, 20), Fraction(7, 20)]


def test_outcome_masses_match_context_semantics(courthouse):
    # process masses agree with the context transition masses
    outs = explore(courthouse.processes["PI"], 10)
    graph = reach(courthouse.contexts["DI"])
    ctx_probs = {p for _, _, p, _ in graph.edges}
    assert Fraction(7, 10) in ctx_probs  # merged at type level
    assert sorted(o.mass for o in outs) == \
        [Fraction(3, 10), Fraction(7, 20), Fraction(7, 20)]


def test_scenario_exploration_clean():
    rng = random.Random(31)
    for _ in range(8):
        sc = gen_scenario(rng)
        outs = explore(sc.system(), 14)
        assert sum((o.mass for o in outs), Fraction(0)) == 1
        for o in outs:
            assert not o.deadlocked and o.error is None and not o.truncated
