import random
from fractions import Fraction

import pytest

from mcmpst import (
    Active, LocalContext, Plain, StateBudgetExceeded, chan, dfree,
    parse_context, pending, reach, safe, step, step_active,
)
from mcmpst.core import HeadCont, TauH
from mcmpst.ctxlts import ComL, InL, OutL, TauL, internal_edges

from gen import gen_scenario


def test_step_simple_com():
    d = parse_context("s[a]: a<-b?l().end, s[b]: (1: b->a!l().end)")
    labels = {(type(l).__name__, str(l.__dict__.get('label', ''))): p
              for l, p, _ in step(d)}
    coms = [(l, p, t) for l, p, t in step(d) if isinstance(l, ComL)]
    assert len(coms) == 1
    l, p, target = coms[0]
    assert (l.sender, l.receiver, l.label) == ("b", "a", "l")
    assert p == 1 and len(target) == 0


def test_step_tau():
    d = parse_context("s[{j,d}]: (0.3: tau.p<-q?l().end (+) 0.7: j->x!m().end)")
    taus = [(l, p, t) for l, p, t in step(d) if isinstance(l, TauL)]
    assert len(taus) == 1 and taus[0][1] == Fraction(3, 10)


def test_step_empty():
    assert step(LocalContext()) == set()


def test_step_no_com_on_label_mismatch():
    d = parse_context("s[a]: a<-b?l().end, s[b]: (1: b->a!m().end)")
    assert not [l for l, _, _ in step(d) if isinstance(l, ComL)]


def test_step_active_plain_delegates():
    d = parse_context("s[a]: a<-b?l().end, s[b]: (1: b->a!l().end)")
    assert step_active(Plain(d)) == step(d)


def test_step_active_only_own_actions():
    d = parse_context("s[a]: a<-b?l().end, s[b]: (1: b->a!l().end)")
    # the receiving side has no enabled output or tau
    assert step_active(Active(chan("s", "a"), d)) == set()
    sender = step_active(Active(chan("s", "b"), d))
    assert {type(l).__name__ for l, _, _ in sender} == {"OutL", "ComL"}


def test_step_active_bare_tau_head():
    d = LocalContext([(chan("s", "c"),
                       HeadCont(TauH(), parse_context("s[c]: end").get(chan("s", "c"))
                                or __import__("mcmpst").core.End()))])
    edges = step_active(Active(chan("s", "c"), d))
    (l, p, target), = edges
    assert isinstance(l, TauL) and p == 1 and len(target) == 0


def test_reach_courthouse(courthouse):
    g = reach(courthouse.contexts["DI"])
    assert len(g.states) >= 5
    probs = {p for _, _, p, _ in g.edges}
    # the merged 0.7 verdict summand communicates at 7/10; the witness
    # request at 3/10; everything else at 1
    assert {Fraction(7, 10), Fraction(3, 10), Fraction(1)} <= probs


def test_reach_empty():
    g = reach(LocalContext())
    assert len(g.states) == 1 and not g.edges


def test_reach_mismatch_single_state():
    d = parse_context("s[a]: a<-b?l().end, s[b]: (1: b->a!m().end)")
    g = reach(d)
    assert len(g.states) == 1
    assert not internal_edges([(l, p, None) for _, l, p, _ in g.edges])


def test_reach_budget():
    d = parse_context("s[a]: a<-b?l().end, s[b]: (1: b->a!l().end)")
    with pytest.raises(StateBudgetExceeded):
        reach(d, state_cap=1)


def test_safe_examples(courthouse):
    assert safe(courthouse.contexts["DI"]).holds
    assert safe(LocalContext()).holds
    bad = parse_context("s[a]: a<-b?l().end, s[b]: (1: b->a!m().end)")
    v = safe(bad)
    assert not v.holds and "without matching" in v.reason


def test_safe_payload_mismatch_is_unsafe():
    bad = parse_context("s[a]: a<-b?l(nat).end, s[b]: (1: b->a!l(bool).end)")
    assert not safe(bad).holds


def test_dfree_examples(courthouse):
    assert dfree(parse_context("s[a]: a<-b?l().end, s[b]: (1: b->a!l().end)")).holds
    assert dfree(LocalContext()).holds
    assert dfree(courthouse.contexts["DI"]).holds
    v = dfree(parse_context("s[a]: a<-b?l().end, s[b]: (1: b->a!m().end)"))
    assert not v.holds and v.state is not None


def test_safety_preserved_along_reach(courthouse):
    for name in ("DI", "DR"):
        g = reach(courthouse.contexts[name])
        assert safe(courthouse.contexts[name]).holds
        for state in g.states:
            assert safe(state).holds


def test_scenario_safety_preservation():
    rng = random.Random(11)
    for _ in range(10):
        ctx = gen_scenario(rng).context()
        assert safe(ctx).holds
        for state in reach(ctx).states:
            assert safe(state).holds


def test_probabilistic_alternatives_sum_to_one(courthouse):
    g = reach(courthouse.contexts["DI"])
    for i, state in enumerate(g.states):
        for ch, _ in state:
            from mcmpst.ctxlts import _binding_outputs, _binding_taus, _surface
            t = _surface(state.get(ch))
            from mcmpst.core import Mixed, ProbSum
            if isinstance(t, Mixed):
                for b in t.branches:
                    if isinstance(b, ProbSum):
                        assert sum(s.prob for s in b.summands) == 1


def test_pending_courthouse(courthouse):
    drc = courthouse.contexts["DRcore"]
    assert pending(Active(chan("s", "d"), drc))
    assert not pending(Active(chan("s", "j"), drc))


def test_pending_vacuous_end():
    d = parse_context("s[c]: end")
    assert pending(Active(chan("s", "c"), d))


def test_pending_external_input_false():
    d = parse_context("s[j]: j<-p?l().end, s[d]: end")
    assert not pending(Active(chan("s", "j"), d))


def test_pending_internal_input_true():
    d = parse_context("s[j]: j<-d?l().end, s[d]: (1: d->x!m().end)")
    assert pending(Active(chan("s", "j"), d))


def test_pending_ready_internal_output_false():
    d = parse_context("s[a]: a<-b?l().end, s[b]: (1: b->a!l().end)")
    assert not pending(Active(chan("s", "b"), d))


def test_pending_unready_internal_output_true():
    d = parse_context("s[a]: a<-x?other().a<-b?l().end, s[b]: (1: b->a!l().end)")
    assert pending(Active(chan("s", "b"), d))


def test_pending_external_output_sum_true():
    # all outputs aim outside the context: nothing can fire now
    d = parse_context("s[j]: (1: j->p!glt(bool).end), s[d]: (1: d->w!mtg().end)")
    assert pending(Active(chan("s", "j"), d))
    assert pending(Active(chan("s", "d"), d))


def test_pending_requires_active():
    with pytest.raises(Exception):
        pending(Plain(LocalContext()))


def test_graph_exports(courthouse):
    g = reach(courthouse.contexts["DI"])
    data = g.to_json()
    assert data["schema"] == "mcmpst/1"
    assert all("/" in e["prob"] or e["prob"].isdigit() for e in data["edges"])
    dot = g.to_dot()
    assert dot.startswith("digraph") and "->" in dot
