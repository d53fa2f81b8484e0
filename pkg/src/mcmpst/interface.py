"""Interface synthesis: build a role set and single channel type that the
given refinement context is a subtype of, then validate it with the prover.

The construction follows the shape of the subtyping rules: external actions
pass through to the interface, matched internal communications are linked
away (their continuations inlined with scaled probabilities when possible,
guarded by an internal action when the continuation mixes choices or closes
a recursion), and channels whose next actions all wait on partners inside
the refinement contribute nothing.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from .core import (
    Active, Channel, End, HeadCont, InputT, LocalContext, Mixed, OutH, Plain,
    ProbSum, Rec, SessionType, Summand, TauH, TypeVar,
)
from .ctxlts import CtxGraph, ComL, TauL, pending, reach, safe, _surface
from .errors import NotSafe, Unsupported, ValidationFailed
from .subtype import DEFAULT_BUDGET, Derivation, sub_multi
from .typemeta import canonical_context, merge_similar

ONE = Fraction(1)


class _Builder:
    def __init__(self, session: str):
        self.session = session
        self.memo: Dict[LocalContext, SessionType] = {}
        self.on_path: Dict[LocalContext, str] = {}
        self.used_vars: Dict[LocalContext, str] = {}
        self.counter = 0

    def build(self, d: LocalContext) -> SessionType:
        d = canonical_context(d)
        if len(d) == 0:
            return End()
        if d in self.memo:
            return self.memo[d]
        if d in self.on_path:
            var = self.on_path[d]
            self.used_vars[d] = var
            return TypeVar(var)
        var = f"t{self.counter}"
        self.counter += 1
        self.on_path[d] = var
        try:
            t = self.state_type(d)
        finally:
            del self.on_path[d]
        if d in self.used_vars:
            t = Rec(var, t)
        t = merge_similar(t)
        self.memo[d] = t
        return t

    def state_type(self, d: LocalContext) -> SessionType:
        branches: List = []
        silent: List[Channel] = []
        for ch, raw in d:
            contributed = self.channel_branches(d, ch, _surface(raw))
            if contributed:
                branches.extend(contributed)
            else:
                silent.append(ch)
        if not branches:
            raise ValidationFailed(
                "no channel can contribute an interface branch "
                "(the refinement is internally stuck)", context=d)
        for ch in silent:
            if not pending(Active(ch, d)):
                raise ValidationFailed(
                    f"channel {ch} is neither external, linkable, nor pending",
                    context=d)
        return Mixed(tuple(branches))

    def channel_branches(self, d: LocalContext, ch: Channel, t) -> List:
        if isinstance(t, End) or t is None:
            return []
        if not isinstance(t, Mixed):
            raise ValidationFailed(f"channel {ch} has no surface choice",
                                   context=d)
        out: List = []
        for b in t.branches:
            if isinstance(b, InputT):
                if d.has_role(ch.session, b.sender):
                    continue  # internal input: resolved in the sender's branch
                out.append(InputT(b.receiver, b.sender, b.label, b.payload,
                                  self.build(d.set(ch, b.cont))))
            else:
                rows = self.sum_rows(d, ch, b)
                if rows is not None:
                    out.append(ProbSum(tuple(rows)))
        return out

    def sum_rows(self, d: LocalContext, ch: Channel,
                 b: ProbSum) -> Optional[List[Summand]]:
        # a sum with an unmatched internal output must wait as a whole
        for s in b.summands:
            if isinstance(s.head, OutH):
                partner = d.channel_of_role(ch.session, s.head.receiver)
                if partner is not None and partner != ch \
                        and self.match_input(d, partner, s.head) is None:
                    return None
        rows: List[Summand] = []
        for s in b.summands:
            if isinstance(s.head, TauH):
                rows.append(Summand(s.prob, TauH(),
                                    self.build(d.set(ch, s.cont))))
                continue
            partner = d.channel_of_role(ch.session, s.head.receiver)
            if partner is None:
                rows.append(Summand(s.prob, s.head,
                                    self.build(d.set(ch, s.cont))))
                continue
            inp = self.match_input(d, partner, s.head)
            child = self.build(d.set(ch, s.cont).set(partner, inp.cont))
            inline = self.inline_rows(child)
            if inline is not None:
                rows.extend(Summand(s.prob * q, h, c) for q, h, c in inline)
            else:
                rows.append(Summand(s.prob, TauH(), child))
        return rows

    @staticmethod
    def match_input(d: LocalContext, partner: Channel,
                    head: OutH) -> Optional[InputT]:
        t = _surface(d.get(partner))
        if isinstance(t, Mixed):
            for b in t.branches:
                if (isinstance(b, InputT) and b.receiver == head.receiver
                        and b.sender == head.sender and b.label == head.label
                        and b.payload == head.payload):
                    return b
        return None

    @staticmethod
    def inline_rows(t: SessionType):
        """A single full-mass probabilistic sum can be inlined into the
        enclosing sum with scaled probabilities; anything else (a mixed
        choice, an input, end, or a recursion back-edge) needs a guarding
        internal action."""
        if isinstance(t, Mixed) and len(t.branches) == 1 \
                and isinstance(t.branches[0], ProbSum):
            ps = t.branches[0]
            if sum((s.prob for s in ps.summands), Fraction(0)) == 1:
                return [(s.prob, s.head, s.cont) for s in ps.summands]
        return None


def synthesize_interface(d: LocalContext, budget: int = DEFAULT_BUDGET,
                         ) -> Tuple[frozenset, SessionType, Derivation]:
    """Construct roles and a type with `d <=_1 {s[roles]: type}`; the result
    is validated by the subtyping prover before being returned."""
    sessions = d.sessions()
    if len(sessions) > 1:
        raise Unsupported(f"multi-session context: {sorted(sessions)}")
    verdict = safe(d)
    if not verdict:
        raise NotSafe(f"context is not safe: {verdict.reason}")
    d = canonical_context(d)
    if len(d) == 0:
        # base case: an empty (or all-end) refinement has the interface `end`
        from .core import EMPTY_CONTEXT
        from .subtype import Goal
        trivial = Derivation("S-∅-1", Goal(Plain(EMPTY_CONTEXT), ONE,
                                           EMPTY_CONTEXT))
        return frozenset(), End(), trivial
    session = next(iter(sessions))
    roles = frozenset().union(*[c.roles for c, _ in d])
    builder = _Builder(session)
    candidate = builder.build(d)
    iface = LocalContext([(Channel(session, roles), candidate)])
    deriv = sub_multi(d, iface, budget)
    if deriv is None:
        raise ValidationFailed(
            "constructed interface was rejected by the prover",
            context=d, candidate=candidate)
    return roles, candidate, deriv


def hide_internal(d: LocalContext) -> Tuple[CtxGraph, List[str]]:
    """The reachability graph of `d` with each edge tagged internal (both
    endpoint roles inside the context) or external."""
    sessions = d.sessions()
    if len(sessions) > 1:
        raise Unsupported(f"multi-session context: {sorted(sessions)}")
    graph = reach(d)
    own = frozenset().union(*[c.roles for c, _ in d]) if len(d) else frozenset()
    tags = []
    for _, label, _, _ in graph.edges:
        if isinstance(label, TauL):
            tags.append("internal")
        elif isinstance(label, ComL):
            both = {label.sender, label.receiver} <= own
            tags.append("internal" if both else "external")
        else:
            tags.append("internal" if {getattr(label, "sender"),
                                       getattr(label, "receiver")} <= own
                        else "external")
    return graph, tags
