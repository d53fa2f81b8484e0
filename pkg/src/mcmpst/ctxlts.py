"""Labelled transitions of local contexts, reachability, and the decidable
safety / deadlock-freedom / pending predicates."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, List, Optional, Set, Tuple, Union

from .core import (
    Active, BaseType, Channel, End, HeadCont, InputT, LocalContext, Mixed,
    OutH, Plain, ProbSum, Rec, SessionType, TauH, rational_str,
)
from .errors import IllFormedType, StateBudgetExceeded, UnboundActiveChannel
from .typemeta import canonical_context, context_well_formed, unfold_all

ONE = Fraction(1)

DEFAULT_STATE_CAP = 100_000


# ---------------------------------------------------------------------------
# labels

@dataclass(frozen=True)
class InL:
    session: str
    receiver: str
    sender: str
    label: str
    payload: Optional[BaseType]

    def __str__(self):
        u = self.payload.value if self.payload else ""
        return f"{self.session}:{self.receiver}<-{self.sender}?{self.label}({u})"


@dataclass(frozen=True)
class OutL:
    session: str
    sender: str
    receiver: str
    label: str
    payload: Optional[BaseType]

    def __str__(self):
        u = self.payload.value if self.payload else ""
        return f"{self.session}:{self.sender}->{self.receiver}!{self.label}({u})"


@dataclass(frozen=True)
class TauL:
    session: str

    def __str__(self):
        return f"{self.session}:tau"


@dataclass(frozen=True)
class ComL:
    session: str
    sender: str
    receiver: str
    label: str
    payload: Optional[BaseType]

    def __str__(self):
        u = self.payload.value if self.payload else ""
        return f"{self.session}:{self.sender}->{self.receiver}:{self.label}({u})"


CtxLabel = Union[InL, OutL, TauL, ComL]

Edge = Tuple[CtxLabel, Fraction, LocalContext]


# ---------------------------------------------------------------------------
# single-binding transitions (premises of [TR-Com]); bare heads fire at 1

def _surface(t: SessionType) -> SessionType:
    return unfold_all(t) if isinstance(t, Rec) else t


def _binding_inputs(ch: Channel, t: SessionType):
    t = _surface(t)
    if isinstance(t, Mixed):
        for b in t.branches:
            if isinstance(b, InputT):
                yield (InL(ch.session, b.receiver, b.sender, b.label, b.payload),
                       ONE, b.cont)


def _binding_outputs(ch: Channel, t: SessionType):
    t = _surface(t)
    if isinstance(t, Mixed):
        for b in t.branches:
            if isinstance(b, ProbSum):
                for s in b.summands:
                    if isinstance(s.head, OutH):
                        h = s.head
                        yield (OutL(ch.session, h.sender, h.receiver, h.label,
                                    h.payload), s.prob, s.cont)
    elif isinstance(t, HeadCont) and isinstance(t.head, OutH):
        h = t.head
        yield (OutL(ch.session, h.sender, h.receiver, h.label, h.payload),
               ONE, t.cont)


def _binding_taus(ch: Channel, t: SessionType):
    t = _surface(t)
    if isinstance(t, Mixed):
        for b in t.branches:
            if isinstance(b, ProbSum):
                for s in b.summands:
                    if isinstance(s.head, TauH):
                        yield (s.prob, s.cont)
    elif isinstance(t, HeadCont) and isinstance(t.head, TauH):
        yield (ONE, t.cont)


def step(d: LocalContext) -> Set[Edge]:
    """All In/Out/tau transitions plus every matched Com.

    Com probability is the output summand's probability ([R-Com]: the
    step probability is determined by the sender). Targets are canonical.
    """
    edges: Set[Edge] = set()
    items = list(d)
    for ch, t in items:
        for label, prob, cont in _binding_inputs(ch, t):
            edges.add((label, prob, canonical_context(d.set(ch, cont))))
        for label, prob, cont in _binding_outputs(ch, t):
            edges.add((label, prob, canonical_context(d.set(ch, cont))))
        for prob, cont in _binding_taus(ch, t):
            edges.add((TauL(ch.session), prob, canonical_context(d.set(ch, cont))))
    for ch1, t1 in items:
        for out, prob, cont1 in _binding_outputs(ch1, t1):
            for ch2, t2 in items:
                if ch2 == ch1 or ch2.session != ch1.session:
                    continue
                for inp, _, cont2 in _binding_inputs(ch2, t2):
                    if (inp.sender == out.sender and inp.receiver == out.receiver
                            and inp.label == out.label and inp.payload == out.payload):
                        target = canonical_context(d.set(ch1, cont1).set(ch2, cont2))
                        edges.add((ComL(out.session, out.sender, out.receiver,
                                        out.label, out.payload), prob, target))
    return edges


def step_active(l) -> Set[Edge]:
    """Transitions of a context with an active channel: only those whose
    enabling output or tau belongs to the active channel. Targets drop the
    marker."""
    if isinstance(l, Plain):
        return step(l.ctx)
    d, ch = l.ctx, l.chan
    t = d.get(ch)
    if t is None:
        return set()
    edges: Set[Edge] = set()
    for label, prob, cont in _binding_outputs(ch, t):
        edges.add((label, prob, canonical_context(d.set(ch, cont))))
        for ch2, t2 in d:
            if ch2 == ch or ch2.session != ch.session:
                continue
            for inp, _, cont2 in _binding_inputs(ch2, t2):
                if (inp.sender == label.sender and inp.receiver == label.receiver
                        and inp.label == label.label and inp.payload == label.payload):
                    target = canonical_context(d.set(ch, cont).set(ch2, cont2))
                    edges.add((ComL(label.session, label.sender, label.receiver,
                                    label.label, label.payload), prob, target))
    for prob, cont in _binding_taus(ch, t):
        edges.add((TauL(ch.session), prob, canonical_context(d.set(ch, cont))))
    return edges


def internal_edges(edges) -> List[Edge]:
    """The `|->` steps: communications and internal actions."""
    return [e for e in edges if isinstance(e[0], (ComL, TauL))]


# ---------------------------------------------------------------------------
# reachability

@dataclass
class CtxGraph:
    states: List[LocalContext]
    index: Dict[LocalContext, int]
    edges: List[Tuple[int, CtxLabel, Fraction, int]]
    initial: int

    def outgoing(self, i: int):
        return [e for e in self.edges if e[0] == i]

    def to_json(self):
        return {
            "schema": "mcmpst/1",
            "initial": self.initial,
            "states": [{"id": i, "context": _ctx_text(s)}
                       for i, s in enumerate(self.states)],
            "edges": [{"src": a, "label": str(l), "prob": rational_str(p),
                       "dst": b, "kind": _kind(l)}
                      for a, l, p, b in self.edges],
        }

    def to_dot(self):
        lines = ["digraph ctx {", '  rankdir=LR;']
        for i, s in enumerate(self.states):
            shape = "doublecircle" if i == self.initial else "circle"
            lines.append(f'  n{i} [shape={shape}, label="{i}"];')
        for a, l, p, b in self.edges:
            style = ' style=dashed' if _kind(l) in ("in", "out") else ""
            lines.append(f'  n{a} -> n{b} [label="{l} @{rational_str(p)}"{style}];')
        lines.append("}")
        return "\n".join(lines)


def _kind(label) -> str:
    return {InL: "in", OutL: "out", TauL: "tau", ComL: "com"}[type(label)]


def _ctx_text(d: LocalContext) -> str:
    from .surface import pp_context
    return pp_context(d)


def reach(d: LocalContext, state_cap: int = DEFAULT_STATE_CAP) -> CtxGraph:
    """All states reachable via |-> (com and tau edges); each stored state
    also records its observable in/out edges."""
    diags = context_well_formed(d)
    if diags:
        raise IllFormedType("; ".join(diags))
    init = canonical_context(d)
    states = [init]
    index = {init: 0}
    edges: List[Tuple[int, CtxLabel, Fraction, int]] = []
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for label, prob, target in sorted(
                step(states[i]), key=lambda e: (str(e[0]), e[1])):
            if isinstance(label, (ComL, TauL)):
                j = index.get(target)
                if j is None:
                    if len(states) >= state_cap:
                        raise StateBudgetExceeded(
                            f"more than {state_cap} context states")
                    j = len(states)
                    states.append(target)
                    index[target] = j
                    queue.append(j)
                edges.append((i, label, prob, j))
            else:
                j = index.get(target, -1)  # observable edge; target not explored
                edges.append((i, label, prob, j))
    return CtxGraph(states, index, edges, 0)


# ---------------------------------------------------------------------------
# safety and deadlock-freedom

@dataclass
class Verdict:
    holds: bool
    reason: str = ""
    path: List[Tuple[CtxLabel, Fraction]] = field(default_factory=list)
    state: Optional[LocalContext] = None

    def __bool__(self):
        return self.holds


def _shortest_path(graph: CtxGraph, target: int):
    prev: Dict[int, Tuple[int, CtxLabel, Fraction]] = {}
    seen = {graph.initial}
    queue = deque([graph.initial])
    while queue:
        i = queue.popleft()
        if i == target:
            break
        for a, l, p, b in graph.edges:
            if a == i and isinstance(l, (ComL, TauL)) and b not in seen:
                seen.add(b)
                prev[b] = (i, l, p)
                queue.append(b)
    path = []
    node = target
    while node != graph.initial:
        i, l, p = prev[node]
        path.append((l, p))
        node = i
    path.reverse()
    return path


def safe(d: LocalContext, state_cap: int = DEFAULT_STATE_CAP) -> Verdict:
    """Every reachable state pairing an output with a dual-prefix input must
    offer the matching communication."""
    graph = reach(d, state_cap)
    for i, state in enumerate(graph.states):
        edges = step(state)
        outs = [(l, p) for l, p, _ in edges if isinstance(l, OutL)]
        ins = [l for l, _, _ in edges if isinstance(l, InL)]
        coms = {(l.session, l.sender, l.receiver, l.label, l.payload)
                for l, _, _ in edges if isinstance(l, ComL)}
        for out, prob in outs:
            dual = [l for l in ins
                    if l.session == out.session and l.receiver == out.receiver
                    and l.sender == out.sender]
            if dual and (out.session, out.sender, out.receiver, out.label,
                         out.payload) not in coms:
                return Verdict(
                    False,
                    f"output {out} and input {dual[0]} without matching "
                    "communication",
                    _shortest_path(graph, i), state)
    return Verdict(True)


def dfree(d: LocalContext, state_cap: int = DEFAULT_STATE_CAP) -> Verdict:
    """Every |->-terminal reachable state is the empty context."""
    graph = reach(d, state_cap)
    for i, state in enumerate(graph.states):
        has_internal = any(isinstance(l, (ComL, TauL))
                           for a, l, _, _ in graph.edges if a == i)
        if not has_internal and len(state) > 0:
            return Verdict(False, "terminal state is not empty",
                           _shortest_path(graph, i), state)
    return Verdict(True)


# ---------------------------------------------------------------------------
# pending

def pending(l) -> bool:
    """An active context is pending when none of the active channel's next
    actions can fire now and all of them are accounted for elsewhere:

    1. every input's partner role is bound in the context (internal inputs
       are always resolved in the sender's branch), and
    2. every probabilistic sum contains no internal action and none of its
       outputs finds its partner bound in the context offering a matching
       unguarded input.

    Empty sums (end) are vacuously pending. Bare output heads behave as the
    singleton sum; bare tau heads can always fire and are never pending.
    """
    if isinstance(l, Plain):
        raise UnboundActiveChannel("pending is defined on active contexts")
    d, ch = l.ctx, l.chan
    t = d.get(ch)
    if t is None or isinstance(t, End):
        return True
    t = _surface(t)
    if isinstance(t, HeadCont):
        if isinstance(t.head, TauH):
            return False
        return _output_unmatched(d, ch, t.head)
    if not isinstance(t, Mixed):
        return False
    for b in t.branches:
        if isinstance(b, InputT):
            if not d.has_role(ch.session, b.sender):
                return False
        else:
            for s in b.summands:
                if isinstance(s.head, TauH):
                    return False
                if not _output_unmatched(d, ch, s.head):
                    return False
    return True


def _output_unmatched(d: LocalContext, ch: Channel, head: OutH) -> bool:
    """True unless the receiver is bound in the context and offers a matching
    unguarded input (in which case the branch must link, not wait)."""
    partner = d.channel_of_role(ch.session, head.receiver)
    if partner is None:
        return True
    t2 = _surface(d.get(partner))
    if isinstance(t2, Mixed):
        for b in t2.branches:
            if (isinstance(b, InputT) and b.receiver == head.receiver
                    and b.sender == head.sender and b.label == head.label
                    and b.payload == head.payload):
                return False
    return True
