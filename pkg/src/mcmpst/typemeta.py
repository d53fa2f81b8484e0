"""Static type metadata: well-formedness, unfolding, prefix sets, merging.

Type equality throughout the toolkit is syntactic equality up to consistent
renaming of recursion variables; `alpha_canonical` realises it by renaming
binders to a fixed scheme so that `==` on canonical forms is alpha-equality.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, FrozenSet, List, Optional, Tuple, Union

from .core import (
    End, HeadCont, InputT, LocalContext, Mixed, OutH, ProbSum, Rec, SessionType,
    Summand, TauH, TypeVar, rational_str,
)
from .errors import IllFormedType, NotRecursive

ONE = Fraction(1)


# ---------------------------------------------------------------------------
# structural helpers

def free_type_vars(t: SessionType, bound=frozenset()) -> FrozenSet[str]:
    if isinstance(t, TypeVar):
        return frozenset() if t.name in bound else frozenset([t.name])
    if isinstance(t, Rec):
        return free_type_vars(t.body, bound | {t.name})
    if isinstance(t, Mixed):
        out = frozenset()
        for b in t.branches:
            if isinstance(b, InputT):
                out |= free_type_vars(b.cont, bound)
            else:
                for s in b.summands:
                    out |= free_type_vars(s.cont, bound)
        return out
    if isinstance(t, HeadCont):
        return free_type_vars(t.cont, bound)
    return frozenset()


def is_closed(t: SessionType) -> bool:
    return not free_type_vars(t)


def is_guarded(t: SessionType) -> bool:
    """Every recursion body is meaningful action, i.e. not a bare variable."""
    if isinstance(t, Rec):
        return not isinstance(t.body, TypeVar) and is_guarded(t.body)
    if isinstance(t, Mixed):
        for b in t.branches:
            conts = [b.cont] if isinstance(b, InputT) else [s.cont for s in b.summands]
            if not all(is_guarded(c) for c in conts):
                return False
        return True
    if isinstance(t, HeadCont):
        return is_guarded(t.cont)
    return True


def substitute_type(t: SessionType, name: str, repl: SessionType) -> SessionType:
    """t[name := repl]; repl is closed so no capture can occur."""
    if isinstance(t, TypeVar):
        return repl if t.name == name else t
    if isinstance(t, Rec):
        if t.name == name:
            return t
        return Rec(t.name, substitute_type(t.body, name, repl))
    if isinstance(t, Mixed):
        out = []
        for b in t.branches:
            if isinstance(b, InputT):
                out.append(InputT(b.receiver, b.sender, b.label, b.payload,
                                  substitute_type(b.cont, name, repl)))
            else:
                out.append(ProbSum(tuple(
                    Summand(s.prob, s.head, substitute_type(s.cont, name, repl))
                    for s in b.summands)))
        return Mixed(tuple(out))
    if isinstance(t, HeadCont):
        return HeadCont(t.head, substitute_type(t.cont, name, repl))
    return t


def unfold(t: SessionType) -> SessionType:
    """One equi-recursive unfolding step of the outermost recursion."""
    if not isinstance(t, Rec):
        raise NotRecursive("unfold expects a recursive type")
    return substitute_type(t.body, t.name, t)


def unfold_all(t: SessionType) -> SessionType:
    """Unfold until the head constructor is not a recursion binder."""
    steps = 0
    while isinstance(t, Rec):
        t = unfold(t)
        steps += 1
        if steps > 1000:
            raise IllFormedType("unguarded recursion loops under unfolding")
    return t


# ---------------------------------------------------------------------------
# alpha canonicalisation and ordering

def alpha_canonical(t: SessionType) -> SessionType:
    def go(t, env, counter):
        if isinstance(t, TypeVar):
            return TypeVar(env.get(t.name, t.name))
        if isinstance(t, Rec):
            fresh = f"%{counter[0]}"
            counter[0] += 1
            return Rec(fresh, go(t.body, {**env, t.name: fresh}, counter))
        if isinstance(t, Mixed):
            out = []
            for b in t.branches:
                if isinstance(b, InputT):
                    out.append(InputT(b.receiver, b.sender, b.label, b.payload,
                                      go(b.cont, env, counter)))
                else:
                    out.append(ProbSum(tuple(
                        Summand(s.prob, s.head, go(s.cont, env, counter))
                        for s in b.summands)))
            return Mixed(tuple(out))
        if isinstance(t, HeadCont):
            return HeadCont(t.head, go(t.cont, env, counter))
        return t

    return go(t, {}, [0])


def type_sort_key(t: SessionType):
    if isinstance(t, End):
        return (0,)
    if isinstance(t, TypeVar):
        return (1, t.name)
    if isinstance(t, Rec):
        return (2, type_sort_key(t.body))
    if isinstance(t, HeadCont):
        return (3, _head_key(t.head), type_sort_key(t.cont))
    if isinstance(t, Mixed):
        return (4, tuple(_branch_key(b) for b in t.branches))
    raise TypeError(t)


def _head_key(h):
    if isinstance(h, TauH):
        return (1,)
    return (0, h.sender, h.receiver, h.label, h.payload.value if h.payload else "")


def _branch_key(b):
    if isinstance(b, InputT):
        return (0, b.receiver, b.sender, b.label,
                b.payload.value if b.payload else "", type_sort_key(b.cont))
    return (1, tuple((s.prob, _head_key(s.head), type_sort_key(s.cont))
                     for s in b.summands))


def merge_similar(t: SessionType) -> SessionType:
    """Merge probabilistic summands with identical head and continuation,
    adding probabilities, and apply a canonical ordering to all choices."""
    if isinstance(t, (End, TypeVar)):
        return t
    if isinstance(t, Rec):
        return Rec(t.name, merge_similar(t.body))
    if isinstance(t, HeadCont):
        return HeadCont(t.head, merge_similar(t.cont))
    branches = []
    for b in t.branches:
        if isinstance(b, InputT):
            branches.append(InputT(b.receiver, b.sender, b.label, b.payload,
                                   merge_similar(b.cont)))
        else:
            merged: Dict[Tuple, Summand] = {}
            for s in b.summands:
                cont = merge_similar(s.cont)
                key = (_head_key(s.head), type_sort_key(cont))
                if key in merged:
                    prev = merged[key]
                    merged[key] = Summand(prev.prob + s.prob, s.head, cont)
                else:
                    merged[key] = Summand(s.prob, s.head, cont)
            rows = sorted(merged.values(),
                          key=lambda s: (_head_key(s.head), type_sort_key(s.cont), s.prob))
            branches.append(ProbSum(tuple(rows)))
    branches.sort(key=_branch_key)
    return Mixed(tuple(branches))


_canonical_cache: Dict[SessionType, SessionType] = {}


def canonical_type(t: SessionType) -> SessionType:
    """Interned canonical form: merged, sorted, alpha-renamed."""
    hit = _canonical_cache.get(t)
    if hit is None:
        hit = alpha_canonical(merge_similar(t))
        _canonical_cache[t] = hit
        _canonical_cache.setdefault(hit, hit)
    return hit


def types_equal(a: SessionType, b: SessionType) -> bool:
    return canonical_type(a) == canonical_type(b)


def canonical_context(d: LocalContext) -> LocalContext:
    items = [(c, canonical_type(t)) for c, t in d if not isinstance(t, End)]
    items.sort(key=lambda it: it[0].sort_key())
    return LocalContext(items)


# ---------------------------------------------------------------------------
# prefixes

@dataclass(frozen=True)
class InPfx:
    receiver: str
    sender: str


@dataclass(frozen=True)
class OutPfx:
    prob: Fraction
    sender: str
    receiver: str


@dataclass(frozen=True)
class TauPfx:
    prob: Fraction
    cont: SessionType  # stored canonically

    def __repr__(self):
        return f"TauPfx({rational_str(self.prob)}, {self.cont!r})"


Prefix = Union[InPfx, OutPfx, TauPfx]


def pre(t: SessionType) -> FrozenSet[Prefix]:
    """The set of unguarded prefixes; matching output/tau prefixes have their
    probabilities summed. Tau prefixes are keyed by their continuation type."""
    ins = set()
    outs: Dict[Tuple[str, str], Fraction] = {}
    taus: Dict[SessionType, Fraction] = {}

    def walk(t):
        if isinstance(t, (End, TypeVar)):
            return
        if isinstance(t, Rec):
            # equi-recursive: prefixes of the unfolding, so tau continuations
            # are keyed by closed types
            walk(unfold_all(t))
            return
        if isinstance(t, HeadCont):
            # bare heads are committed choices, read at probability 1
            add_summand(ONE, t.head, t.cont)
            return
        for b in t.branches:
            if isinstance(b, InputT):
                ins.add(InPfx(b.receiver, b.sender))
            else:
                for s in b.summands:
                    add_summand(s.prob, s.head, s.cont)

    def add_summand(prob, head, cont):
        if isinstance(head, TauH):
            key = canonical_type(cont)
            taus[key] = taus.get(key, Fraction(0)) + prob
        else:
            key = (head.sender, head.receiver)
            outs[key] = outs.get(key, Fraction(0)) + prob

    walk(t)
    out = set(ins)
    out.update(OutPfx(p, s, r) for (s, r), p in outs.items())
    out.update(TauPfx(p, c) for c, p in taus.items())
    return frozenset(out)


# ---------------------------------------------------------------------------
# well-formedness

def well_formed(t: SessionType) -> List[str]:
    """Diagnostics; empty iff the type is well-formed.

    (a) output heads only inside probabilistic choices,
    (b) every probabilistic choice sums to exactly 1,
    (c) summands sharing sender/receiver/label/mode agree on payload and
        continuation.
    """
    diags: List[str] = []
    if not is_guarded(t):
        raise IllFormedType("unguarded recursion")
    if not is_closed(t):
        raise IllFormedType(f"free type variables {sorted(free_type_vars(t))}")

    def walk(t):
        if isinstance(t, (End, TypeVar)):
            return
        if isinstance(t, Rec):
            walk(t.body)
            return
        if isinstance(t, HeadCont):
            diags.append("bare head outside a probabilistic choice")
            walk(t.cont)
            return
        inputs: Dict[Tuple, Tuple] = {}
        for b in t.branches:
            if isinstance(b, InputT):
                key = (b.receiver, b.sender, b.label)
                sig = (b.payload, canonical_type(b.cont))
                prev = inputs.get(key)
                if prev is not None and prev != sig:
                    diags.append(
                        f"inputs {b.receiver}<-{b.sender}?{b.label} disagree on "
                        "payload or continuation")
                inputs[key] = sig
                walk(b.cont)
            else:
                total = sum((s.prob for s in b.summands), Fraction(0))
                if total != 1:
                    diags.append(
                        f"probabilistic choice sums to {rational_str(total)}, not 1")
                outs: Dict[Tuple, Tuple] = {}
                for s in b.summands:
                    if isinstance(s.head, OutH):
                        key = (s.head.sender, s.head.receiver, s.head.label)
                        sig = (s.head.payload, canonical_type(s.cont))
                        prev = outs.get(key)
                        if prev is not None and prev != sig:
                            diags.append(
                                f"outputs {s.head.sender}->{s.head.receiver}!"
                                f"{s.head.label} disagree on payload or continuation")
                        outs[key] = sig
                    walk(s.cont)

    walk(t)
    return diags


def require_well_formed(t: SessionType) -> None:
    diags = well_formed(t)
    if diags:
        raise IllFormedType("; ".join(diags))


def context_well_formed(d: LocalContext) -> List[str]:
    out = []
    for c, t in d:
        out.extend(f"{c}: {m}" for m in well_formed(t))
    return out
