"""Decision procedures with certificate output for the three subtyping
relations: standard (types), single-channel, and multi-channel refinement
subtyping on local contexts.

All three are coinductive; the provers memoise goals and accept a goal that
recurs along its own proof path, provided at least one equi-recursive
unfolding happened in between (cycles made of decomposition steps alone are
rejected: they would accept vacuously).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, Iterator, List, Optional, Sequence, Set, Tuple, Union

from .core import (
    Active, Channel, End, HeadCont, InputT, LocalContext, Mixed, OutH, Plain,
    ProbSum, Rec, SessionType, Summand, TauH, rational_str, EMPTY_CONTEXT,
)
from .ctxlts import pending
from .errors import IllFormedType, SearchBudgetExceeded
from .typemeta import (
    canonical_context, canonical_type, context_well_formed, pre, unfold_all,
)

ONE = Fraction(1)

DEFAULT_BUDGET = 1_000_000


# ---------------------------------------------------------------------------
# goals and derivations

@dataclass(frozen=True)
class Goal:
    """A context subtyping obligation `lhs <=_prob rhs`.

    `rhs` is a local context; the empty context encodes the empty supertype.
    """
    lhs: Union[Plain, Active]
    prob: Fraction
    rhs: LocalContext


@dataclass(frozen=True)
class TGoal:
    """A plain type subtyping obligation `sub <= sup` (standard relation)."""
    sub: SessionType
    sup: SessionType


@dataclass(frozen=True)
class Derivation:
    rule: str
    goal: Union[Goal, TGoal]
    children: Tuple["Derivation", ...] = ()
    backedge: bool = False

    def to_json(self):
        return {
            "rule": self.rule,
            "goal": _goal_json(self.goal),
            "backedge": self.backedge,
            "children": [c.to_json() for c in self.children],
        }


def _goal_json(g):
    from .surface import pp_active, pp_context, pp_type
    if isinstance(g, TGoal):
        return {"sub": pp_type(g.sub), "sup": pp_type(g.sup)}
    return {"lhs": pp_active(g.lhs), "prob": rational_str(g.prob),
            "rhs": pp_context(g.rhs)}


def format_derivation(d: Derivation, indent: int = 0) -> str:
    from .surface import pp_active, pp_context, pp_type
    g = d.goal
    if isinstance(g, TGoal):
        line = f"{pp_type(g.sub)}  <=  {pp_type(g.sup)}"
    else:
        line = (f"{pp_active(g.lhs)}  <=[{rational_str(g.prob)}]  "
                f"{pp_context(g.rhs)}")
    mark = " (coinductive)" if d.backedge else ""
    out = ["  " * indent + f"[{d.rule}]{mark} {line}"]
    for c in d.children:
        out.append(format_derivation(c, indent + 1))
    return "\n".join(out)


# ---------------------------------------------------------------------------
# shared helpers

def _canon_active(lhs) -> Union[Plain, Active]:
    if isinstance(lhs, Plain):
        return Plain(canonical_context(lhs.ctx))
    return Active(lhs.chan, canonical_context(lhs.ctx))


def _goal(lhs, prob, rhs: LocalContext) -> Goal:
    return Goal(_canon_active(lhs), prob, canonical_context(rhs))


def _is_tau_singleton(t: SessionType):
    """Match `(p: tau).T`: a one-branch mixed choice holding a one-summand
    probabilistic sum with an internal-action head."""
    if isinstance(t, Mixed) and len(t.branches) == 1:
        b = t.branches[0]
        if isinstance(b, ProbSum) and len(b.summands) == 1 \
                and isinstance(b.summands[0].head, TauH):
            return b.summands[0]
    return None


def _single_input(t: SessionType) -> Optional[InputT]:
    if isinstance(t, Mixed) and len(t.branches) == 1 \
            and isinstance(t.branches[0], InputT):
        return t.branches[0]
    return None


def _single_probsum(t: SessionType) -> Optional[ProbSum]:
    if isinstance(t, Mixed) and len(t.branches) == 1 \
            and isinstance(t.branches[0], ProbSum):
        return t.branches[0]
    return None


def _branch_actors(b) -> FrozenSet[str]:
    if isinstance(b, InputT):
        return frozenset([b.receiver])
    return frozenset(s.head.sender for s in b.summands if isinstance(s.head, OutH))


def _strictly_blocked(d: LocalContext, ch: Channel, branches) -> bool:
    """Whether a part of the active channel's choice can be dropped with an
    empty block inside a decomposition rule. Unlike whole-channel branches of
    [S-Σ-1] (whose remaining behaviour the empty-context joins still guard),
    a dropped part vanishes from every premise, so it must be unable to fire
    and invisible outside: every input internal, every sum free of internal
    actions with all outputs aimed at busy partners inside the context."""
    from .ctxlts import _output_unmatched
    for b in branches:
        if isinstance(b, InputT):
            if not d.has_role(ch.session, b.sender):
                return False
        else:
            for s in b.summands:
                if isinstance(s.head, TauH):
                    return False
                if not d.has_role(ch.session, s.head.receiver):
                    return False
                if not _output_unmatched(d, ch, s.head):
                    return False
    return True


def _pre_of_branch(b) -> FrozenSet:
    return pre(Mixed((b,)))


class _Budget:
    __slots__ = ("left",)

    def __init__(self, n):
        self.left = n

    def spend(self, n=1):
        self.left -= n
        if self.left < 0:
            raise SearchBudgetExceeded("subtyping search budget exhausted")


# ---------------------------------------------------------------------------
# the multi-channel prover

class _MultiSearch:
    def __init__(self, budget: int):
        self.budget = _Budget(budget)
        self.memo_true: Dict[Goal, Derivation] = {}
        self.memo_false: Set[Goal] = set()
        self.path: Dict[Goal, int] = {}
        self.unfolds = 0
        self.fires = 0

    # -- plumbing ----------------------------------------------------------

    def _surface(self, t: SessionType) -> SessionType:
        if isinstance(t, Rec):
            self.unfolds += 1
            return unfold_all(t)
        return t

    def prove(self, goal: Goal):
        hit = self.memo_true.get(goal)
        if hit is not None:
            return hit, set()
        if goal in self.memo_false:
            return None, set()
        if goal in self.path:
            if self.unfolds > self.path[goal]:
                self.fires += 1
                return Derivation("coinduction", goal, (), backedge=True), {goal}
            return None, set()
        self.path[goal] = self.unfolds
        fire_mark = self.fires
        try:
            result = self.attack(goal)
        finally:
            del self.path[goal]
        if result is not None:
            deriv, deps = result
            deps.discard(goal)
            if not deps:
                self.memo_true[goal] = deriv
            return deriv, deps
        if self.fires == fire_mark:
            self.memo_false.add(goal)
        return None, set()

    def prove_all(self, rule: str, goal: Goal, children: Sequence[Goal]):
        derivs, deps = [], set()
        for sub in children:
            d, dd = self.prove(sub)
            if d is None:
                return None
            derivs.append(d)
            deps |= dd
        return Derivation(rule, goal, tuple(derivs)), deps

    # -- rule dispatch -------------------------------------------------------

    def attack(self, goal: Goal):
        lhs, prob, rhs = goal.lhs, goal.prob, goal.rhs
        if len(rhs) == 0:
            return self.attack_empty_rhs(goal)
        if len(rhs) > 1:
            return self.attack_split(goal)
        (c2, t2), = rhs.bindings
        t2 = self._surface(t2)
        for cand in self.candidates(goal, c2, t2):
            got = cand()
            if got is not None:
                return got
        return None

    def attack_empty_rhs(self, goal: Goal):
        self.budget.spend()
        if isinstance(goal.lhs, Plain):
            if len(goal.lhs.ctx) == 0 and goal.prob == 1:
                return Derivation("S-∅-1", goal), set()
            return None
        if pending(goal.lhs):
            return Derivation("S-∅", goal), set()
        return None

    # -- [S-Split] -----------------------------------------------------------

    def attack_split(self, goal: Goal):
        if not isinstance(goal.lhs, Plain) or goal.prob != 1:
            return None
        bindings = goal.rhs.bindings
        last = bindings[-1]
        rest = LocalContext(bindings[:-1])
        lhs_items = list(goal.lhs.ctx)
        # candidate owners for each lhs binding, preferring the role-subset match
        owners: List[List[int]] = []
        for ch, _ in lhs_items:
            cand = []
            for j, (c2, _) in enumerate(bindings):
                if c2.session == ch.session:
                    cand.append((0 if ch.roles <= c2.roles else 1, j))
            if not cand:
                return None
            owners.append([j for _, j in sorted(cand)])
        for assignment in itertools.product(*owners):
            self.budget.spend()
            block_last = LocalContext(
                it for it, j in zip(lhs_items, assignment) if j == len(bindings) - 1)
            block_rest = LocalContext(
                it for it, j in zip(lhs_items, assignment) if j != len(bindings) - 1)
            got = self.prove_all("S-Split", goal, [
                _goal(Plain(block_rest), ONE, rest),
                _goal(Plain(block_last), ONE, LocalContext([last])),
            ])
            if got is not None:
                return got
        return None

    # -- candidates for single-binding rhs ------------------------------------

    def candidates(self, goal: Goal, c2: Channel, t2: SessionType):
        lhs, prob = goal.lhs, goal.prob
        if isinstance(lhs, Plain):
            if isinstance(t2, Mixed) and len(lhs.ctx) > 0:
                yield lambda: self.rule_sigma1(goal, c2, t2)
            yield lambda: self.rule_tau_r(goal, c2, t2)
            return
        # active channel
        ctx, ch = lhs.ctx, lhs.chan
        t = ctx.get(ch)
        t = self._surface(t) if t is not None else None
        if isinstance(t, HeadCont):
            if isinstance(t.head, OutH):
                yield lambda: self.rule_link(goal, t)
                yield lambda: self.rule_bang(goal, c2, t2, t)
            else:
                yield lambda: self.rule_tau_l(goal, t)
        elif isinstance(t, Mixed):
            single_in = _single_input(t)
            single_ps = _single_probsum(t)
            if single_in is not None:
                yield lambda: self.rule_quest(goal, c2, t2, single_in)
            elif single_ps is not None:
                yield lambda: self.rule_oplus(goal, c2, t2, single_ps)
                if isinstance(t2, Mixed):
                    yield lambda: self.rule_sigma_out(goal, c2, t2, [single_ps])
            else:
                ins = [b for b in t.branches if isinstance(b, InputT)]
                outs = [b for b in t.branches if isinstance(b, ProbSum)]
                if ins and outs:
                    if isinstance(t2, Mixed):
                        yield lambda: self.rule_sigma2(goal, c2, t2, ins, outs)
                elif ins:
                    if isinstance(t2, Mixed):
                        yield lambda: self.rule_sigma_in(goal, c2, t2, ins)
                elif outs:
                    if isinstance(t2, Mixed):
                        yield lambda: self.rule_sigma_out(goal, c2, t2, outs)
        yield lambda: self.rule_tau_r(goal, c2, t2)

    # -- individual rules ------------------------------------------------------

    def rule_tau_r(self, goal: Goal, c2, t2):
        """[S-τ-R]: Λ <=_p c:(p: tau).T  <==  Λ <=_1 c:T."""
        self.budget.spend()
        s = _is_tau_singleton(t2)
        if s is None or s.prob != goal.prob:
            return None
        return self.prove_all("S-τ-R", goal, [
            _goal(goal.lhs, ONE, LocalContext([(c2, s.cont)]))])

    def rule_tau_l(self, goal: Goal, t: HeadCont):
        """[S-τ-L]: drop the committed internal action on the left."""
        self.budget.spend()
        ctx, ch = goal.lhs.ctx, goal.lhs.chan
        return self.prove_all("S-τ-L", goal, [
            _goal(Plain(ctx.set(ch, t.cont)), goal.prob, goal.rhs)])

    def rule_link(self, goal: Goal, t: HeadCont):
        """[S-Link]: discharge a committed internal output against a matching
        unguarded input of a partner channel; invisible in the supertype."""
        self.budget.spend()
        ctx, ch = goal.lhs.ctx, goal.lhs.chan
        head = t.head
        if head.sender not in ch.roles:
            return None
        partner = ctx.channel_of_role(ch.session, head.receiver)
        if partner is None or partner == ch:
            return None
        t2 = self._surface(ctx.get(partner))
        if not isinstance(t2, Mixed):
            return None
        for b in t2.branches:
            if (isinstance(b, InputT) and b.receiver == head.receiver
                    and b.sender == head.sender and b.label == head.label
                    and b.payload == head.payload):
                child = Plain(ctx.set(ch, t.cont).set(partner, b.cont))
                got = self.prove_all("S-Link", goal,
                                     [_goal(child, goal.prob, goal.rhs)])
                if got is not None:
                    return got
        return None

    def rule_bang(self, goal: Goal, c2, t2, t: HeadCont):
        """[S-!]: an external committed output matches the identical
        probability-weighted output of the supertype."""
        self.budget.spend()
        ctx, ch = goal.lhs.ctx, goal.lhs.chan
        head = t.head
        ps = _single_probsum(t2)
        if ps is None or len(ps.summands) != 1:
            return None
        s = ps.summands[0]
        if s.head != head or s.prob != goal.prob:
            return None
        if not (ch.roles <= c2.roles and head.sender in c2.roles):
            return None
        rest = ctx.without(ch)
        if rest.has_role(ch.session, head.receiver):
            return None
        return self.prove_all("S-!", goal, [
            _goal(Plain(ctx.set(ch, t.cont)), ONE, LocalContext([(c2, s.cont)]))])

    def rule_quest(self, goal: Goal, c2, t2, inp: InputT):
        """[S-?]: an external input matches the identical supertype input."""
        self.budget.spend()
        if goal.prob != 1:
            return None
        ctx, ch = goal.lhs.ctx, goal.lhs.chan
        sup = _single_input(t2)
        if sup is None:
            return None
        if (sup.receiver, sup.sender, sup.label, sup.payload) != \
                (inp.receiver, inp.sender, inp.label, inp.payload):
            return None
        if not (ch.roles <= c2.roles and inp.receiver in c2.roles):
            return None
        rest = ctx.without(ch)
        if rest.has_role(ch.session, inp.sender):
            return None
        return self.prove_all("S-?", goal, [
            _goal(Plain(ctx.set(ch, inp.cont)), ONE,
                  LocalContext([(c2, sup.cont)]))])

    def rule_sigma1(self, goal: Goal, c2, t2: Mixed):
        """[S-Σ-1]: one branch per channel, each with the active marker; the
        supertype's choice is split along the channels (blocks may be empty,
        their union may not)."""
        ctx = goal.lhs.ctx
        chans = [ch for ch, _ in ctx]
        branches = list(t2.branches)
        owners: List[List[int]] = []
        for b in branches:
            actors = _branch_actors(b)
            scored = sorted(
                range(len(chans)),
                key=lambda k: (0 if actors and actors <= chans[k].roles else 1, k))
            owners.append(scored)
        for assignment in itertools.product(*owners):
            self.budget.spend()
            children = []
            for k, ch in enumerate(chans):
                block = tuple(b for b, a in zip(branches, assignment) if a == k)
                rhs = (LocalContext([(c2, Mixed(block))]) if block
                       else EMPTY_CONTEXT)
                children.append(_goal(Active(ch, ctx), goal.prob, rhs))
            got = self.prove_all("S-Σ-1", goal, children)
            if got is not None:
                return got
        return None

    def rule_sigma2(self, goal: Goal, c2, t2: Mixed, ins, outs):
        """[S-Σ-2]: split the active mixed choice into its input and output
        parts; the supertype choice is bipartitioned accordingly."""
        ctx, ch = goal.lhs.ctx, goal.lhs.chan
        branches = list(t2.branches)
        sides: List[List[int]] = []
        for b in branches:
            first = 0 if isinstance(b, InputT) else 1
            sides.append([first, 1 - first])
        for assignment in itertools.product(*sides):
            self.budget.spend()
            part_in = tuple(b for b, a in zip(branches, assignment) if a == 0)
            part_out = tuple(b for b, a in zip(branches, assignment) if a == 1)
            if not part_in and not _strictly_blocked(ctx, ch, ins):
                continue
            if not part_out and not _strictly_blocked(ctx, ch, outs):
                continue
            rhs_in = (LocalContext([(c2, Mixed(part_in))]) if part_in
                      else EMPTY_CONTEXT)
            rhs_out = (LocalContext([(c2, Mixed(part_out))]) if part_out
                       else EMPTY_CONTEXT)
            got = self.prove_all("S-Σ-2", goal, [
                _goal(Active(ch, ctx.set(ch, Mixed(tuple(ins)))), goal.prob, rhs_in),
                _goal(Active(ch, ctx.set(ch, Mixed(tuple(outs)))), goal.prob, rhs_out),
            ])
            if got is not None:
                return got
        return None

    def rule_sigma_in(self, goal: Goal, c2, t2: Mixed, ins):
        """[S-Σ-?]: distribute the supertype branches over retained inputs
        (at most one each); unmatched internal inputs keep empty blocks,
        other extra inputs are dropped against a retained prefix-twin."""
        ctx, ch = goal.lhs.ctx, goal.lhs.chan
        branches = list(t2.branches)
        if len(branches) > len(ins):
            return None
        for chosen in itertools.permutations(range(len(ins)), len(branches)):
            self.budget.spend()
            block: Dict[int, object] = dict(zip(chosen, branches))
            unassigned = [i for i in range(len(ins)) if i not in block]
            for mask in itertools.product((0, 1), repeat=len(unassigned)):
                # 0 = retain with an empty block (pending), 1 = drop
                retained = set(block) | {i for i, m in zip(unassigned, mask) if m == 0}
                dropped = [i for i, m in zip(unassigned, mask) if m == 1]
                if not retained:
                    continue
                if any(m == 0 and not _strictly_blocked(ctx, ch, [ins[i]])
                       for i, m in zip(unassigned, mask)):
                    continue
                pres = {pre(Mixed((ins[i],))) for i in retained}
                if any(pre(Mixed((ins[j],))) not in pres for j in dropped):
                    continue
                children = []
                for i in sorted(retained):
                    rhs = (LocalContext([(c2, Mixed((block[i],)))])
                           if i in block else EMPTY_CONTEXT)
                    children.append(_goal(
                        Active(ch, ctx.set(ch, Mixed((ins[i],)))), goal.prob, rhs))
                got = self.prove_all("S-Σ-?", goal, children)
                if got is not None:
                    return got
        return None

    def rule_sigma_out(self, goal: Goal, c2, t2: Mixed, outs):
        """[S-Σ-!]: each subtype sum gets at most one supertype branch; the
        remaining supertype branches are extra outputs covered by the prefix
        condition; sums left without a block must be pending."""
        ctx, ch = goal.lhs.ctx, goal.lhs.chan
        branches = list(t2.branches)
        lhs_pres = [pre(Mixed((o,))) for o in outs]
        choices: List[List[int]] = []
        for b in branches:
            cand = list(range(len(outs)))
            if isinstance(b, ProbSum) and _pre_of_branch(b) in lhs_pres:
                cand.append(-1)  # may be an extra output of the supertype
            choices.append(cand)
        for assignment in itertools.product(*choices):
            self.budget.spend()
            counts = [assignment.count(o) for o in range(len(outs))]
            if any(c > 1 for c in counts):
                continue
            if any(c == 0 and not _strictly_blocked(ctx, ch, [outs[o]])
                   for o, c in enumerate(counts)):
                continue
            children = []
            for o in range(len(outs)):
                if o in assignment:
                    b = branches[assignment.index(o)]
                    rhs = LocalContext([(c2, Mixed((b,)))])
                else:
                    rhs = EMPTY_CONTEXT
                children.append(_goal(
                    Active(ch, ctx.set(ch, Mixed((outs[o],)))), goal.prob, rhs))
            got = self.prove_all("S-Σ-!", goal, children)
            if got is not None:
                return got
        return None

    def rule_oplus(self, goal: Goal, c2, t2: Mixed, ps: ProbSum):
        """[S-⊕]: the goal probability must equal the supertype sum's total
        mass; supertype summands are distributed (splitting allowed) so that
        each subtype summand's block carries exactly its share."""
        self.budget.spend()
        sup = _single_probsum(t2)
        if sup is None:
            return None
        total = sum((s.prob for s in sup.summands), Fraction(0))
        if total != goal.prob:
            return None
        ctx, ch = goal.lhs.ctx, goal.lhs.chan
        rest = ctx.without(ch)
        rows = list(ps.summands)
        specs = []
        for row in rows:
            if isinstance(row.head, OutH) and not rest.has_role(
                    ch.session, row.head.receiver):
                specs.append((row, row.prob * total, "external"))
            else:
                specs.append((row, row.prob * total, "general"))
        remaining = [[s, s.prob] for s in sup.summands]

        def allowed(row_kind, row_head, piece: Summand):
            if row_kind == "external":
                return piece.head == row_head or isinstance(piece.head, TauH)
            return True

        def choose(idx, need, kind, head):
            if need == 0:
                yield []
                return
            for j in range(idx, len(remaining)):
                piece, m = remaining[j]
                if m == 0 or not allowed(kind, head, piece):
                    continue
                if m >= need:
                    yield [(j, need)]
                if m < need:
                    remaining[j][1] = Fraction(0)
                    for tail in choose(j + 1, need - m, kind, head):
                        yield [(j, m)] + tail
                    remaining[j][1] = m

        def assign(i, acc):
            if i == len(specs):
                yield list(acc)
                return
            row, target, kind = specs[i]
            for picks in choose(0, target, kind, row.head):
                taken = [(j, amt) for j, amt in picks]
                for j, amt in taken:
                    remaining[j][1] -= amt
                acc.append(picks)
                yield from assign(i + 1, acc)
                acc.pop()
                for j, amt in taken:
                    remaining[j][1] += amt

        for solution in assign(0, []):
            self.budget.spend()
            children = []
            ok = True
            for (row, target, kind), picks in zip(specs, solution):
                pieces = [Summand(amt, remaining[j][0].head, remaining[j][0].cont)
                          for j, amt in picks]
                lhs_child = Active(ch, ctx.set(ch, HeadCont(row.head, row.cont)))
                if kind == "external":
                    for piece in pieces:
                        rhs = LocalContext([(c2, Mixed((ProbSum((piece,)),)))])
                        children.append(_goal(lhs_child, piece.prob, rhs))
                else:
                    if not pieces:
                        ok = False
                        break
                    rhs = LocalContext([(c2, Mixed((ProbSum(tuple(pieces)),)))])
                    children.append(_goal(lhs_child, target, rhs))
            if not ok:
                continue
            got = self.prove_all("S-⊕", goal, children)
            if got is not None:
                return got
        return None


# ---------------------------------------------------------------------------
# public entry points

def _require_ctx_wf(*ds: LocalContext):
    for d in ds:
        diags = context_well_formed(d)
        if diags:
            raise IllFormedType("; ".join(diags))


def sub_multi(d_sub: LocalContext, d_sup: LocalContext,
              budget: int = DEFAULT_BUDGET) -> Optional[Derivation]:
    """Decide `d_sub <=_1 d_sup` (multi-channel refinement subtyping).

    Returns a checkable derivation, or None when refuted. Raises
    SearchBudgetExceeded when the search was cut short (inconclusive).
    """
    _require_ctx_wf(d_sub, d_sup)
    search = _MultiSearch(budget)
    deriv, _ = search.prove(_goal(Plain(d_sub), ONE, d_sup))
    return deriv


# ---------------------------------------------------------------------------
# single-channel subtyping

class _SingleSearch:
    def __init__(self, budget: int):
        self.budget = _Budget(budget)
        self.memo_true: Dict[Goal, Derivation] = {}
        self.memo_false: Set[Goal] = set()
        self.path: Dict[Goal, int] = {}
        self.unfolds = 0
        self.fires = 0

    def _surface(self, t):
        if isinstance(t, Rec):
            self.unfolds += 1
            return unfold_all(t)
        return t

    prove = _MultiSearch.prove
    prove_all = _MultiSearch.prove_all

    def attack(self, goal: Goal):
        lhs, rhs = goal.lhs.ctx, goal.rhs
        if len(rhs) == 0:
            self.budget.spend()
            if len(lhs) == 0 and goal.prob == 1:
                return Derivation("SubC-∅", goal), set()
            return None
        if len(rhs) > 1 or len(lhs) > 1:
            return self.attack_split(goal)
        if len(lhs) == 0:
            return None
        (c1, t1), = lhs.bindings
        (c2, t2), = rhs.bindings
        t1, t2 = self._surface(t1), self._surface(t2)
        for cand in self.candidates(goal, c1, t1, c2, t2):
            got = cand()
            if got is not None:
                return got
        return None

    def attack_split(self, goal: Goal):
        """[SubC-Split]: pair each supertype channel with one subtype channel."""
        if goal.prob != 1:
            return None
        lhs, rhs = goal.lhs.ctx, goal.rhs
        if len(lhs) != len(rhs):
            return None
        bindings = rhs.bindings
        last = bindings[-1]
        rest = LocalContext(bindings[:-1])
        items = list(lhs)
        order = sorted(
            range(len(items)),
            key=lambda i: 0 if (items[i][0].session == last[0].session
                                and items[i][0].roles <= last[0].roles) else 1)
        for i in order:
            self.budget.spend()
            if items[i][0].session != last[0].session:
                continue
            block_rest = LocalContext(it for k, it in enumerate(items) if k != i)
            got = self.prove_all("SubC-Split", goal, [
                _goal(Plain(block_rest), ONE, rest),
                _goal(Plain(LocalContext([items[i]])), ONE, LocalContext([last])),
            ])
            if got is not None:
                return got
        return None

    def candidates(self, goal, c1, t1, c2, t2):
        if isinstance(t1, HeadCont):
            if isinstance(t1.head, OutH):
                yield lambda: self.rule_bang(goal, c1, t1, c2, t2)
            else:
                yield lambda: self.rule_tau(goal, c1, t1, c2, t2)
            return
        if not isinstance(t1, Mixed) or not isinstance(t2, Mixed):
            return
        single_in = _single_input(t1)
        single_ps = _single_probsum(t1)
        if single_in is not None:
            yield lambda: self.rule_quest(goal, c1, single_in, c2, t2)
        elif single_ps is not None:
            yield lambda: self.rule_oplus(goal, c1, single_ps, c2, t2)
            yield lambda: self.rule_sigma_out(goal, c1, [single_ps], c2, t2)
        else:
            ins = [b for b in t1.branches if isinstance(b, InputT)]
            outs = [b for b in t1.branches if isinstance(b, ProbSum)]
            if ins and outs:
                yield lambda: self.rule_sigma(goal, c1, ins, outs, c2, t2)
            elif ins:
                yield lambda: self.rule_sigma_in(goal, c1, ins, c2, t2)
            elif outs:
                yield lambda: self.rule_sigma_out(goal, c1, outs, c2, t2)

    def rule_sigma(self, goal, c1, ins, outs, c2, t2):
        branches = list(t2.branches)
        sides = []
        for b in branches:
            first = 0 if isinstance(b, InputT) else 1
            sides.append([first, 1 - first])
        for assignment in itertools.product(*sides):
            self.budget.spend()
            part_in = tuple(b for b, a in zip(branches, assignment) if a == 0)
            part_out = tuple(b for b, a in zip(branches, assignment) if a == 1)
            if not part_in or not part_out:
                continue
            got = self.prove_all("SubC-Σ", goal, [
                _goal(Plain(LocalContext([(c1, Mixed(tuple(ins)))])), goal.prob,
                      LocalContext([(c2, Mixed(part_in))])),
                _goal(Plain(LocalContext([(c1, Mixed(tuple(outs)))])), goal.prob,
                      LocalContext([(c2, Mixed(part_out))])),
            ])
            if got is not None:
                return got
        return None

    def rule_sigma_in(self, goal, c1, ins, c2, t2):
        branches = list(t2.branches)
        if not branches or len(branches) > len(ins):
            return None
        for chosen in itertools.permutations(range(len(ins)), len(branches)):
            self.budget.spend()
            block = dict(zip(chosen, branches))
            dropped = [i for i in range(len(ins)) if i not in block]
            pres = {pre(Mixed((ins[i],))) for i in block}
            if any(pre(Mixed((ins[j],))) not in pres for j in dropped):
                continue
            children = [
                _goal(Plain(LocalContext([(c1, Mixed((ins[i],)))])), goal.prob,
                      LocalContext([(c2, Mixed((block[i],)))]))
                for i in sorted(block)]
            got = self.prove_all("SubC-Σ-?", goal, children)
            if got is not None:
                return got
        return None

    def rule_sigma_out(self, goal, c1, outs, c2, t2):
        branches = list(t2.branches)
        lhs_pres = [pre(Mixed((o,))) for o in outs]
        choices = []
        for b in branches:
            cand = list(range(len(outs)))
            if isinstance(b, ProbSum) and _pre_of_branch(b) in lhs_pres:
                cand.append(-1)
            choices.append(cand)
        for assignment in itertools.product(*choices):
            self.budget.spend()
            if any(assignment.count(o) != 1 for o in range(len(outs))):
                continue  # every subtype sum needs exactly one block here
            children = []
            for o in range(len(outs)):
                b = branches[assignment.index(o)]
                children.append(_goal(
                    Plain(LocalContext([(c1, Mixed((outs[o],)))])), goal.prob,
                    LocalContext([(c2, Mixed((b,)))])))
            got = self.prove_all("SubC-Σ-!", goal, children)
            if got is not None:
                return got
        return None

    def rule_oplus(self, goal, c1, ps, c2, t2):
        self.budget.spend()
        sup = _single_probsum(t2)
        if sup is None:
            return None
        total = sum((s.prob for s in sup.summands), Fraction(0))
        if total != goal.prob:
            return None
        rows = list(ps.summands)
        remaining = [[s, s.prob] for s in sup.summands]

        def choose(idx, need, head):
            if need == 0:
                yield []
                return
            for j in range(idx, len(remaining)):
                piece, m = remaining[j]
                if m == 0 or piece.head != head:
                    continue
                if m >= need:
                    yield [(j, need)]
                if m < need:
                    remaining[j][1] = Fraction(0)
                    for tail in choose(j + 1, need - m, head):
                        yield [(j, m)] + tail
                    remaining[j][1] = m

        def assign(i, acc):
            if i == len(rows):
                yield list(acc)
                return
            row = rows[i]
            for picks in choose(0, row.prob * total, row.head):
                for j, amt in picks:
                    remaining[j][1] -= amt
                acc.append(picks)
                yield from assign(i + 1, acc)
                acc.pop()
                for j, amt in picks:
                    remaining[j][1] += amt

        for solution in assign(0, []):
            self.budget.spend()
            children = []
            for row, picks in zip(rows, solution):
                for j, amt in picks:
                    piece = remaining[j][0]
                    rhs = LocalContext(
                        [(c2, Mixed((ProbSum((Summand(amt, piece.head,
                                                      piece.cont),)),)))])
                    children.append(_goal(
                        Plain(LocalContext([(c1, HeadCont(row.head, row.cont))])),
                        amt, rhs))
            got = self.prove_all("SubC-⊕", goal, children)
            if got is not None:
                return got
        return None

    def rule_bang(self, goal, c1, t1: HeadCont, c2, t2):
        self.budget.spend()
        t2 = self._surface(t2)
        ps = _single_probsum(t2)
        if ps is None or len(ps.summands) != 1:
            return None
        s = ps.summands[0]
        if s.head != t1.head or s.prob != goal.prob:
            return None
        if not (c1.roles <= c2.roles and t1.head.sender in c2.roles):
            return None
        return self.prove_all("SubC-!", goal, [
            _goal(Plain(LocalContext([(c1, t1.cont)])), ONE,
                  LocalContext([(c2, s.cont)]))])

    def rule_tau(self, goal, c1, t1: HeadCont, c2, t2):
        self.budget.spend()
        t2 = self._surface(t2)
        s = _is_tau_singleton(t2)
        if s is None or s.prob != goal.prob:
            return None
        return self.prove_all("SubC-τ", goal, [
            _goal(Plain(LocalContext([(c1, t1.cont)])), ONE,
                  LocalContext([(c2, s.cont)]))])

    def rule_quest(self, goal, c1, inp: InputT, c2, t2):
        self.budget.spend()
        if goal.prob != 1:
            return None
        sup = _single_input(t2)
        if sup is None:
            return None
        if (sup.receiver, sup.sender, sup.label, sup.payload) != \
                (inp.receiver, inp.sender, inp.label, inp.payload):
            return None
        if not (c1.roles <= c2.roles and inp.receiver in c2.roles):
            return None
        return self.prove_all("SubC-?", goal, [
            _goal(Plain(LocalContext([(c1, inp.cont)])), ONE,
                  LocalContext([(c2, sup.cont)]))])


def sub_single(d_sub: LocalContext, d_sup: LocalContext,
               budget: int = DEFAULT_BUDGET) -> Optional[Derivation]:
    """Decide `d_sub <=^1_1 d_sup` (single-channel subtyping)."""
    _require_ctx_wf(d_sub, d_sup)
    search = _SingleSearch(budget)
    deriv, _ = search.prove(_goal(Plain(d_sub), ONE, d_sup))
    return deriv


# ---------------------------------------------------------------------------
# standard subtyping on plain types

class _StandardSearch:
    def __init__(self, budget: int):
        self.budget = _Budget(budget)
        self.memo_true: Dict[TGoal, Derivation] = {}
        self.memo_false: Set[TGoal] = set()
        self.path: Dict[TGoal, int] = {}
        self.unfolds = 0
        self.fires = 0

    prove = _MultiSearch.prove
    prove_all = _MultiSearch.prove_all

    def goal(self, sub, sup) -> TGoal:
        return TGoal(canonical_type(sub), canonical_type(sup))

    def attack(self, goal: TGoal):
        sub, sup = goal.sub, goal.sup
        if isinstance(sub, Rec) or isinstance(sup, Rec):
            self.unfolds += 1
            sub = unfold_all(sub) if isinstance(sub, Rec) else sub
            sup = unfold_all(sup) if isinstance(sup, Rec) else sup
        return self._attack_surface(goal, sub, sup)

    def _attack_surface(self, goal: TGoal, sub, sup):
        self.budget.spend()
        if isinstance(sub, End) and isinstance(sup, End):
            return Derivation("Sub-end", goal), set()
        if not isinstance(sub, Mixed) or not isinstance(sup, Mixed):
            return None
        ins1 = [b for b in sub.branches if isinstance(b, InputT)]
        outs1 = [b for b in sub.branches if isinstance(b, ProbSum)]
        ins2 = [b for b in sup.branches if isinstance(b, InputT)]
        outs2 = [b for b in sup.branches if isinstance(b, ProbSum)]
        if bool(ins1) != bool(ins2) or bool(outs1) != bool(outs2):
            return None
        if ins1 and outs1:
            got_in = self.side_in(ins1, ins2)
            if got_in is None:
                return None
            got_out = self.side_out(outs1, outs2)
            if got_out is None:
                return None
            (din, depin), (dout, depout) = got_in, got_out
            node = Derivation("Sub-Σ", goal, (
                Derivation("Sub-Σ-?", self.goal(Mixed(tuple(ins1)),
                                                Mixed(tuple(ins2))), tuple(din)),
                Derivation("Sub-Σ-!", self.goal(Mixed(tuple(outs1)),
                                                Mixed(tuple(outs2))), tuple(dout)),
            ))
            return node, depin | depout
        if ins1:
            got = self.side_in(ins1, ins2)
            if got is None:
                return None
            derivs, deps = got
            return Derivation("Sub-Σ-?", goal, tuple(derivs)), deps
        got = self.side_out(outs1, outs2)
        if got is None:
            return None
        derivs, deps = got
        return Derivation("Sub-Σ-!", goal, tuple(derivs)), deps

    def side_in(self, ins1, ins2):
        """Retained supertype inputs match subtype inputs on action identity;
        extra subtype inputs need a retained prefix twin."""
        self.budget.spend()
        used = [False] * len(ins1)
        derivs, deps = [], set()
        retained = []
        for b2 in ins2:
            found = None
            for i, b1 in enumerate(ins1):
                if used[i]:
                    continue
                if (b1.receiver, b1.sender, b1.label, b1.payload) == \
                        (b2.receiver, b2.sender, b2.label, b2.payload):
                    found = i
                    break
            if found is None:
                return None
            used[found] = True
            retained.append(ins1[found])
            d, dd = self.prove(self.goal(ins1[found].cont, b2.cont))
            if d is None:
                return None
            derivs.append(d)
            deps |= dd
        pres = {pre(Mixed((b,))) for b in retained}
        for i, b1 in enumerate(ins1):
            if not used[i] and pre(Mixed((b1,))) not in pres:
                return None
        return derivs, deps

    def side_out(self, outs1, outs2):
        """Each subtype sum matches a distinct supertype sum with an identical
        (probability, head) skeleton; leftover supertype sums need a subtype
        prefix twin."""
        self.budget.spend()

        def skeleton(ps):
            return tuple(sorted((s.prob, _head_sig(s.head)) for s in ps.summands))

        def _head_sig(h):
            if isinstance(h, TauH):
                return ("tau",)
            return (h.sender, h.receiver, h.label,
                    h.payload.value if h.payload else "")

        used = [False] * len(outs2)
        derivs, deps = [], set()
        for ps1 in outs1:
            target = None
            for j, ps2 in enumerate(outs2):
                if used[j] or skeleton(ps1) != skeleton(ps2):
                    continue
                pair = self.match_sums(ps1, ps2)
                if pair is not None:
                    target = (j, pair)
                    break
            if target is None:
                return None
            j, (ds, dd) = target
            used[j] = True
            derivs.extend(ds)
            deps |= dd
        lhs_pres = [pre(Mixed((o,))) for o in outs1]
        for j, ps2 in enumerate(outs2):
            if not used[j] and pre(Mixed((ps2,))) not in lhs_pres:
                return None
        return derivs, deps

    def match_sums(self, ps1: ProbSum, ps2: ProbSum):
        """Pair equal (prob, head) summands and relate the continuations."""
        self.budget.spend()
        rows2 = list(ps2.summands)
        used = [False] * len(rows2)
        derivs, deps = [], set()
        for s1 in ps1.summands:
            hit = None
            for j, s2 in enumerate(rows2):
                if used[j] or s1.prob != s2.prob or s1.head != s2.head:
                    continue
                d, dd = self.prove(self.goal(s1.cont, s2.cont))
                if d is not None:
                    hit = (j, d, dd)
                    break
            if hit is None:
                return None
            j, d, dd = hit
            used[j] = True
            derivs.append(d)
            deps |= dd
        return derivs, deps


def sub_standard(t_sub: SessionType, t_sup: SessionType,
                 budget: int = DEFAULT_BUDGET) -> Optional[Derivation]:
    """Decide the standard subtyping `t_sub <= t_sup` on plain types."""
    for t in (t_sub, t_sup):
        from .typemeta import well_formed
        diags = well_formed(t)
        if diags:
            raise IllFormedType("; ".join(diags))
    search = _StandardSearch(budget)
    deriv, _ = search.prove(search.goal(t_sub, t_sup))
    return deriv


# ---------------------------------------------------------------------------
# derivation validation (independent of the search)

class _Bad(Exception):
    pass


def _u(t: SessionType) -> SessionType:
    return unfold_all(t) if isinstance(t, Rec) else t


def _single_binding(rhs: LocalContext):
    if len(rhs) != 1:
        raise _Bad("expected a single supertype binding")
    return rhs.bindings[0]


def _expect(cond, msg):
    if not cond:
        raise _Bad(msg)


def _same_goal(a, b):
    return a == b


def _active(goal: Goal):
    _expect(isinstance(goal.lhs, Active), "rule needs an active channel")
    ctx, ch = goal.lhs.ctx, goal.lhs.chan
    return ctx, ch


def _branch_multiset(rhss, c2=None):
    out = []
    for rhs in rhss:
        if len(rhs) == 0:
            continue
        ch, t = _single_binding(rhs)
        if c2 is not None:
            _expect(ch == c2, "block bound to a different supertype channel")
        t = _u(t)
        _expect(isinstance(t, Mixed), "block is not a choice")
        out.extend(t.branches)
    return sorted(out, key=lambda b: repr(canonical_type(Mixed((b,)))))


def _check_multi(d: Derivation, ancestors):
    g = d.goal
    rule = d.rule
    if d.backedge:
        _expect(rule == "coinduction", "back-edge must be a coinduction leaf")
        _expect(any(_same_goal(g, a) for a in ancestors),
                "back-edge target is not an ancestor goal")
        _expect(not d.children, "back-edge leaves have no children")
        return
    kids = d.children
    anc = ancestors + [g]

    if rule == "S-∅-1":
        _expect(isinstance(g.lhs, Plain) and len(g.lhs.ctx) == 0,
                "S-∅-1 needs an empty plain context")
        _expect(g.prob == 1 and len(g.rhs) == 0 and not kids, "S-∅-1 shape")
        return
    if rule == "S-∅":
        _expect(isinstance(g.lhs, Active) and len(g.rhs) == 0 and not kids,
                "S-∅ shape")
        _expect(pending(g.lhs), "S-∅ requires a pending context")
        return
    if rule == "S-τ-R":
        c2, t2 = _single_binding(g.rhs)
        s = _is_tau_singleton(_u(t2))
        _expect(s is not None and s.prob == g.prob, "S-τ-R supertype shape")
        _expect(len(kids) == 1, "S-τ-R has one premise")
        want = _goal(g.lhs, ONE, LocalContext([(c2, s.cont)]))
        _expect(_same_goal(kids[0].goal, want), "S-τ-R premise mismatch")
    elif rule == "S-τ-L":
        ctx, ch = _active(g)
        t = _u(ctx.get(ch))
        _expect(isinstance(t, HeadCont) and isinstance(t.head, TauH),
                "S-τ-L needs a committed internal action")
        want = _goal(Plain(ctx.set(ch, t.cont)), g.prob, g.rhs)
        _expect(len(kids) == 1 and _same_goal(kids[0].goal, want),
                "S-τ-L premise mismatch")
    elif rule == "S-Link":
        ctx, ch = _active(g)
        t = _u(ctx.get(ch))
        _expect(isinstance(t, HeadCont) and isinstance(t.head, OutH),
                "S-Link needs a committed output")
        head = t.head
        _expect(head.sender in ch.roles, "S-Link sender not in its role set")
        partner = ctx.channel_of_role(ch.session, head.receiver)
        _expect(partner is not None and partner != ch,
                "S-Link partner not in the context")
        t2 = _u(ctx.get(partner))
        _expect(isinstance(t2, Mixed), "S-Link partner is not a choice")
        _expect(len(kids) == 1, "S-Link has one premise")
        ok = False
        for b in t2.branches:
            if (isinstance(b, InputT) and b.receiver == head.receiver
                    and b.sender == head.sender and b.label == head.label
                    and b.payload == head.payload):
                want = _goal(Plain(ctx.set(ch, t.cont).set(partner, b.cont)),
                             g.prob, g.rhs)
                if _same_goal(kids[0].goal, want):
                    ok = True
                    break
        _expect(ok, "S-Link premise mismatch")
    elif rule == "S-!":
        ctx, ch = _active(g)
        t = _u(ctx.get(ch))
        _expect(isinstance(t, HeadCont) and isinstance(t.head, OutH),
                "S-! needs a committed output")
        c2, t2 = _single_binding(g.rhs)
        ps = _single_probsum(_u(t2))
        _expect(ps is not None and len(ps.summands) == 1, "S-! supertype shape")
        s = ps.summands[0]
        _expect(s.head == t.head and s.prob == g.prob, "S-! action mismatch")
        _expect(ch.roles <= c2.roles and t.head.sender in c2.roles,
                "S-! role conditions")
        _expect(not ctx.without(ch).has_role(ch.session, t.head.receiver),
                "S-! partner must be outside the context")
        want = _goal(Plain(ctx.set(ch, t.cont)), ONE, LocalContext([(c2, s.cont)]))
        _expect(len(kids) == 1 and _same_goal(kids[0].goal, want),
                "S-! premise mismatch")
    elif rule == "S-?":
        _expect(g.prob == 1, "S-? concludes at probability 1")
        ctx, ch = _active(g)
        t = _u(ctx.get(ch))
        inp = _single_input(t) if isinstance(t, Mixed) else None
        _expect(inp is not None, "S-? needs a single input")
        c2, t2 = _single_binding(g.rhs)
        sup = _single_input(_u(t2))
        _expect(sup is not None and
                (sup.receiver, sup.sender, sup.label, sup.payload) ==
                (inp.receiver, inp.sender, inp.label, inp.payload),
                "S-? action mismatch")
        _expect(ch.roles <= c2.roles and inp.receiver in c2.roles,
                "S-? role conditions")
        _expect(not ctx.without(ch).has_role(ch.session, inp.sender),
                "S-? partner must be outside the context")
        want = _goal(Plain(ctx.set(ch, inp.cont)), ONE,
                     LocalContext([(c2, sup.cont)]))
        _expect(len(kids) == 1 and _same_goal(kids[0].goal, want),
                "S-? premise mismatch")
    elif rule == "S-Σ-1":
        _expect(isinstance(g.lhs, Plain) and len(g.lhs.ctx) > 0, "S-Σ-1 shape")
        c2, t2 = _single_binding(g.rhs)
        t2 = _u(t2)
        _expect(isinstance(t2, Mixed), "S-Σ-1 supertype is not a choice")
        chans = [ch for ch, _ in g.lhs.ctx]
        _expect(len(kids) == len(chans), "S-Σ-1 has one branch per channel")
        seen = []
        nonempty = 0
        for ch, kid in zip(chans, kids):
            kg = kid.goal
            _expect(isinstance(kg.lhs, Active) and kg.lhs.chan == ch
                    and kg.lhs.ctx == g.lhs.ctx and kg.prob == g.prob,
                    "S-Σ-1 branch shape")
            if len(kg.rhs):
                nonempty += 1
                seen.append(kg.rhs)
        _expect(nonempty > 0, "S-Σ-1 all blocks empty")
        _expect(_branch_multiset(seen, c2) ==
                _branch_multiset([g.rhs]), "S-Σ-1 blocks do not cover the choice")
    elif rule == "S-Σ-2":
        ctx, ch = _active(g)
        t = _u(ctx.get(ch))
        _expect(isinstance(t, Mixed), "S-Σ-2 needs a mixed choice")
        ins = tuple(b for b in t.branches if isinstance(b, InputT))
        outs = tuple(b for b in t.branches if isinstance(b, ProbSum))
        _expect(ins and outs, "S-Σ-2 needs both inputs and outputs")
        c2, _ = _single_binding(g.rhs)
        _expect(len(kids) == 2, "S-Σ-2 has two premises")
        want_in = _canon_active(Active(ch, ctx.set(ch, Mixed(ins))))
        want_out = _canon_active(Active(ch, ctx.set(ch, Mixed(outs))))
        _expect(kids[0].goal.lhs == want_in and kids[1].goal.lhs == want_out,
                "S-Σ-2 premise contexts")
        _expect(kids[0].goal.prob == g.prob and kids[1].goal.prob == g.prob,
                "S-Σ-2 premise probabilities")
        _expect(_branch_multiset([kids[0].goal.rhs, kids[1].goal.rhs], c2) ==
                _branch_multiset([g.rhs]), "S-Σ-2 split does not cover")
    elif rule == "S-Σ-?":
        ctx, ch = _active(g)
        t = _u(ctx.get(ch))
        _expect(isinstance(t, Mixed) and
                all(isinstance(b, InputT) for b in t.branches),
                "S-Σ-? needs an input choice")
        c2, _ = _single_binding(g.rhs)
        retained = []
        blocks = []
        for kid in kids:
            kg = kid.goal
            _expect(isinstance(kg.lhs, Active) and kg.lhs.chan == ch
                    and kg.prob == g.prob, "S-Σ-? branch shape")
            kt = kg.lhs.ctx.get(ch)
            sub_in = _single_input(kt) if isinstance(kt, Mixed) else None
            _expect(sub_in is not None, "S-Σ-? branch must retain one input")
            _expect(kg.lhs.ctx == _canon_active(
                Active(ch, ctx.set(ch, Mixed((sub_in,))))).ctx,
                "S-Σ-? branch context mismatch")
            retained.append(sub_in)
            if len(kg.rhs):
                blocks.append(kg.rhs)
        _expect(blocks, "S-Σ-? needs a non-empty union of blocks")
        _expect(_branch_multiset(blocks, c2) == _branch_multiset([g.rhs]),
                "S-Σ-? blocks do not cover the choice")
        pres = {pre(Mixed((b,))) for b in retained}
        cnt = {}
        for b in retained:
            cnt[canonical_type(Mixed((b,)))] = \
                cnt.get(canonical_type(Mixed((b,))), 0) + 1
        for b in t.branches:
            key = canonical_type(Mixed((b,)))
            if cnt.get(key):
                cnt[key] -= 1
            else:
                _expect(pre(Mixed((b,))) in pres,
                        "dropped input without a retained prefix twin")
    elif rule == "S-Σ-!":
        ctx, ch = _active(g)
        t = _u(ctx.get(ch))
        _expect(isinstance(t, Mixed) and
                all(isinstance(b, ProbSum) for b in t.branches),
                "S-Σ-! needs an output choice")
        c2, _ = _single_binding(g.rhs)
        outs = list(t.branches)
        _expect(len(kids) == len(outs), "S-Σ-! keeps every subtype sum")
        blocks = []
        lhs_pres = [pre(Mixed((o,))) for o in outs]
        for o, kid in zip(outs, kids):
            kg = kid.goal
            _expect(isinstance(kg.lhs, Active) and kg.lhs.chan == ch
                    and kg.prob == g.prob, "S-Σ-! branch shape")
            _expect(kg.lhs.ctx == _canon_active(
                Active(ch, ctx.set(ch, Mixed((o,))))).ctx,
                "S-Σ-! branch context mismatch")
            if len(kg.rhs):
                blocks.append(kg.rhs)
        covered = _branch_multiset(blocks, c2)
        everything = _branch_multiset([g.rhs])
        for b in covered:
            _expect(b in everything, "S-Σ-! block outside the supertype")
            everything.remove(b)
        for extra in everything:
            _expect(isinstance(extra, ProbSum) and
                    _pre_of_branch(extra) in lhs_pres,
                    "extra supertype output without a prefix twin")
    elif rule == "S-⊕":
        ctx, ch = _active(g)
        t = _u(ctx.get(ch))
        ps = _single_probsum(t) if isinstance(t, Mixed) else None
        _expect(ps is not None, "S-⊕ needs a probabilistic choice")
        c2, t2 = _single_binding(g.rhs)
        sup = _single_probsum(_u(t2))
        _expect(sup is not None, "S-⊕ supertype is not a probabilistic choice")
        total = sum((s.prob for s in sup.summands), Fraction(0))
        _expect(total == g.prob, "S-⊕ total supertype mass mismatch")
        mass: Dict = {}
        pieces = []
        for kid in kids:
            kg = kid.goal
            _expect(isinstance(kg.lhs, Active) and kg.lhs.chan == ch,
                    "S-⊕ premise shape")
            kt = kg.lhs.ctx.get(ch)
            _expect(isinstance(kt, HeadCont), "S-⊕ premise needs a bare head")
            _expect(kg.lhs.ctx == _canon_active(
                Active(ch, ctx.set(ch, kt))).ctx, "S-⊕ premise context")
            key = canonical_type(HeadCont(kt.head, kt.cont))
            mass[key] = mass.get(key, Fraction(0)) + kg.prob
            kc2, kt2 = _single_binding(kg.rhs)
            _expect(kc2 == c2, "S-⊕ block channel mismatch")
            block = _single_probsum(_u(kt2))
            _expect(block is not None, "S-⊕ block is not a probabilistic sum")
            block_mass = sum((s.prob for s in block.summands), Fraction(0))
            _expect(block_mass == kg.prob, "S-⊕ block mass != premise index")
            pieces.extend(block.summands)
        for row in ps.summands:
            key = canonical_type(HeadCont(row.head, row.cont))
            _expect(mass.get(key) == row.prob * total,
                    "S-⊕ premise masses do not match the subtype row")
            del mass[key]
        _expect(not mass, "S-⊕ premise for a non-existent subtype row")
        merged = canonical_type(Mixed((ProbSum(tuple(pieces)),)))
        _expect(merged == canonical_type(Mixed((sup,))),
                "S-⊕ blocks do not re-merge to the supertype sum")
    elif rule == "S-Split":
        _expect(isinstance(g.lhs, Plain) and g.prob == 1, "S-Split shape")
        _expect(len(kids) == 2, "S-Split has two premises")
        k1, k2 = kids[0].goal, kids[1].goal
        _expect(isinstance(k1.lhs, Plain) and isinstance(k2.lhs, Plain)
                and k1.prob == 1 and k2.prob == 1, "S-Split premise shape")
        _expect(len(k2.rhs) == 1, "S-Split peels one binding")
        peeled = k2.rhs.bindings[0]
        rest = [b for b in g.rhs.bindings if b != peeled]
        _expect(len(rest) == len(g.rhs.bindings) - 1
                and LocalContext(rest) == k1.rhs, "S-Split supertype split")
        lhs_all = sorted((repr(c), repr(t)) for c, t in g.lhs.ctx)
        lhs_parts = sorted([(repr(c), repr(t)) for c, t in k1.lhs.ctx] +
                           [(repr(c), repr(t)) for c, t in k2.lhs.ctx])
        _expect(lhs_all == lhs_parts, "S-Split subtype partition")
    else:
        raise _Bad(f"unknown rule {rule!r}")

    for kid in kids:
        _check_multi(kid, anc)


def validate_derivation(d: Derivation) -> Optional[str]:
    """None when every node instantiates its rule; else the first failure."""
    try:
        if isinstance(d.goal, TGoal):
            _check_standard(d, [])
        elif d.rule.startswith("SubC"):
            _check_single(d, [])
        else:
            _check_multi(d, [])
        return None
    except (_Bad, Exception) as e:  # noqa: BLE001 - malformed trees report too
        return str(e) or repr(e)


def check_derivation(d: Derivation) -> bool:
    return validate_derivation(d) is None


def _check_single(d: Derivation, ancestors):
    g = d.goal
    rule = d.rule
    if d.backedge:
        _expect(rule == "coinduction", "back-edge must be a coinduction leaf")
        _expect(any(_same_goal(g, a) for a in ancestors),
                "back-edge target is not an ancestor goal")
        return
    kids = d.children
    anc = ancestors + [g]

    def lhs_binding():
        _expect(isinstance(g.lhs, Plain) and len(g.lhs.ctx) == 1,
                f"{rule} needs a single subtype binding")
        return g.lhs.ctx.bindings[0]

    if rule == "SubC-∅":
        _expect(isinstance(g.lhs, Plain) and len(g.lhs.ctx) == 0
                and len(g.rhs) == 0 and g.prob == 1 and not kids, "SubC-∅ shape")
        return
    if rule == "SubC-Split":
        _expect(g.prob == 1 and len(kids) == 2, "SubC-Split shape")
        k1, k2 = kids[0].goal, kids[1].goal
        _expect(len(k2.rhs) == 1 and len(k2.lhs.ctx) == 1,
                "SubC-Split pairs one channel with one channel")
        peeled = k2.rhs.bindings[0]
        rest = [b for b in g.rhs.bindings if b != peeled]
        _expect(LocalContext(rest) == k1.rhs, "SubC-Split supertype split")
        lhs_all = sorted((repr(c), repr(t)) for c, t in g.lhs.ctx)
        lhs_parts = sorted([(repr(c), repr(t)) for c, t in k1.lhs.ctx] +
                           [(repr(c), repr(t)) for c, t in k2.lhs.ctx])
        _expect(lhs_all == lhs_parts, "SubC-Split subtype partition")
    elif rule == "SubC-Σ":
        c1, t1 = lhs_binding()
        t1 = _u(t1)
        ins = tuple(b for b in t1.branches if isinstance(b, InputT))
        outs = tuple(b for b in t1.branches if isinstance(b, ProbSum))
        _expect(ins and outs, "SubC-Σ needs a mixed choice")
        c2, _ = _single_binding(g.rhs)
        _expect(len(kids) == 2, "SubC-Σ has two premises")
        _expect(kids[0].goal.lhs == _canon_active(
            Plain(LocalContext([(c1, Mixed(ins))]))), "SubC-Σ input premise")
        _expect(kids[1].goal.lhs == _canon_active(
            Plain(LocalContext([(c1, Mixed(outs))]))), "SubC-Σ output premise")
        _expect(kids[0].goal.prob == g.prob and kids[1].goal.prob == g.prob,
                "SubC-Σ premise probabilities")
        _expect(_branch_multiset([kids[0].goal.rhs, kids[1].goal.rhs], c2) ==
                _branch_multiset([g.rhs]), "SubC-Σ split does not cover")
    elif rule == "SubC-Σ-?":
        c1, t1 = lhs_binding()
        t1 = _u(t1)
        _expect(all(isinstance(b, InputT) for b in t1.branches),
                "SubC-Σ-? needs an input choice")
        c2, _ = _single_binding(g.rhs)
        retained, blocks = [], []
        for kid in kids:
            kg = kid.goal
            _expect(kg.prob == g.prob and len(kg.lhs.ctx) == 1,
                    "SubC-Σ-? branch shape")
            kt = kg.lhs.ctx.get(c1)
            sub_in = _single_input(kt) if isinstance(kt, Mixed) else None
            _expect(sub_in is not None, "SubC-Σ-? branch must retain one input")
            retained.append(sub_in)
            _expect(len(kg.rhs) == 1, "SubC-Σ-? blocks must be non-empty")
            blocks.append(kg.rhs)
        _expect(_branch_multiset(blocks, c2) == _branch_multiset([g.rhs]),
                "SubC-Σ-? blocks do not cover")
        pres = {pre(Mixed((b,))) for b in retained}
        cnt = {}
        for b in retained:
            key = canonical_type(Mixed((b,)))
            cnt[key] = cnt.get(key, 0) + 1
        for b in t1.branches:
            key = canonical_type(Mixed((b,)))
            if cnt.get(key):
                cnt[key] -= 1
            else:
                _expect(pre(Mixed((b,))) in pres,
                        "dropped input without a retained prefix twin")
    elif rule == "SubC-Σ-!":
        c1, t1 = lhs_binding()
        t1 = _u(t1)
        _expect(all(isinstance(b, ProbSum) for b in t1.branches),
                "SubC-Σ-! needs an output choice")
        c2, _ = _single_binding(g.rhs)
        outs = list(t1.branches)
        _expect(len(kids) == len(outs), "SubC-Σ-! keeps every subtype sum")
        blocks = []
        lhs_pres = [pre(Mixed((o,))) for o in outs]
        for o, kid in zip(outs, kids):
            kg = kid.goal
            _expect(kg.prob == g.prob, "SubC-Σ-! branch probability")
            _expect(kg.lhs == _canon_active(
                Plain(LocalContext([(c1, Mixed((o,)))]))),
                "SubC-Σ-! branch context")
            _expect(len(kg.rhs) == 1, "SubC-Σ-! blocks must be non-empty")
            blocks.append(kg.rhs)
        covered = _branch_multiset(blocks, c2)
        everything = _branch_multiset([g.rhs])
        for b in covered:
            _expect(b in everything, "SubC-Σ-! block outside the supertype")
            everything.remove(b)
        for extra in everything:
            _expect(isinstance(extra, ProbSum) and
                    _pre_of_branch(extra) in lhs_pres,
                    "extra supertype output without a prefix twin")
    elif rule == "SubC-⊕":
        c1, t1 = lhs_binding()
        ps = _single_probsum(_u(t1))
        _expect(ps is not None, "SubC-⊕ needs a probabilistic choice")
        c2, t2 = _single_binding(g.rhs)
        sup = _single_probsum(_u(t2))
        _expect(sup is not None, "SubC-⊕ supertype shape")
        total = sum((s.prob for s in sup.summands), Fraction(0))
        _expect(total == g.prob, "SubC-⊕ total mass mismatch")
        mass: Dict = {}
        pieces = []
        for kid in kids:
            kg = kid.goal
            _expect(len(kg.lhs.ctx) == 1, "SubC-⊕ premise shape")
            kt = kg.lhs.ctx.get(c1)
            _expect(isinstance(kt, HeadCont), "SubC-⊕ premise needs a bare head")
            key = canonical_type(HeadCont(kt.head, kt.cont))
            mass[key] = mass.get(key, Fraction(0)) + kg.prob
            kc2, kt2 = _single_binding(kg.rhs)
            block = _single_probsum(_u(kt2))
            _expect(block is not None, "SubC-⊕ block shape")
            _expect(sum((s.prob for s in block.summands), Fraction(0)) == kg.prob,
                    "SubC-⊕ block mass != premise index")
            pieces.extend(block.summands)
        for row in ps.summands:
            key = canonical_type(HeadCont(row.head, row.cont))
            _expect(mass.get(key) == row.prob * total,
                    "SubC-⊕ premise masses do not match")
            del mass[key]
        _expect(not mass, "SubC-⊕ premise for a non-existent row")
        _expect(canonical_type(Mixed((ProbSum(tuple(pieces)),))) ==
                canonical_type(Mixed((sup,))),
                "SubC-⊕ blocks do not re-merge")
    elif rule == "SubC-!":
        c1, t1 = lhs_binding()
        t1 = _u(t1)
        _expect(isinstance(t1, HeadCont) and isinstance(t1.head, OutH),
                "SubC-! needs a committed output")
        c2, t2 = _single_binding(g.rhs)
        ps = _single_probsum(_u(t2))
        _expect(ps is not None and len(ps.summands) == 1, "SubC-! shape")
        s = ps.summands[0]
        _expect(s.head == t1.head and s.prob == g.prob, "SubC-! action mismatch")
        _expect(c1.roles <= c2.roles and t1.head.sender in c2.roles,
                "SubC-! role conditions")
        want = _goal(Plain(LocalContext([(c1, t1.cont)])), ONE,
                     LocalContext([(c2, s.cont)]))
        _expect(len(kids) == 1 and _same_goal(kids[0].goal, want),
                "SubC-! premise mismatch")
    elif rule == "SubC-τ":
        c1, t1 = lhs_binding()
        t1 = _u(t1)
        _expect(isinstance(t1, HeadCont) and isinstance(t1.head, TauH),
                "SubC-τ needs a committed internal action")
        c2, t2 = _single_binding(g.rhs)
        s = _is_tau_singleton(_u(t2))
        _expect(s is not None and s.prob == g.prob, "SubC-τ shape")
        want = _goal(Plain(LocalContext([(c1, t1.cont)])), ONE,
                     LocalContext([(c2, s.cont)]))
        _expect(len(kids) == 1 and _same_goal(kids[0].goal, want),
                "SubC-τ premise mismatch")
    elif rule == "SubC-?":
        _expect(g.prob == 1, "SubC-? concludes at probability 1")
        c1, t1 = lhs_binding()
        inp = _single_input(_u(t1))
        _expect(inp is not None, "SubC-? needs a single input")
        c2, t2 = _single_binding(g.rhs)
        sup = _single_input(_u(t2))
        _expect(sup is not None and
                (sup.receiver, sup.sender, sup.label, sup.payload) ==
                (inp.receiver, inp.sender, inp.label, inp.payload),
                "SubC-? action mismatch")
        _expect(c1.roles <= c2.roles and inp.receiver in c2.roles,
                "SubC-? role conditions")
        want = _goal(Plain(LocalContext([(c1, inp.cont)])), ONE,
                     LocalContext([(c2, sup.cont)]))
        _expect(len(kids) == 1 and _same_goal(kids[0].goal, want),
                "SubC-? premise mismatch")
    else:
        raise _Bad(f"unknown rule {rule!r}")

    for kid in kids:
        _check_single(kid, anc)


def _check_standard(d: Derivation, ancestors):
    g = d.goal
    rule = d.rule
    if d.backedge:
        _expect(rule == "coinduction", "back-edge must be a coinduction leaf")
        _expect(any(_same_goal(g, a) for a in ancestors),
                "back-edge target is not an ancestor goal")
        return
    kids = d.children
    anc = ancestors + [g]
    sub, sup = _u(g.sub), _u(g.sup)

    def split(t):
        ins = tuple(b for b in t.branches if isinstance(b, InputT))
        outs = tuple(b for b in t.branches if isinstance(b, ProbSum))
        return ins, outs

    if rule == "Sub-end":
        _expect(isinstance(sub, End) and isinstance(sup, End) and not kids,
                "Sub-end shape")
        return
    _expect(isinstance(sub, Mixed) and isinstance(sup, Mixed),
            f"{rule} needs mixed choices")
    ins1, outs1 = split(sub)
    ins2, outs2 = split(sup)

    def check_inputs(ins1, ins2, pair_kids):
        used = [False] * len(ins1)
        retained = []
        _expect(len(pair_kids) == len(ins2), "input premise count")
        for b2, kid in zip(ins2, pair_kids):
            found = None
            for i, b1 in enumerate(ins1):
                if used[i]:
                    continue
                if ((b1.receiver, b1.sender, b1.label, b1.payload) ==
                        (b2.receiver, b2.sender, b2.label, b2.payload) and
                        _same_goal(kid.goal,
                                   TGoal(canonical_type(b1.cont),
                                         canonical_type(b2.cont)))):
                    found = i
                    break
            _expect(found is not None, "unmatched supertype input")
            used[found] = True
            retained.append(ins1[found])
        pres = {pre(Mixed((b,))) for b in retained}
        for i, b1 in enumerate(ins1):
            if not used[i]:
                _expect(pre(Mixed((b1,))) in pres,
                        "extra subtype input without a retained prefix twin")

    def check_outputs(outs1, outs2, pair_kids):
        def skeleton(ps):
            return tuple(sorted(
                (s.prob, repr(canonical_type(HeadCont(s.head, End()))))
                for s in ps.summands))
        kid_iter = list(pair_kids)
        used = [False] * len(outs2)
        for ps1 in outs1:
            matched = None
            for j, ps2 in enumerate(outs2):
                if used[j] or skeleton(ps1) != skeleton(ps2):
                    continue
                need = len(ps1.summands)
                take, rest = kid_iter[:need], kid_iter[need:]
                ok = len(take) == need
                if ok:
                    rows2 = list(ps2.summands)
                    for s1, kid in zip(ps1.summands, take):
                        hit = None
                        for k, s2 in enumerate(rows2):
                            if (s2 is not None and s1.prob == s2.prob
                                    and s1.head == s2.head and
                                    _same_goal(kid.goal,
                                               TGoal(canonical_type(s1.cont),
                                                     canonical_type(s2.cont)))):
                                hit = k
                                break
                        if hit is None:
                            ok = False
                            break
                        rows2[hit] = None
                if ok:
                    matched = j
                    kid_iter = rest
                    break
            _expect(matched is not None, "unmatched subtype output sum")
            used[matched] = True
        _expect(not kid_iter, "surplus output premises")
        lhs_pres = [pre(Mixed((o,))) for o in outs1]
        for j, ps2 in enumerate(outs2):
            if not used[j]:
                _expect(pre(Mixed((ps2,))) in lhs_pres,
                        "extra supertype output without a prefix twin")

    if rule == "Sub-Σ":
        _expect(ins1 and outs1 and len(kids) == 2, "Sub-Σ shape")
        _expect(kids[0].rule == "Sub-Σ-?" and kids[1].rule == "Sub-Σ-!",
                "Sub-Σ premises")
        _check_standard(kids[0], anc)
        _check_standard(kids[1], anc)
        return
    if rule == "Sub-Σ-?":
        _expect(ins1 and not outs1 and ins2 and not outs2, "Sub-Σ-? shape")
        check_inputs(ins1, ins2, kids)
    elif rule == "Sub-Σ-!":
        _expect(outs1 and not ins1 and outs2 and not ins2, "Sub-Σ-! shape")
        check_outputs(outs1, outs2, kids)
    else:
        raise _Bad(f"unknown rule {rule!r}")
    for kid in kids:
        _check_standard(kid, anc)
