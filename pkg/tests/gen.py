"""Seeded random generators used by the property and acceptance suites:
well-formed types and contexts, subtype-producing weakenings, and scenario
protocols whose projections are safe, deadlock-free, canonical systems."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Tuple

from mcmpst.core import (
    BaseType, BoolV, Channel, Choice, End, InputT, LocalContext, Mixed, NatV,
    OutH, PInput, POut, PRow, ProbSum, Rec, SendA, Summand, TauA, TauH,
    TypeVar, chan,
)

F = Fraction

PROB_SPLITS = [
    [F(1)],
    [F(1, 2), F(1, 2)],
    [F(1, 3), F(2, 3)],
    [F(1, 4), F(1, 4), F(1, 2)],
    [F(7, 10), F(3, 10)],
    [F(7, 20), F(7, 20), F(3, 10)],
    [F(1, 5), F(3, 10), F(1, 2)],
]


class TypeGen:
    """Random closed, guarded, well-formed session types."""

    def __init__(self, rng: random.Random, me, others, allow_rec=True):
        self.rng = rng
        self.me = list(me)
        self.others = list(others)
        self.allow_rec = allow_rec
        self.fresh = 0

    def label(self) -> str:
        self.fresh += 1
        return f"l{self.fresh}"

    def payload(self) -> Optional[BaseType]:
        roll = self.rng.random()
        if roll < 0.6:
            return None
        return BaseType.NAT if roll < 0.8 else BaseType.BOOL

    def type(self, depth: int, recvars=()) -> object:
        if depth <= 0:
            if recvars and self.rng.random() < 0.5:
                return TypeVar(self.rng.choice(recvars))
            return End()
        roll = self.rng.random()
        if self.allow_rec and roll < 0.15 and depth >= 2:
            var = f"t{self.fresh}"
            self.fresh += 1
            body = self.mixed(depth - 1, recvars + (var,))
            return Rec(var, body)
        return self.mixed(depth, recvars)

    def mixed(self, depth: int, recvars=()) -> Mixed:
        branches = []
        n_inputs = self.rng.randrange(0, 3)
        n_sums = self.rng.randrange(0 if n_inputs else 1, 3)
        for _ in range(n_inputs):
            branches.append(InputT(
                self.rng.choice(self.me), self.rng.choice(self.others),
                self.label(), self.payload(), self.type(depth - 1, recvars)))
        for _ in range(max(n_sums, 0 if branches else 1)):
            probs = self.rng.choice(PROB_SPLITS)
            rows = []
            for q in probs:
                if self.rng.random() < 0.25:
                    head = TauH()
                else:
                    head = OutH(self.rng.choice(self.me),
                                self.rng.choice(self.others),
                                self.label(), self.payload())
                rows.append(Summand(q, head, self.type(depth - 1, recvars)))
            branches.append(ProbSum(tuple(rows)))
        return Mixed(tuple(branches))


def random_context(rng: random.Random, max_channels=3, depth=3,
                   allow_rec=True) -> LocalContext:
    n = rng.randrange(1, max_channels + 1)
    roles = [f"r{i}" for i in range(n)]
    external = ["x", "y"]
    items = []
    for i in range(n):
        me = [roles[i]]
        others = [r for r in roles if r != roles[i]] + external
        gen = TypeGen(rng, me, others, allow_rec)
        items.append((chan("s", roles[i]), gen.type(rng.randrange(1, depth + 1))))
    return LocalContext(items)


# ---------------------------------------------------------------------------
# weakenings that produce subtypes

def _map_conts(t, f, rng):
    """Apply f to one random continuation position inside t."""
    if isinstance(t, Mixed):
        branches = list(t.branches)
        i = rng.randrange(len(branches))
        b = branches[i]
        if isinstance(b, InputT):
            branches[i] = InputT(b.receiver, b.sender, b.label, b.payload,
                                 f(b.cont))
        else:
            rows = list(b.summands)
            j = rng.randrange(len(rows))
            rows[j] = Summand(rows[j].prob, rows[j].head, f(rows[j].cont))
            branches[i] = ProbSum(tuple(rows))
        return Mixed(tuple(branches))
    if isinstance(t, Rec):
        return Rec(t.name, _map_conts(t.body, f, rng))
    return t


def std_weaken(rng: random.Random, t, depth=2):
    """A subtype of t for the standard relation: extra inputs with a retained
    prefix twin, and recursively weakened continuations."""
    if depth <= 0 or isinstance(t, (End, TypeVar)):
        return t
    if isinstance(t, Rec):
        return Rec(t.name, std_weaken(rng, t.body, depth))
    roll = rng.random()
    ins = [b for b in t.branches if isinstance(b, InputT)]
    if roll < 0.45 and ins:
        twin = rng.choice(ins)
        extra = InputT(twin.receiver, twin.sender,
                       f"x{rng.randrange(10_000)}", None, End())
        return Mixed(t.branches + (extra,))
    if roll < 0.9:
        return _map_conts(t, lambda c: std_weaken(rng, c, depth - 1), rng)
    return t


def multi_weaken_ctx(rng: random.Random, d: LocalContext) -> LocalContext:
    """A context subtype of d for the multi-channel relation."""
    items = list(d)
    if not items:
        return d
    i = rng.randrange(len(items))
    ch, t = items[i]
    roll = rng.random()
    if roll < 0.25 and isinstance(t, Mixed) and len(t.branches) == 1 \
            and isinstance(t.branches[0], ProbSum):
        items[i] = (ch, Mixed((ProbSum((Summand(F(1), TauH(), t),)),)))
    else:
        items[i] = (ch, std_weaken(rng, t))
    return LocalContext(items)


# ---------------------------------------------------------------------------
# scenario protocols (projectable by construction)

@dataclass
class ComPhase:
    sender: str
    receiver: str
    rows: List[Tuple[Fraction, str, Optional[BaseType], Optional[str]]]
    # rows: (prob, label, payload type, optional reply label)


@dataclass
class TauPhase:
    owner: str
    probs: List[Fraction]


@dataclass
class Scenario:
    roles: List[str]
    phases: List[object]
    session: str = "s"

    def context(self, subset=None) -> LocalContext:
        roles = subset if subset is not None else self.roles
        return LocalContext(
            (chan(self.session, r), project_type(self, r)) for r in roles)

    def process(self, role: str):
        return project_process(self, role)

    def system(self):
        from mcmpst.core import Par, INACT
        comps = [self.process(r) for r in self.roles]
        out = comps[0]
        for c in comps[1:]:
            out = Par(out, c)
        return out


def gen_scenario(rng: random.Random, max_phases=3, n_roles=3) -> Scenario:
    roles = ["a", "b", "c"][:n_roles]
    phases: List[object] = []
    fresh = [0]

    def label():
        fresh[0] += 1
        return f"m{fresh[0]}"

    n_phases = rng.randrange(1, max_phases + 1)
    for k in range(n_phases):
        # an internal-action phase races with later phases unless it closes
        # the protocol and its owner is sequenced by the previous phase
        if rng.random() < 0.2 and k == n_phases - 1:
            if phases and isinstance(phases[-1], ComPhase):
                owner = rng.choice([phases[-1].sender, phases[-1].receiver])
            elif not phases:
                owner = rng.choice(roles)
            else:
                owner = phases[-1].owner
            probs = rng.choice(PROB_SPLITS)
            phases.append(TauPhase(owner, list(probs)))
            continue
        sender, receiver = rng.sample(roles, 2)
        probs = rng.choice(PROB_SPLITS)
        rows = []
        for q in probs:
            payload = None
            roll = rng.random()
            if roll < 0.2:
                payload = BaseType.NAT
            elif roll < 0.35:
                payload = BaseType.BOOL
            reply = label() if rng.random() < 0.35 else None
            rows.append((q, label(), payload, reply))
        phases.append(ComPhase(sender, receiver, rows))
    return Scenario(roles, phases)


def project_type(sc: Scenario, role: str, idx: int = 0):
    if idx >= len(sc.phases):
        return End()
    phase = sc.phases[idx]
    rest = lambda: project_type(sc, role, idx + 1)  # noqa: E731
    if isinstance(phase, TauPhase):
        if role != phase.owner:
            return rest()
        rows = tuple(Summand(q, TauH(), rest()) for q in phase.probs)
        return Mixed((ProbSum(rows),))
    if role == phase.sender:
        rows = []
        for q, label, payload, reply in phase.rows:
            cont = rest()
            if reply is not None:
                cont = Mixed((InputT(phase.sender, phase.receiver, reply,
                                     None, cont),))
            rows.append(Summand(q, OutH(phase.sender, phase.receiver,
                                        label, payload), cont))
        return Mixed((ProbSum(tuple(rows)),))
    if role == phase.receiver:
        branches = []
        for _, label, payload, reply in phase.rows:
            cont = rest()
            if reply is not None:
                cont = Mixed((ProbSum((Summand(
                    F(1), OutH(phase.receiver, phase.sender, reply, None),
                    cont),)),))
            branches.append(InputT(phase.receiver, phase.sender, label,
                                   payload, cont))
        return Mixed(tuple(branches))
    return rest()


def _value_for(payload: Optional[BaseType]):
    if payload is None:
        return None
    return NatV(2) if payload is BaseType.NAT else BoolV(True)


def project_process(sc: Scenario, role: str, idx: int = 0):
    from mcmpst.core import INACT
    if idx >= len(sc.phases):
        return INACT
    phase = sc.phases[idx]
    channel = chan(sc.session, role)
    rest = lambda: project_process(sc, role, idx + 1)  # noqa: E731
    if isinstance(phase, TauPhase):
        if role != phase.owner:
            return rest()
        rows = tuple(PRow(q, TauA(), rest()) for q in phase.probs)
        return Choice(channel, (POut(rows),))
    if role == phase.sender:
        rows = []
        for q, label, payload, reply in phase.rows:
            cont = rest()
            if reply is not None:
                cont = Choice(channel, (PInput(phase.sender, phase.receiver,
                                               reply, None, cont),))
            rows.append(PRow(q, SendA(phase.sender, phase.receiver, label,
                                      _value_for(payload)), cont))
        return Choice(channel, (POut(tuple(rows)),))
    if role == phase.receiver:
        summands = []
        for i, (_, label, payload, reply) in enumerate(phase.rows):
            cont = rest()
            if reply is not None:
                cont = Choice(channel, (POut((PRow(
                    F(1), SendA(phase.receiver, phase.sender, reply, None),
                    cont),)),))
            binder = f"v{idx}_{i}" if payload is not None else None
            summands.append(PInput(phase.receiver, phase.sender, label,
                                   binder, cont))
        return Choice(channel, tuple(summands))
    return rest()


# ---------------------------------------------------------------------------
# random processes for the parser round-trip

def random_process(rng: random.Random, depth=3):
    roles = ["a", "b", "c"]
    fresh = [0]

    def label():
        fresh[0] += 1
        return f"k{fresh[0]}"

    def value():
        roll = rng.random()
        if roll < 0.4:
            return NatV(rng.randrange(1, 5))
        if roll < 0.7:
            return BoolV(rng.random() < 0.5)
        return None

    def channel():
        n = 1 if rng.random() < 0.8 else 2
        return chan("s", *rng.sample(roles, n))

    def go(depth):
        from mcmpst.core import (Call, Cond, Decl, Def, INACT, Par, Res)
        if depth <= 0:
            return INACT
        roll = rng.random()
        if roll < 0.45:
            ch = channel()
            summands = []
            for _ in range(rng.randrange(1, 3)):
                if rng.random() < 0.5:
                    binder = f"x{fresh[0]}" if rng.random() < 0.4 else None
                    fresh[0] += 1
                    summands.append(PInput(rng.choice(roles), rng.choice(roles),
                                           label(), binder, go(depth - 1)))
                else:
                    probs = rng.choice(PROB_SPLITS)
                    rows = []
                    for q in probs:
                        if rng.random() < 0.25:
                            rows.append(PRow(q, TauA(), go(depth - 1)))
                        else:
                            rows.append(PRow(q, SendA(
                                rng.choice(roles), rng.choice(roles), label(),
                                value()), go(depth - 1)))
                    summands.append(POut(tuple(rows)))
            return Choice(ch, tuple(summands))
        if roll < 0.6:
            return Par(go(depth - 1), go(depth - 1))
        if roll < 0.7:
            return Res("s2", go(depth - 1))
        if roll < 0.8:
            return Cond(BoolV(rng.random() < 0.5), go(depth - 1), go(depth - 1))
        if roll < 0.9:
            body = go(depth - 1)
            decl = Decl(f"X{fresh[0]}", (("x", BaseType.NAT),),
                        ((channel(), End()),), go(depth - 1))
            fresh[0] += 1
            return Def((decl,), body)
        return Call(f"Y{fresh[0]}", (NatV(1),), (channel(),))

    return go(depth)


def random_type(rng: random.Random, depth=3, allow_rec=True):
    gen = TypeGen(rng, ["a", "b"], ["c", "d"], allow_rec)
    return gen.type(depth)
