"""Operational semantics: congruence normal form, one-step reductions,
seeded simulation, exhaustive weighted exploration, and error detection."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Set, Tuple

from .core import (
    BoolV, Call, Channel, Choice, Cond, Decl, Def, Inact, NatV, Par, PInput,
    POut, PRow, Process, Res, SendA, TauA, Value, VarV, rational_str, INACT,
)
from .errors import BudgetExceeded, McmpstError

ONE = Fraction(1)


# ---------------------------------------------------------------------------
# name utilities

def free_sessions(p: Process, bound=frozenset()) -> Set[str]:
    out: Set[str] = set()
    if isinstance(p, Res):
        out |= free_sessions(p.body, bound | {p.session})
    elif isinstance(p, Par):
        out |= free_sessions(p.left, bound) | free_sessions(p.right, bound)
    elif isinstance(p, Cond):
        out |= free_sessions(p.then_branch, bound) | free_sessions(p.else_branch, bound)
    elif isinstance(p, Def):
        for d in p.decls:
            out |= {c.session for c, _ in d.chans if c.session not in bound}
            out |= free_sessions(d.body, bound)
        out |= free_sessions(p.body, bound)
    elif isinstance(p, Call):
        out |= {c.session for c in p.chans if c.session not in bound}
    elif isinstance(p, Choice):
        if p.chan.session not in bound:
            out.add(p.chan.session)
        for s in p.summands:
            conts = [s.cont] if isinstance(s, PInput) else [r.cont for r in s.rows]
            for c in conts:
                out |= free_sessions(c, bound)
    return out


def free_proc_vars(p: Process, bound=frozenset()) -> Set[str]:
    out: Set[str] = set()
    if isinstance(p, Call):
        if p.name not in bound:
            out.add(p.name)
    elif isinstance(p, Par):
        out |= free_proc_vars(p.left, bound) | free_proc_vars(p.right, bound)
    elif isinstance(p, (Res,)):
        out |= free_proc_vars(p.body, bound)
    elif isinstance(p, Cond):
        out |= free_proc_vars(p.then_branch, bound) | free_proc_vars(p.else_branch, bound)
    elif isinstance(p, Def):
        inner = bound | {d.name for d in p.decls}
        for d in p.decls:
            out |= free_proc_vars(d.body, inner)
        out |= free_proc_vars(p.body, inner)
    elif isinstance(p, Choice):
        for s in p.summands:
            conts = [s.cont] if isinstance(s, PInput) else [r.cont for r in s.rows]
            for c in conts:
                out |= free_proc_vars(c, bound)
    return out


def _fresh(base: str, used: Set[str]) -> str:
    i = 1
    while f"{base}_{i}" in used:
        i += 1
    used.add(f"{base}_{i}")
    return f"{base}_{i}"


def rename_session(p: Process, old: str, new: str) -> Process:
    def chan(c: Channel) -> Channel:
        return Channel(new, c.roles) if c.session == old else c

    def go(p):
        if isinstance(p, Res):
            if p.session == old:
                return p
            return Res(p.session, go(p.body))
        if isinstance(p, Par):
            return Par(go(p.left), go(p.right))
        if isinstance(p, Cond):
            return Cond(p.cond, go(p.then_branch), go(p.else_branch))
        if isinstance(p, Def):
            decls = tuple(
                Decl(d.name, d.params, tuple((chan(c), t) for c, t in d.chans),
                     go(d.body)) for d in p.decls)
            return Def(decls, go(p.body))
        if isinstance(p, Call):
            return Call(p.name, p.args, tuple(chan(c) for c in p.chans))
        if isinstance(p, Choice):
            return Choice(chan(p.chan), tuple(_map_summand(s, go) for s in p.summands))
        return p

    return go(p)


def _map_summand(s, go):
    if isinstance(s, PInput):
        return PInput(s.receiver, s.sender, s.label, s.binder, go(s.cont))
    return POut(tuple(PRow(r.prob, r.action, go(r.cont)) for r in s.rows))


def subst_values(p: Process, sub: Dict[str, Value]) -> Process:
    """Capture-avoiding simultaneous substitution of values for variables."""
    if not sub:
        return p

    def val(v: Value) -> Value:
        if isinstance(v, VarV) and v.name in sub:
            return sub[v.name]
        return v

    free_in_sub = {v.name for v in sub.values() if isinstance(v, VarV)}

    def go(p, sub):
        if not sub:
            return p
        if isinstance(p, Par):
            return Par(go(p.left, sub), go(p.right, sub))
        if isinstance(p, Res):
            return Res(p.session, go(p.body, sub))
        if isinstance(p, Cond):
            c = p.cond
            c = sub.get(c.name, c) if isinstance(c, VarV) else c
            return Cond(c, go(p.then_branch, sub), go(p.else_branch, sub))
        if isinstance(p, Def):
            decls = []
            for d in p.decls:
                inner = {k: v for k, v in sub.items()
                         if k not in {x for x, _ in d.params}}
                decls.append(Decl(d.name, d.params, d.chans, go(d.body, inner)))
            return Def(tuple(decls), go(p.body, sub))
        if isinstance(p, Call):
            args = tuple(sub.get(a.name, a) if isinstance(a, VarV) else a
                         for a in p.args)
            return Call(p.name, args, p.chans)
        if isinstance(p, Choice):
            out = []
            for s in p.summands:
                if isinstance(s, PInput):
                    inner = dict(sub)
                    binder = s.binder
                    cont = s.cont
                    if binder is not None:
                        inner.pop(binder, None)
                        if binder in free_in_sub and inner:
                            used = {binder} | set(inner) | free_in_sub
                            fresh = _fresh(binder, set(used))
                            cont = subst_values(cont, {binder: VarV(fresh)})
                            binder = fresh
                    out.append(PInput(s.receiver, s.sender, s.label, binder,
                                      go(cont, inner)))
                else:
                    rows = []
                    for r in s.rows:
                        action = r.action
                        if isinstance(action, SendA) and action.payload is not None:
                            action = SendA(action.sender, action.receiver,
                                           action.label, val(action.payload))
                        rows.append(PRow(r.prob, action, go(r.cont, sub)))
                    out.append(POut(tuple(rows)))
            return Choice(p.chan, tuple(out))
        return p

    return go(p, dict(sub))


def subst_channels(p: Process, mapping: Dict[Channel, Channel]) -> Process:
    if not mapping:
        return p

    def chan(c):
        return mapping.get(c, c)

    def go(p):
        if isinstance(p, Par):
            return Par(go(p.left), go(p.right))
        if isinstance(p, Res):
            return Res(p.session, go(p.body))
        if isinstance(p, Cond):
            return Cond(p.cond, go(p.then_branch), go(p.else_branch))
        if isinstance(p, Def):
            return Def(tuple(Decl(d.name, d.params, d.chans, go(d.body))
                             for d in p.decls), go(p.body))
        if isinstance(p, Call):
            return Call(p.name, p.args, tuple(chan(c) for c in p.chans))
        if isinstance(p, Choice):
            return Choice(chan(p.chan),
                          tuple(_map_summand(s, go) for s in p.summands))
        return p

    return go(p)


# ---------------------------------------------------------------------------
# sorting and canonical keys

def _value_key(v) -> tuple:
    if v is None:
        return (0,)
    if isinstance(v, VarV):
        return (1, v.name)
    if isinstance(v, NatV):
        return (2, v.value)
    return (3, v.value)


def proc_sort_key(p: Process) -> tuple:
    if isinstance(p, Inact):
        return (0,)
    if isinstance(p, Choice):
        return (1, p.chan.sort_key(), tuple(_summand_key(s) for s in p.summands))
    if isinstance(p, Cond):
        return (2, _value_key(p.cond), proc_sort_key(p.then_branch),
                proc_sort_key(p.else_branch))
    if isinstance(p, Call):
        return (3, p.name, tuple(_value_key(a) for a in p.args),
                tuple(c.sort_key() for c in p.chans))
    if isinstance(p, Par):
        return (4, proc_sort_key(p.left), proc_sort_key(p.right))
    if isinstance(p, Res):
        return (5, p.session, proc_sort_key(p.body))
    if isinstance(p, Def):
        return (6, tuple(d.name for d in p.decls), proc_sort_key(p.body))
    raise TypeError(p)


def _summand_key(s) -> tuple:
    if isinstance(s, PInput):
        return (0, s.receiver, s.sender, s.label, s.binder or "",
                proc_sort_key(s.cont))
    return (1, tuple((r.prob, _action_key(r.action), proc_sort_key(r.cont))
                     for r in s.rows))


def _action_key(a) -> tuple:
    if isinstance(a, TauA):
        return (1,)
    return (0, a.sender, a.receiver, a.label, _value_key(a.payload))


# ---------------------------------------------------------------------------
# structural congruence normal form

def normalize(p: Process) -> Process:
    """Congruence normal form: parallel flattened and sorted, units removed,
    restrictions and definitions hoisted outward (renaming to satisfy the
    side conditions), `new s.0` and `def D in 0` erased. Idempotent."""
    sessions, decls, comps = _decompose(p)
    comps = [c for c in comps if not isinstance(c, Inact)]
    comps.sort(key=proc_sort_key)
    if not comps:
        return INACT
    body = comps[0]
    for c in comps[1:]:
        body = Par(body, c)
    if decls:
        body = Def(tuple(sorted(decls, key=lambda d: d.name)), body)
    for s in sorted(sessions, reverse=True):
        body = Res(s, body)
    return body


def _decompose(p: Process) -> Tuple[List[str], List[Decl], List[Process]]:
    if isinstance(p, Inact):
        return [], [], []
    if isinstance(p, Par):
        s1, d1, c1 = _decompose(p.left)
        s2, d2, c2 = _decompose(p.right)
        return _merge_parts((s1, d1, c1), (s2, d2, c2))
    if isinstance(p, Res):
        s, d, c = _decompose(p.body)
        if p.session in s:  # an inner restriction reuses the name: alpha-rename ours
            used = set(s) | free_sessions(p.body) | {p.session}
            fresh = _fresh(p.session, used)
            return _decompose(Res(fresh, rename_session(p.body, p.session, fresh)))
        if not d and not c:
            return [], [], []  # new s. 0 == 0
        return [p.session] + s, d, c
    if isinstance(p, Def):
        s, d, c = _decompose(p.body)
        if not d and not c:
            return [], [], []  # def D in 0 == 0 (garbage collection)
        decls = [Decl(x.name, x.params, x.chans, normalize(x.body))
                 for x in p.decls]
        own = {x.name for x in decls}
        clash = own & ({y.name for y in d} | set().union(
            *[free_proc_vars(y.body, set()) for y in d]) if d else set())
        if clash:
            # keep the inner definitions apart by renaming ours
            used = own | {y.name for y in d}
            ren = {}
            for x in decls:
                if x.name in clash:
                    ren[x.name] = _fresh(x.name, used)
            decls = [Decl(ren.get(x.name, x.name), x.params, x.chans,
                          _rename_calls(x.body, ren)) for x in decls]
            c = [_rename_calls(q, ren) for q in c]
            d = [Decl(y.name, y.params, y.chans, _rename_calls(y.body, ren))
                 for y in d]
        # hoist restrictions above the definition, renaming captured sessions
        fs_d = set()
        for x in decls:
            fs_d |= {ch.session for ch, _ in x.chans}
            fs_d |= free_sessions(x.body)
        out_sessions = []
        for name in s:
            if name in fs_d:
                used = set(s) | fs_d
                fresh = _fresh(name, used)
                c = [rename_session(q, name, fresh) for q in c]
                d = [Decl(y.name, y.params, y.chans,
                          rename_session(y.body, name, fresh)) for y in d]
                out_sessions.append(fresh)
            else:
                out_sessions.append(name)
        return out_sessions, decls + d, c
    if isinstance(p, Cond):
        return [], [], [Cond(p.cond, normalize(p.then_branch),
                             normalize(p.else_branch))]
    if isinstance(p, Choice):
        return [], [], [Choice(p.chan, tuple(
            _map_summand(s, normalize) for s in p.summands))]
    if isinstance(p, Call):
        return [], [], [p]
    raise TypeError(p)


def _merge_parts(a, b):
    s1, d1, c1 = a
    s2, d2, c2 = b
    # rename hoisted sessions that would capture free sessions of the other side
    def clean(sess, my_d, my_c, other_free):
        out_s, ren = [], {}
        used = set(sess) | other_free
        for name in sess:
            if name in other_free:
                fresh = _fresh(name, used)
                ren[name] = fresh
                out_s.append(fresh)
            else:
                out_s.append(name)
        for old, new in ren.items():
            my_c = [rename_session(q, old, new) for q in my_c]
            my_d = [Decl(d.name, d.params,
                         tuple((Channel(new, c.roles) if c.session == old else c, t)
                               for c, t in d.chans),
                         rename_session(d.body, old, new)) for d in my_d]
        return out_s, my_d, my_c

    free2 = set()
    for q in c2:
        free2 |= free_sessions(q)
    for d in d2:
        free2 |= free_sessions(d.body) | {c.session for c, _ in d.chans}
    s1, d1, c1 = clean(s1, d1, c1, free2 | set(s2))
    free1 = set()
    for q in c1:
        free1 |= free_sessions(q)
    for d in d1:
        free1 |= free_sessions(d.body) | {c.session for c, _ in d.chans}
    s2, d2, c2 = clean(s2, d2, c2, free1)
    # merge declaration sets, renaming clashes on the right
    names1 = {d.name for d in d1}
    ren = {}
    used = names1 | {d.name for d in d2}
    for d in d2:
        if d.name in names1:
            ren[d.name] = _fresh(d.name, used)
    if ren:
        d2 = [Decl(ren.get(d.name, d.name), d.params, d.chans,
                   _rename_calls(d.body, ren)) for d in d2]
        c2 = [_rename_calls(q, ren) for q in c2]
    return s1 + s2, d1 + d2, c1 + c2


def _rename_calls(p: Process, ren: Dict[str, str]) -> Process:
    if not ren:
        return p

    def go(p, ren):
        if isinstance(p, Call):
            return Call(ren.get(p.name, p.name), p.args, p.chans)
        if isinstance(p, Par):
            return Par(go(p.left, ren), go(p.right, ren))
        if isinstance(p, Res):
            return Res(p.session, go(p.body, ren))
        if isinstance(p, Cond):
            return Cond(p.cond, go(p.then_branch, ren), go(p.else_branch, ren))
        if isinstance(p, Def):
            inner = {k: v for k, v in ren.items()
                     if k not in {d.name for d in p.decls}}
            return Def(tuple(Decl(d.name, d.params, d.chans, go(d.body, inner))
                             for d in p.decls), go(p.body, inner))
        if isinstance(p, Choice):
            return Choice(p.chan, tuple(
                _map_summand(s, lambda q: go(q, ren)) for s in p.summands))
        return p

    return go(p, ren)


# ---------------------------------------------------------------------------
# alpha-canonical key (state deduplication)

def canonical_process(p: Process) -> Process:
    """Normal form with bound sessions, binders and process variables renamed
    to a fixed scheme; equality on results is congruence-closed equality up
    to the normal form."""
    p = normalize(p)
    counters = {"s": 0, "v": 0, "X": 0}

    def fresh(kind):
        counters[kind] += 1
        return f"%{kind}{counters[kind]}"

    def chan(c: Channel, env) -> Channel:
        new = env.get(("s", c.session))
        return Channel(new, c.roles) if new else c

    def val(v, env):
        if isinstance(v, VarV):
            new = env.get(("v", v.name))
            return VarV(new) if new else v
        return v

    def go(p, env):
        if isinstance(p, Inact):
            return p
        if isinstance(p, Par):
            return Par(go(p.left, env), go(p.right, env))
        if isinstance(p, Res):
            name = fresh("s")
            return Res(name, go(p.body, {**env, ("s", p.session): name}))
        if isinstance(p, Cond):
            return Cond(val(p.cond, env), go(p.then_branch, env),
                        go(p.else_branch, env))
        if isinstance(p, Def):
            env2 = dict(env)
            for d in p.decls:
                env2[("X", d.name)] = fresh("X")
            decls = []
            for d in p.decls:
                env3 = dict(env2)
                params = []
                for x, t in d.params:
                    env3[("v", x)] = fresh("v")
                    params.append((env3[("v", x)], t))
                decls.append(Decl(env2[("X", d.name)], tuple(params),
                                  tuple((chan(c, env3), t) for c, t in d.chans),
                                  go(d.body, env3)))
            return Def(tuple(decls), go(p.body, env2))
        if isinstance(p, Call):
            return Call(env.get(("X", p.name), p.name),
                        tuple(val(a, env) for a in p.args),
                        tuple(chan(c, env) for c in p.chans))
        if isinstance(p, Choice):
            out = []
            for s in p.summands:
                if isinstance(s, PInput):
                    env2 = dict(env)
                    binder = s.binder
                    if binder is not None:
                        env2[("v", binder)] = fresh("v")
                        binder = env2[("v", binder)]
                    out.append(PInput(s.receiver, s.sender, s.label, binder,
                                      go(s.cont, env2)))
                else:
                    out.append(POut(tuple(
                        PRow(r.prob,
                             r.action if isinstance(r.action, TauA) else
                             SendA(r.action.sender, r.action.receiver,
                                   r.action.label,
                                   val(r.action.payload, env)
                                   if r.action.payload is not None else None),
                             go(r.cont, env)) for r in s.rows)))
            return Choice(chan(p.chan, env), tuple(out))
        raise TypeError(p)

    return go(p, {})


# ---------------------------------------------------------------------------
# redexes

@dataclass(frozen=True)
class Redex:
    kind: str  # cond | defgc | call | tau | com
    rule: str
    description: str
    prob: Fraction
    result: Process
    group: tuple  # scheduler alternative this redex belongs to


def _rebuild(sessions, decls, comps) -> Process:
    comps = [c for c in comps if not isinstance(c, Inact)]
    if not comps:
        body = INACT
    else:
        body = comps[0]
        for c in comps[1:]:
            body = Par(body, c)
    if decls and comps:
        body = Def(tuple(decls), body)
    for s in reversed(sessions):
        body = Res(s, body)
    return normalize(body)


def enabled(p: Process) -> List[Redex]:
    """All redexes of `p` up to structural congruence."""
    redexes: List[Redex] = []
    if isinstance(p, Def) and isinstance(normalize(p.body), Inact):
        redexes.append(Redex("defgc", "R-Def-0", "collect unused definitions",
                             ONE, INACT, ("defgc",)))
    nf = normalize(p)
    sessions, decls, comps = [], [], []
    q = nf
    while isinstance(q, Res):
        sessions.append(q.session)
        q = q.body
    if isinstance(q, Def):
        decls = list(q.decls)
        q = q.body

    def flatten(r):
        if isinstance(r, Par):
            flatten(r.left)
            flatten(r.right)
        elif not isinstance(r, Inact):
            comps.append(r)

    flatten(q)
    by_decl = {d.name: d for d in decls}

    for i, comp in enumerate(comps):
        if isinstance(comp, Cond):
            if isinstance(comp.cond, BoolV):
                branch = comp.then_branch if comp.cond.value else comp.else_branch
                rule = "R-Cond-T" if comp.cond.value else "R-Cond-F"
                result = _rebuild(sessions, decls,
                                  comps[:i] + [branch] + comps[i + 1:])
                redexes.append(Redex("cond", rule, "resolve conditional",
                                     ONE, result, ("cond", i)))
            continue
        if isinstance(comp, Call):
            d = by_decl.get(comp.name)
            if d is None:
                continue
            if len(comp.args) != len(d.params):
                raise McmpstError(
                    f"call of {comp.name} with {len(comp.args)} values for "
                    f"{len(d.params)} parameters")
            body = subst_values(d.body, {x: v for (x, _), v
                                         in zip(d.params, comp.args)})
            body = subst_channels(body, {c: c2 for (c, _), c2
                                         in zip(d.chans, comp.chans)})
            result = _rebuild(sessions, decls, comps[:i] + [body] + comps[i + 1:])
            redexes.append(Redex("call", "R-Def", f"unfold {comp.name}",
                                 ONE, result, ("call", i)))
            continue
        if not isinstance(comp, Choice):
            continue
        for si, s in enumerate(comp.summands):
            if not isinstance(s, POut):
                continue
            for ri, row in enumerate(s.rows):
                if isinstance(row.action, TauA):
                    result = _rebuild(sessions, decls,
                                      comps[:i] + [row.cont] + comps[i + 1:])
                    redexes.append(Redex(
                        "tau", "R-tau", f"internal action on {comp.chan}",
                        row.prob, result, ("sum", i, si, ("row", ri))))
                    continue
                a = row.action
                for j, other in enumerate(comps):
                    if j == i or not isinstance(other, Choice):
                        continue
                    if other.chan.session != comp.chan.session:
                        continue
                    for inp in other.summands:
                        if not isinstance(inp, PInput):
                            continue
                        if (inp.sender, inp.receiver, inp.label) != \
                                (a.sender, a.receiver, a.label):
                            continue
                        if (inp.binder is None) != (a.payload is None):
                            continue
                        cont2 = inp.cont
                        if inp.binder is not None:
                            cont2 = subst_values(cont2, {inp.binder: a.payload})
                        out = list(comps)
                        out[i] = row.cont
                        out[j] = cont2
                        result = _rebuild(sessions, decls, out)
                        redexes.append(Redex(
                            "com", "R-Com",
                            f"{comp.chan.session}:{a.sender}->{a.receiver}"
                            f":{a.label}", row.prob, result,
                            ("sum", i, si, ("partner", ri, j))))
    return redexes


# ---------------------------------------------------------------------------
# error processes

def is_error(p: Process) -> Optional[str]:
    """CommunicationError / ValueError detection up to congruence."""
    nf = normalize(p)
    comps = []
    q = nf
    while isinstance(q, Res):
        q = q.body
    if isinstance(q, Def):
        q = q.body

    def flatten(r):
        if isinstance(r, Par):
            flatten(r.left)
            flatten(r.right)
        elif not isinstance(r, Inact):
            comps.append(r)

    flatten(q)
    for comp in comps:
        if isinstance(comp, Cond) and not isinstance(comp.cond, BoolV):
            return "value"
    for i, comp in enumerate(comps):
        if not isinstance(comp, Choice):
            continue
        for s in comp.summands:
            if not isinstance(s, POut):
                continue
            for row in s.rows:
                if not isinstance(row.action, SendA):
                    continue
                a = row.action
                for j, other in enumerate(comps):
                    if j == i or not isinstance(other, Choice):
                        continue
                    if other.chan.session != comp.chan.session:
                        continue
                    dual = [x for x in other.summands
                            if isinstance(x, PInput)
                            and x.receiver == a.receiver and x.sender == a.sender]
                    if dual and all(x.label != a.label for x in dual):
                        return "communication"
    return None


# ---------------------------------------------------------------------------
# scheduling, simulation

@dataclass
class Alternative:
    description: str
    rows: List[Tuple[Fraction, Optional[Redex]]]


def alternatives(p: Process) -> List[Alternative]:
    """Scheduler alternatives: deterministic steps, and probabilistic sums
    with one resolved partner per output row (a sum whose rows can talk to
    several partners yields one alternative per combination)."""
    import itertools as _it
    reds = enabled(p)
    singles = [r for r in reds if r.kind in ("cond", "call", "defgc")]
    out = [Alternative(r.description, [(ONE, r)]) for r in
           sorted(singles, key=lambda r: r.group)]
    grouped: Dict[tuple, Dict[tuple, List[Redex]]] = {}
    for r in reds:
        if r.kind not in ("tau", "com"):
            continue
        comp_sum = r.group[:3]
        slot = ("row", r.group[3][1])
        grouped.setdefault(comp_sum, {}).setdefault(slot, []).append(r)
    for comp_sum in sorted(grouped):
        slots = grouped[comp_sum]
        keys = sorted(slots)
        for combo in _it.product(*[slots[k] for k in keys]):
            rows = [(r.prob, r) for r in combo]
            desc = "; ".join(r.description for r in combo)
            out.append(Alternative(desc, rows))
    return out


@dataclass
class Trace:
    steps: List[Tuple[str, str, Fraction]] = field(default_factory=list)
    cumulative: Fraction = ONE
    final: Optional[Process] = None

    def to_json(self):
        from .surface import pp_process
        return {
            "schema": "mcmpst/1",
            "steps": [{"rule": rule, "description": d, "prob": rational_str(q)}
                      for rule, d, q in self.steps],
            "cumulative": rational_str(self.cumulative),
            "final": pp_process(self.final) if self.final is not None else None,
        }


def simulate(p: Process, seed: int = 0, max_steps: int = 100,
             scheduler: str = "uniform",
             script: Optional[List[int]] = None) -> Trace:
    """Run one reduction sequence. The scheduler resolves nondeterminism
    (uniform seeded / first / scripted indices); the probabilistic branch
    within the chosen sum is sampled by its exact probabilities."""
    rng = random.Random(seed)
    trace = Trace()
    current = normalize(p)
    for step_no in range(max_steps):
        alts = alternatives(current)
        if not alts:
            break
        if scheduler == "first":
            alt = alts[0]
        elif scheduler == "script":
            if script is None or step_no >= len(script):
                alt = alts[0]
            else:
                alt = alts[script[step_no] % len(alts)]
        else:
            alt = alts[rng.randrange(len(alts))]
        total = sum((q for q, _ in alt.rows), Fraction(0))
        u = Fraction(rng.random()).limit_denominator(10 ** 9) * total
        acc = Fraction(0)
        chosen = alt.rows[-1]
        for q, r in alt.rows:
            acc += q
            if u < acc:
                chosen = (q, r)
                break
        q, r = chosen
        if r is None:
            break  # sampled a branch with no enabled partner
        trace.steps.append((r.rule, r.description, q))
        trace.cumulative *= q
        current = r.result
    trace.final = current
    return trace


# ---------------------------------------------------------------------------
# exhaustive exploration

@dataclass(frozen=True)
class Outcome:
    terminal: Process
    mass: Fraction
    deadlocked: bool
    error: Optional[str]
    truncated: bool = False

    def to_json(self):
        from .surface import pp_process
        return {
            "terminal": pp_process(self.terminal),
            "mass": rational_str(self.mass),
            "deadlocked": self.deadlocked,
            "error": self.error,
            "truncated": self.truncated,
        }


def explore(p: Process, max_depth: int = 12,
            max_paths: int = 100_000) -> List[Outcome]:
    """Depth-bounded exhaustive closure of the reduction relation; one
    outcome per path, carrying the exact path mass."""
    succ: Dict[Process, List[Redex]] = {}
    outcomes: List[Outcome] = []

    def successors(q: Process) -> List[Redex]:
        key = canonical_process(q)
        if key not in succ:
            succ[key] = sorted(enabled(key),
                               key=lambda r: (str(r.group), r.description))
        return succ[key]

    def walk(q: Process, mass: Fraction, depth: int):
        if len(outcomes) > max_paths:
            raise BudgetExceeded("too many exploration paths")
        key = canonical_process(q)
        reds = successors(key)
        if not reds:
            outcomes.append(Outcome(
                key, mass, not isinstance(key, Inact), is_error(key)))
            return
        if depth == 0:
            outcomes.append(Outcome(key, mass, False, is_error(key),
                                    truncated=True))
            return
        for r in reds:
            walk(r.result, mass * r.prob, depth - 1)

    walk(p, ONE, max_depth)
    return outcomes


def reachable_states(p: Process, max_depth: int = 12,
                     max_states: int = 100_000) -> List[Process]:
    """All canonical states reachable within the depth bound."""
    seen: Dict[Process, int] = {}
    frontier = [(canonical_process(p), max_depth)]
    order: List[Process] = []
    while frontier:
        q, depth = frontier.pop()
        if q in seen and seen[q] >= depth:
            continue
        if q not in seen:
            order.append(q)
        seen[q] = depth
        if len(order) > max_states:
            raise BudgetExceeded("too many reachable states")
        if depth == 0:
            continue
        for r in enabled(q):
            frontier.append((canonical_process(r.result), depth - 1))
    return order


def explored_dot(p: Process, max_depth: int = 12) -> str:
    """Graphviz view of the explored reduction DAG."""
    from .surface import pp_process
    index: Dict[Process, int] = {}
    lines = ["digraph explore {", "  rankdir=LR;"]
    edges = set()

    def node(q: Process) -> int:
        if q not in index:
            index[q] = len(index)
            label = pp_process(q).replace('"', "'")
            if len(label) > 60:
                label = label[:57] + "..."
            lines.append(f'  n{index[q]} [label="{label}"];')
        return index[q]

    def walk(q: Process, depth: int):
        i = node(q)
        if depth == 0:
            return
        for r in enabled(q):
            target = canonical_process(r.result)
            j = node(target)
            key = (i, j, r.description, r.prob)
            if key in edges:
                continue
            edges.add(key)
            lines.append(
                f'  n{i} -> n{j} [label="{r.description} @{rational_str(r.prob)}"];')
            walk(target, depth - 1)

    walk(canonical_process(p), max_depth)
    lines.append("}")
    return "\n".join(lines)
