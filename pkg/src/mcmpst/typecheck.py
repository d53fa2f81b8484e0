"""The typing judgment, algorithmic form: syntax-directed synthesis plus one
subsumption at the root, with the safety side condition at restrictions."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Tuple

from .core import (
    Active, BaseType, BoolV, Call, Channel, Choice, Cond, Decl, Def, End,
    GlobalEnv, Inact, InputT, LocalContext, Mixed, NatV, OutH, Par, PInput,
    POut, Plain, ProbSum, Process, Rec, Res, SendA, SessionType, Summand,
    TauA, TauH, VarV, compose_contexts, value_type, EMPTY_CONTEXT,
)
from .ctxlts import Verdict, safe
from .errors import IllFormedType, LinearityViolation, TypingError
from .subtype import DEFAULT_BUDGET, Derivation, sub_multi
from .typemeta import canonical_context, canonical_type, context_well_formed, unfold_all


@dataclass
class TypeReport:
    verdict: bool
    synthesized: Optional[LocalContext]
    subsumption: Optional[Derivation]
    diagnostics: List[str] = field(default_factory=list)

    def to_json(self):
        from .surface import pp_context
        return {
            "schema": "mcmpst/1",
            "verdict": self.verdict,
            "synthesized": pp_context(self.synthesized)
            if self.synthesized is not None else None,
            "derivation": self.subsumption.to_json()
            if self.subsumption is not None else None,
            "diagnostics": list(self.diagnostics),
        }


# ---------------------------------------------------------------------------
# synthesis

def _expected_surface(t: Optional[SessionType]) -> Optional[SessionType]:
    if t is None:
        return None
    return unfold_all(t) if isinstance(t, Rec) else t


def _expected_input(t, summand: PInput):
    if isinstance(t, Mixed):
        for b in t.branches:
            if (isinstance(b, InputT) and b.receiver == summand.receiver
                    and b.sender == summand.sender and b.label == summand.label):
                return b
    return None


def _expected_row(t, action):
    if isinstance(t, Mixed):
        for b in t.branches:
            if isinstance(b, ProbSum):
                for s in b.summands:
                    if isinstance(action, TauA) and isinstance(s.head, TauH):
                        return s
                    if (isinstance(action, SendA) and isinstance(s.head, OutH)
                            and (s.head.sender, s.head.receiver, s.head.label)
                            == (action.sender, action.receiver, action.label)):
                        return s
    return None


def _infer_var_type(p: Process, name: str, env: GlobalEnv) -> Optional[BaseType]:
    """Scan for positions that force a base type on a bound variable."""
    if isinstance(p, Cond):
        if isinstance(p.cond, VarV) and p.cond.name == name:
            return BaseType.BOOL
        return (_infer_var_type(p.then_branch, name, env)
                or _infer_var_type(p.else_branch, name, env))
    if isinstance(p, Par):
        return (_infer_var_type(p.left, name, env)
                or _infer_var_type(p.right, name, env))
    if isinstance(p, Res):
        return _infer_var_type(p.body, name, env)
    if isinstance(p, Call):
        sig = env.proc(p.name)
        if sig is not None:
            for arg, ty in zip(p.args, sig[0]):
                if isinstance(arg, VarV) and arg.name == name:
                    return ty
        return None
    if isinstance(p, Def):
        return _infer_var_type(p.body, name, env)
    if isinstance(p, Choice):
        for s in p.summands:
            if isinstance(s, PInput):
                if s.binder != name:
                    got = _infer_var_type(s.cont, name, env)
                    if got:
                        return got
            else:
                for row in s.rows:
                    got = _infer_var_type(row.cont, name, env)
                    if got:
                        return got
    return None


def synth(env: GlobalEnv, p: Process,
          expected: Optional[LocalContext] = None,
          budget: int = DEFAULT_BUDGET) -> LocalContext:
    """The syntax-directed context of `p`. Input binders take their payload
    type from the expected context when one is available, otherwise from the
    first constraining use (conditionals, call arguments), defaulting to nat."""
    if isinstance(p, Inact):
        return EMPTY_CONTEXT
    if isinstance(p, Par):
        d1 = synth(env, p.left, expected, budget)
        d2 = synth(env, p.right, expected, budget)
        try:
            return compose_contexts(d1, d2)
        except LinearityViolation as e:
            raise TypingError(f"parallel composition is not linear: {e}")
    if isinstance(p, Res):
        inner = synth(env, p.body, expected, budget)
        bound = LocalContext((c, t) for c, t in inner if c.session == p.session)
        rest = LocalContext((c, t) for c, t in inner if c.session != p.session)
        verdict = safe(bound)
        if not verdict:
            raise TypingError(
                f"restricted session {p.session} is unsafe: {verdict.reason}")
        return rest
    if isinstance(p, Cond):
        if value_type(env, p.cond) != BaseType.BOOL:
            raise TypingError("conditional on a non-boolean value")
        d1 = synth(env, p.then_branch, expected, budget)
        d2 = synth(env, p.else_branch, expected, budget)
        if canonical_context(d1) == canonical_context(d2):
            return d1
        if sub_multi(d1, d2, budget) is not None:
            return d2
        if sub_multi(d2, d1, budget) is not None:
            return d1
        raise TypingError("conditional branches have unrelated contexts")
    if isinstance(p, Def):
        env2 = env
        for d in p.decls:
            env2 = env2.with_proc(d.name, (tuple(t for _, t in d.params),
                                           tuple(t for _, t in d.chans)))
        for d in p.decls:
            env3 = env2
            for x, t in d.params:
                env3 = env3.with_var(x, t)
            annotated = LocalContext(d.chans)
            diags = context_well_formed(annotated)
            if diags:
                raise TypingError(f"declaration {d.name}: " + "; ".join(diags))
            body_ctx = synth(env3, d.body, annotated, budget)
            if sub_multi(body_ctx, annotated, budget) is None:
                raise TypingError(
                    f"declaration {d.name}: body does not match its annotation")
        return synth(env2, p.body, expected, budget)
    if isinstance(p, Call):
        sig = env.proc(p.name)
        if sig is None:
            raise TypingError(f"unbound process variable {p.name}")
        val_tys, chan_tys = sig
        if len(p.args) != len(val_tys) or len(p.chans) != len(chan_tys):
            raise TypingError(f"call of {p.name} with wrong arity")
        for v, ty in zip(p.args, val_tys):
            got = value_type(env, v)
            if got != ty:
                raise TypingError(f"call of {p.name}: argument type mismatch")
        return LocalContext(zip(p.chans, chan_tys))
    if isinstance(p, Choice):
        return _synth_choice(env, p, expected, budget)
    raise TypingError(f"cannot type {type(p).__name__}")


def _synth_choice(env, p: Choice, expected, budget) -> LocalContext:
    ch = p.chan
    exp_t = _expected_surface(expected.get(ch)) if expected is not None else None
    branches = []
    rests = []
    for s in p.summands:
        if isinstance(s, PInput):
            if s.receiver not in ch.roles:
                raise TypingError(
                    f"input by role {s.receiver} outside channel {ch}")
            exp_b = _expected_input(exp_t, s)
            payload = None
            env2 = env
            if s.binder is not None:
                payload = exp_b.payload if exp_b is not None else None
                if payload is None:
                    payload = _infer_var_type(s.cont, s.binder, env) or BaseType.NAT
                env2 = env.with_var(s.binder, payload)
            sub_expected = _push_expectation(expected, ch, exp_b.cont if exp_b else None)
            d = synth(env2, s.cont, sub_expected, budget)
            branches.append(InputT(s.receiver, s.sender, s.label, payload,
                                   d.get(ch) or End()))
            rests.append(d.without(ch))
        else:
            rows = []
            for row in s.rows:
                if isinstance(row.action, SendA):
                    a = row.action
                    if a.sender not in ch.roles:
                        raise TypingError(
                            f"output by role {a.sender} outside channel {ch}")
                    payload = None
                    if a.payload is not None:
                        payload = value_type(env, a.payload)
                        if payload is None:
                            raise TypingError(
                                f"untypable payload in {a.label} output")
                    head = OutH(a.sender, a.receiver, a.label, payload)
                else:
                    head = TauH()
                exp_row = _expected_row(exp_t, row.action)
                sub_expected = _push_expectation(
                    expected, ch, exp_row.cont if exp_row else None)
                d = synth(env, row.cont, sub_expected, budget)
                rows.append(Summand(row.prob, head, d.get(ch) or End()))
                rests.append(d.without(ch))
            branches.append(ProbSum(tuple(rows)))
    rest0 = canonical_context(rests[0]) if rests else EMPTY_CONTEXT
    for r in rests[1:]:
        if canonical_context(r) != rest0:
            raise TypingError(
                f"choice on {ch}: summands disagree on the other channels")
    if rests and len(rest0):
        return compose_contexts(rest0, LocalContext([(ch, Mixed(tuple(branches)))]))
    return LocalContext([(ch, Mixed(tuple(branches)))])


def _push_expectation(expected, ch, cont):
    if expected is None:
        return None
    if cont is None:
        return expected.without(ch)
    return expected.set(ch, cont)


# ---------------------------------------------------------------------------
# checking

def check(env: GlobalEnv, p: Process, declared: LocalContext,
          budget: int = DEFAULT_BUDGET) -> TypeReport:
    diags = context_well_formed(declared)
    if diags:
        return TypeReport(False, None, None,
                          [f"declared context ill-formed: {m}" for m in diags])
    try:
        synthesized = synth(env, p, declared, budget)
    except (TypingError, LinearityViolation, IllFormedType) as e:
        return TypeReport(False, None, None, [str(e)])
    diags = context_well_formed(synthesized)
    if diags:
        return TypeReport(False, synthesized, None,
                          [f"synthesized context ill-formed: {m}" for m in diags])
    deriv = sub_multi(synthesized, declared, budget)
    if deriv is None:
        return TypeReport(False, canonical_context(synthesized), None,
                          ["synthesized context is not a subtype of the "
                           "declared context"])
    return TypeReport(True, canonical_context(synthesized), deriv)


# ---------------------------------------------------------------------------
# canonical processes

def _has_restriction(p: Process) -> bool:
    if isinstance(p, Res):
        return True
    if isinstance(p, Par):
        return _has_restriction(p.left) or _has_restriction(p.right)
    if isinstance(p, Cond):
        return _has_restriction(p.then_branch) or _has_restriction(p.else_branch)
    if isinstance(p, Def):
        return any(_has_restriction(d.body) for d in p.decls) \
            or _has_restriction(p.body)
    if isinstance(p, Choice):
        for s in p.summands:
            conts = [s.cont] if isinstance(s, PInput) else [r.cont for r in s.rows]
            if any(_has_restriction(c) for c in conts):
                return True
    return False


def _choice_channels(p: Process, acc):
    if isinstance(p, Choice):
        acc.add(p.chan)
        for s in p.summands:
            conts = [s.cont] if isinstance(s, PInput) else [r.cont for r in s.rows]
            for c in conts:
                _choice_channels(c, acc)
    elif isinstance(p, Par):
        _choice_channels(p.left, acc)
        _choice_channels(p.right, acc)
    elif isinstance(p, Cond):
        _choice_channels(p.then_branch, acc)
        _choice_channels(p.else_branch, acc)
    elif isinstance(p, Def):
        for d in p.decls:
            _choice_channels(d.body, acc)
        _choice_channels(p.body, acc)
    elif isinstance(p, Call):
        acc.update(p.chans)
    return acc


def canonical(p: Process, declared: LocalContext,
              env: GlobalEnv = None, budget: int = DEFAULT_BUDGET) -> Verdict:
    """Restriction-free, one parallel component per declared binding, each
    component using only its own channel and typed by exactly its binding."""
    from .core import EMPTY_ENV
    env = env or EMPTY_ENV
    if _has_restriction(p):
        return Verdict(False, "process contains a restriction")
    while isinstance(p, Def):
        for d in p.decls:
            env = env.with_proc(d.name, (tuple(t for _, t in d.params),
                                         tuple(t for _, t in d.chans)))
        p = p.body
    components: List[Process] = []

    def flatten(q):
        if isinstance(q, Par):
            flatten(q.left)
            flatten(q.right)
        elif not isinstance(q, Inact):
            components.append(q)

    flatten(p)
    from .core import erase_end
    bindings = list(erase_end(declared))  # an end binding is the empty context
    if len(components) != len(bindings):
        return Verdict(False,
                       f"{len(components)} components for {len(bindings)} bindings")
    by_chan = {c: t for c, t in bindings}
    seen = set()
    for comp in components:
        chans = _choice_channels(comp, set())
        if len(chans) != 1:
            return Verdict(False,
                           "component uses "
                           f"{len(chans)} channels: {sorted(map(str, chans))}")
        (ch,) = chans
        if ch not in by_chan:
            return Verdict(False, f"component channel {ch} is not declared")
        if ch in seen:
            return Verdict(False, f"two components use channel {ch}")
        seen.add(ch)
        report = check(env, comp, LocalContext([(ch, by_chan[ch])]), budget)
        if not report.verdict:
            return Verdict(False,
                           f"component on {ch} is not typed by its binding: "
                           + "; ".join(report.diagnostics))
    return Verdict(True)
