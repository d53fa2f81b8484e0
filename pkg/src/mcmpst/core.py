"""Abstract syntax shared by every other module.

Session types, processes, channels, local contexts and global environments
are immutable; exact probabilities are `fractions.Fraction` throughout.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Iterator, Optional, Sequence, Tuple, Union

from .errors import LinearityViolation, McmpstError


# ---------------------------------------------------------------------------
# rationals

def rational_from_decimal(text: str) -> Fraction:
    """Parse a probability/number literal: decimal ("0.35"), int or "a/b"."""
    text = text.strip()
    if re.fullmatch(r"\d+/\d+", text):
        num, den = text.split("/")
        if int(den) == 0:
            raise McmpstError(f"zero denominator in {text!r}")
        return Fraction(int(num), int(den))
    if re.fullmatch(r"\d+(\.\d+)?", text):
        return Fraction(text)
    raise McmpstError(f"malformed rational literal {text!r}")


def rational_str(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}" if q.denominator != 1 else str(q.numerator)


def check_probability(q: Fraction) -> Fraction:
    if not (0 < q <= 1):
        raise McmpstError(f"probability {rational_str(q)} outside (0,1]")
    return q


# ---------------------------------------------------------------------------
# base types and values

class BaseType(Enum):
    NAT = "nat"
    BOOL = "bool"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class VarV:
    name: str


@dataclass(frozen=True)
class NatV:
    value: int

    def __post_init__(self):
        if self.value < 1:
            raise McmpstError("naturals start at 1")


@dataclass(frozen=True)
class BoolV:
    value: bool


Value = Union[VarV, NatV, BoolV]


# ---------------------------------------------------------------------------
# channels

@dataclass(frozen=True)
class Channel:
    session: str
    roles: frozenset

    def __post_init__(self):
        if not self.roles:
            raise McmpstError("channel role set must be non-empty")

    def sort_key(self):
        return (self.session, tuple(sorted(self.roles)))

    def __str__(self):
        if len(self.roles) == 1:
            return f"{self.session}[{next(iter(self.roles))}]"
        return f"{self.session}[{{{','.join(sorted(self.roles))}}}]"


def chan(session: str, *roles: str) -> Channel:
    return Channel(session, frozenset(roles))


# ---------------------------------------------------------------------------
# session types

@dataclass(frozen=True)
class End:
    pass


@dataclass(frozen=True)
class TypeVar:
    name: str


@dataclass(frozen=True)
class Rec:
    name: str
    body: "SessionType"


@dataclass(frozen=True)
class OutH:
    """Output head: sender -> receiver ! label(payload)."""
    sender: str
    receiver: str
    label: str
    payload: Optional[BaseType] = None


@dataclass(frozen=True)
class TauH:
    pass


Head = Union[OutH, TauH]


@dataclass(frozen=True)
class Summand:
    prob: Fraction
    head: Head
    cont: "SessionType"


@dataclass(frozen=True)
class ProbSum:
    summands: Tuple[Summand, ...]

    def __post_init__(self):
        if not self.summands:
            raise McmpstError("probabilistic choice must be non-empty")


@dataclass(frozen=True)
class InputT:
    """Input branch: receiver <- sender ? label(payload) . cont."""
    receiver: str
    sender: str
    label: str
    payload: Optional[BaseType]
    cont: "SessionType"


Branch = Union[InputT, ProbSum]


@dataclass(frozen=True)
class Mixed:
    branches: Tuple[Branch, ...]

    def __post_init__(self):
        if not self.branches:
            raise McmpstError("mixed choice must be non-empty")


@dataclass(frozen=True)
class HeadCont:
    """Bare head `H.T`: arises mid-derivation only, never well-formed."""
    head: Head
    cont: "SessionType"


SessionType = Union[End, TypeVar, Rec, Mixed, HeadCont]

END = End()
TAU = TauH()


def mixed(*branches: Branch) -> Mixed:
    return Mixed(tuple(branches))


def psum(*rows: Tuple) -> ProbSum:
    return ProbSum(tuple(Summand(Fraction(p), h, c) for (p, h, c) in rows))


# ---------------------------------------------------------------------------
# processes

@dataclass(frozen=True)
class Inact:
    pass


@dataclass(frozen=True)
class Par:
    left: "Process"
    right: "Process"


@dataclass(frozen=True)
class Res:
    session: str
    body: "Process"


@dataclass(frozen=True)
class Cond:
    cond: Value
    then_branch: "Process"
    else_branch: "Process"


@dataclass(frozen=True)
class SendA:
    sender: str
    receiver: str
    label: str
    payload: Optional[Value] = None


@dataclass(frozen=True)
class TauA:
    pass


PAction = Union[SendA, TauA]


@dataclass(frozen=True)
class PRow:
    prob: Fraction
    action: PAction
    cont: "Process"


@dataclass(frozen=True)
class POut:
    rows: Tuple[PRow, ...]

    def __post_init__(self):
        if not self.rows:
            raise McmpstError("probabilistic choice must be non-empty")


@dataclass(frozen=True)
class PInput:
    receiver: str
    sender: str
    label: str
    binder: Optional[str]
    cont: "Process"


PSummand = Union[PInput, POut]


@dataclass(frozen=True)
class Choice:
    chan: Channel
    summands: Tuple[PSummand, ...]

    def __post_init__(self):
        if not self.summands:
            raise McmpstError("mixed choice must be non-empty")


@dataclass(frozen=True)
class Decl:
    name: str
    params: Tuple[Tuple[str, BaseType], ...]
    chans: Tuple[Tuple[Channel, "SessionType"], ...]
    body: "Process"


@dataclass(frozen=True)
class Def:
    decls: Tuple[Decl, ...]
    body: "Process"


@dataclass(frozen=True)
class Call:
    name: str
    args: Tuple[Value, ...]
    chans: Tuple[Channel, ...]


Process = Union[Inact, Par, Res, Cond, Def, Call, Choice]

INACT = Inact()


# ---------------------------------------------------------------------------
# local contexts

class LocalContext:
    """Linear map from channels to session types.

    Linearity: within one session the role sets of distinct bound channels
    are pairwise disjoint. End bindings are representable; `erase_end`
    normalises them away.
    """

    __slots__ = ("_bindings", "_hash")

    def __init__(self, bindings: Iterable[Tuple[Channel, SessionType]] = ()):
        items = tuple(bindings)
        seen = {}
        for ch, _ in items:
            for other in seen.get(ch.session, []):
                overlap = ch.roles & other.roles
                if overlap:
                    raise LinearityViolation(
                        f"session {ch.session}: roles {sorted(overlap)} bound twice"
                    )
            seen.setdefault(ch.session, []).append(ch)
        self._bindings = items
        self._hash = None

    @property
    def bindings(self) -> Tuple[Tuple[Channel, SessionType], ...]:
        return self._bindings

    def __iter__(self) -> Iterator[Tuple[Channel, SessionType]]:
        return iter(self._bindings)

    def __len__(self):
        return len(self._bindings)

    def __bool__(self):
        return bool(self._bindings)

    def __eq__(self, other):
        return isinstance(other, LocalContext) and self._bindings == other._bindings

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self._bindings)
        return self._hash

    def __repr__(self):
        inner = ", ".join(f"{ch}:{ty!r}" for ch, ty in self._bindings)
        return f"LocalContext({inner})"

    def get(self, ch: Channel) -> Optional[SessionType]:
        for c, t in self._bindings:
            if c == ch:
                return t
        return None

    def contains(self, ch: Channel) -> bool:
        return self.get(ch) is not None

    def has_role(self, session: str, role: str) -> bool:
        """The paper's `p in Delta` membership test."""
        return any(c.session == session and role in c.roles for c, _ in self._bindings)

    def channel_of_role(self, session: str, role: str) -> Optional[Channel]:
        for c, _ in self._bindings:
            if c.session == session and role in c.roles:
                return c
        return None

    def set(self, ch: Channel, ty: SessionType) -> "LocalContext":
        out, found = [], False
        for c, t in self._bindings:
            if c == ch:
                out.append((c, ty))
                found = True
            else:
                out.append((c, t))
        if not found:
            out.append((ch, ty))
        return LocalContext(out)

    def without(self, ch: Channel) -> "LocalContext":
        return LocalContext((c, t) for c, t in self._bindings if c != ch)

    def sessions(self):
        return {c.session for c, _ in self._bindings}


EMPTY_CONTEXT = LocalContext()


def compose_contexts(d1: LocalContext, d2: LocalContext) -> LocalContext:
    """Linear composition; raises LinearityViolation on overlapping roles."""
    return LocalContext(tuple(d1) + tuple(d2))


def erase_end(d: LocalContext) -> LocalContext:
    return LocalContext((c, t) for c, t in d if not isinstance(t, End))


# ---------------------------------------------------------------------------
# contexts with an active channel

@dataclass(frozen=True)
class Plain:
    ctx: LocalContext


@dataclass(frozen=True)
class Active:
    chan: Channel
    ctx: LocalContext


ActiveContext = Union[Plain, Active]


# ---------------------------------------------------------------------------
# global environments

class GlobalEnv:
    """Variable and process-variable assignments (immutable)."""

    __slots__ = ("_vars", "_procs")

    def __init__(self, vars=None, procs=None):
        self._vars = dict(vars or {})
        self._procs = dict(procs or {})

    def with_var(self, name: str, ty: BaseType) -> "GlobalEnv":
        new = dict(self._vars)
        new[name] = ty
        return GlobalEnv(new, self._procs)

    def with_proc(self, name: str, sig) -> "GlobalEnv":
        new = dict(self._procs)
        new[name] = sig
        return GlobalEnv(self._vars, new)

    def var(self, name: str) -> Optional[BaseType]:
        return self._vars.get(name)

    def proc(self, name: str):
        return self._procs.get(name)


EMPTY_ENV = GlobalEnv()


def value_type(env: GlobalEnv, v: Value) -> Optional[BaseType]:
    """[Nat]/[Bool]/[Base]: the base type of a value, None if untypable."""
    if isinstance(v, NatV):
        return BaseType.NAT
    if isinstance(v, BoolV):
        return BaseType.BOOL
    return env.var(v.name)
