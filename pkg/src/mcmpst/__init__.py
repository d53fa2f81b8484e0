"""Verification toolkit for a probabilistic mixed-choice multiparty session
pi-calculus: parsing, safety and deadlock-freedom of typing contexts, three
subtyping relations with checkable certificates, type checking, probabilistic
reduction, and single-channel interface synthesis."""

from .core import (
    Active, BaseType, BoolV, Call, Channel, Choice, Cond, Decl, Def, End,
    GlobalEnv, HeadCont, Inact, InputT, LocalContext, Mixed, NatV, OutH, Par,
    PInput, POut, PRow, Plain, ProbSum, Rec, Res, SendA, Summand, TauA, TauH,
    TypeVar, VarV, chan, compose_contexts, erase_end, rational_from_decimal,
    rational_str, EMPTY_CONTEXT, EMPTY_ENV,
)
from .ctxlts import CtxGraph, Verdict, dfree, pending, reach, safe, step, step_active
from .errors import (
    BudgetExceeded, IllFormedType, LinearityViolation, McmpstError,
    NotRecursive, NotSafe, ParseError, SearchBudgetExceeded,
    StateBudgetExceeded, TypingError, Unsupported, ValidationFailed,
)
from .interface import hide_internal, synthesize_interface
from .reduction import (
    Outcome, Redex, Trace, canonical_process, enabled, explore, is_error,
    normalize, simulate,
)
from .subtype import (
    Derivation, Goal, TGoal, check_derivation, format_derivation, sub_multi,
    sub_single, sub_standard, validate_derivation,
)
from .surface import (
    ProtocolFile, parse_context, parse_file, parse_process, parse_type, pretty,
)
from .typecheck import TypeReport, canonical, check, synth
from .typemeta import (
    InPfx, OutPfx, Prefix, TauPfx, canonical_context, canonical_type,
    merge_similar, pre, types_equal, unfold, well_formed,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
