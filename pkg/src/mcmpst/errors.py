"""Exception types shared across the toolkit."""


class McmpstError(Exception):
    """Base class for all toolkit errors."""


class ParseError(McmpstError):
    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"{line}:{col}: {message}"
        super().__init__(message)


class LinearityViolation(McmpstError):
    """Two channels of one session share a role."""


class IllFormedType(McmpstError):
    """A type violates well-formedness where the operation requires it."""


class NotRecursive(McmpstError):
    """unfold applied to a non-recursive type."""


class UnboundActiveChannel(McmpstError):
    """Active channel not bound in its context."""


class StateBudgetExceeded(McmpstError):
    """Context reachability exceeded the state cap."""


class SearchBudgetExceeded(McmpstError):
    """Subtyping search ran out of budget; result is inconclusive, not refuted."""


class BudgetExceeded(McmpstError):
    """Exploration exceeded its budget."""


class TypingError(McmpstError):
    """A hard error raised while synthesising a typing context."""


class NotSafe(McmpstError):
    """Interface synthesis requires a safe context."""


class ValidationFailed(McmpstError):
    """A synthesised interface was rejected by the subtyping prover."""

    def __init__(self, message, context=None, candidate=None):
        super().__init__(message)
        self.context = context
        self.candidate = candidate


class Unsupported(McmpstError):
    """Input is outside the supported fragment."""
