"""Exception hierarchy shared across the laboratory."""


class PspecError(Exception):
    """Base class for all errors raised by this package."""


class SymbolSyntaxError(PspecError):
    """Raised when an expression string cannot be parsed.

    Carries the character position of the offending token.
    """

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class VariableIndexError(PspecError):
    """Raised when a variable index lies outside [1, n]."""


class JetDivisionError(PspecError):
    """Raised when a division node has a (numerically) vanishing
    constant term in its denominator jet."""


class NonFiniteError(PspecError):
    """Raised when an evaluation overflows to inf/nan."""


class NotPolynomialError(PspecError):
    """Raised when a polynomial-only path receives a genuinely
    non-polynomial expression."""


class DegenerateValueError(PspecError):
    """Raised when a level-set root carries a vanishing bracket, so a
    sign cannot be assigned."""


class ContourError(PspecError):
    """Raised when a winding-number contour passes through a zero or
    the arc refinement does not converge."""


class GridResolutionError(PspecError):
    """Raised when a discretization window or resolution cannot
    represent the requested object (dual-window too small, beam
    under-resolved, FBI window leakage)."""


class ConvergenceError(PspecError):
    """Raised when an iterative method fails to converge."""


class DynamicalConditionViolated(PspecError):
    """Raised when some Hamilton trajectory stays inside the
    characteristic set for the whole time horizon."""

    def __init__(self, message, stuck_points=None):
        super().__init__(message)
        self.stuck_points = list(stuck_points) if stuck_points is not None else []


class EscapeConstructionError(PspecError):
    """Raised when the assembled weight fails the positivity check."""


class ConditioningError(PspecError):
    """Raised when a conjugation weight is too strong for the basis
    (cond(E) beyond the configured cap)."""


class ConfigError(PspecError):
    """Raised on malformed experiment configuration (CLI exit code 2)."""
