"""Exception types raised by the solvers and the command-line harness."""


class ChemoaggError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(ChemoaggError, ValueError):
    """A parameter set or configuration violates one or more invariants."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class InvalidDimensional(ValidationError):
    pass


class ParseError(ChemoaggError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class NonPositiveConcentration(ChemoaggError, ValueError):
    """Raised when ln(S) is requested for a field with S <= 0 somewhere."""


class CflViolation(ChemoaggError, ValueError):
    """The requested time step exceeds the explicit-stability bound."""

    def __init__(self, dt, bound, what=""):
        self.dt = dt
        self.bound = bound
        super().__init__(f"{what} time step {dt!r} exceeds stability bound {bound!r}".strip())


class ProbabilityOverflow(ChemoaggError, ValueError):
    """Tumble probability per step would reach 1."""


class SingularSystem(ChemoaggError, ArithmeticError):
    pass


class NegativeDensity(ChemoaggError, ArithmeticError):
    pass


class FieldBlowup(ChemoaggError, ArithmeticError):
    pass


class DomainTooSmall(ChemoaggError, ArithmeticError):
    """Mass reached the truncated edge of the internal-state axis."""


class InsufficientCoverage(ChemoaggError, ValueError):
    pass


class EmptySample(ChemoaggError, ValueError):
    pass
