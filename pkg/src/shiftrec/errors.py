"""Exception hierarchy shared by every shiftrec module."""


class ShiftrecError(Exception):
    """Base class for all errors raised by shiftrec."""


class InvalidOrderError(ShiftrecError, ValueError):
    """Subtensor order k outside ``1 <= k < d``."""


class CoordinateError(ShiftrecError, IndexError):
    """Coordinate out of bounds or of the wrong dimensionality."""


class ConformanceError(ShiftrecError, ValueError):
    """Shift vector length does not match the subtensor catalog."""


class DomainError(ShiftrecError, ValueError):
    """Input violates a value-domain precondition (e.g. non-positive entry for UC)."""


class PatternError(ShiftrecError, ValueError):
    """A consensus pattern does not satisfy its own preconditions."""


class ConvergenceError(ShiftrecError, RuntimeError):
    """Canonical shifting did not reach the threshold within the sweep cap."""

    def __init__(self, sweeps, last_variance, epsilon):
        self.sweeps = sweeps
        self.last_variance = last_variance
        self.epsilon = epsilon
        super().__init__(
            f"canonical shifting did not converge after {sweeps} sweeps "
            f"(last sweep variance {last_variance:.3e} >= epsilon {epsilon:.3e})"
        )


class ParseError(ShiftrecError, ValueError):
    """Malformed input file; carries the offending line number and field."""

    def __init__(self, message, *, path=None, line=None, field=None):
        self.path = path
        self.line = line
        self.field = field
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
