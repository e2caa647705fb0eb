"""Exception hierarchy shared by all modules."""


class OptimalTimingError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(OptimalTimingError, ValueError):
    pass


class NumericalDegeneracyError(OptimalTimingError, ArithmeticError):
    """A regression or estimator hit a singular / zero-variance design."""


class NumericalError(OptimalTimingError, ArithmeticError):
    """A non-finite value appeared in a forward or backward pass."""


class ParseError(OptimalTimingError, ValueError):
    """Malformed input file. ``line`` is 1-based and counts the header."""

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class TrainingDivergedError(OptimalTimingError, ArithmeticError):
    """Training loss became non-finite. The trace up to that point is kept."""

    def __init__(self, message, loss_trace):
        self.loss_trace = list(loss_trace)
        super().__init__(message)


class OracleLimitError(OptimalTimingError, ValueError):
    """Exhaustive enumeration was requested beyond its supported horizon."""
