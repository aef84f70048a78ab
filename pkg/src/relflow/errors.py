"""Exception types shared across the package."""


class RelflowError(Exception):
    """Base class for every error raised by relflow."""


class PointOutOfBounds(RelflowError, ValueError):
    """A coordinate lies outside the grid bounds."""


class EmptyOperand(RelflowError, ValueError):
    """An operation that needs a nonempty set received an empty one."""


class EvaluatorDomain(RelflowError, ValueError):
    """A model was queried at a time or box it does not accept."""


class NotABlock(RelflowError, ValueError):
    """The cell set is not an attractor block for the relation."""

    def __init__(self, message, witnesses=()):
        super().__init__(message)
        self.witnesses = list(witnesses)


class PreconditionViolation(RelflowError, ValueError):
    """Inputs violate a documented precondition."""


class BudgetExhausted(RelflowError):
    """An iterative search ran out of iterations without succeeding."""

    def __init__(self, message, candidate=None, witnesses=()):
        super().__init__(message)
        self.candidate = candidate
        self.witnesses = list(witnesses)


class SamplingInconsistency(RelflowError, AssertionError):
    """Sampled relations contradict a guarantee that must hold for them.

    Raised when a spot check past the certified time window fails, or when
    two computations that must agree do not.
    """


class ConfigError(RelflowError, ValueError):
    """Malformed or inconsistent experiment configuration."""

    def __init__(self, message, line=None, column=None, path=None):
        where = []
        if line is not None:
            where.append(f"line {line}, column {column}")
        if path:
            where.append(f"at {path}")
        super().__init__(f"{message} ({'; '.join(where)})" if where else message)
        self.line = line
        self.column = column
        self.path = path
