"""Exception types shared across the package."""


class ExtremaxError(Exception):
    """Base class for all package errors."""


class DomainError(ExtremaxError, ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateIntervalError(DomainError):
    """An interval carries zero probability where positive mass is needed."""


class SizeError(DomainError):
    """The requested instance is too large to enumerate or tabulate."""


class ProtocolViolationError(ExtremaxError):
    """An interactive protocol step that cannot legally happen."""


class ConvergenceError(ExtremaxError, RuntimeError):
    """An iterative solver stopped before meeting its tolerance.

    The best iterate seen so far is kept on ``best`` so callers can still
    inspect or use it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
