"""Exception hierarchy shared by the solvers and the CLI."""


class CapfbError(Exception):
    """Base class for every error raised by capfb."""


class DomainError(CapfbError, ValueError):
    """An argument is outside the domain an operation accepts."""


class ResourceError(CapfbError):
    """A dense enumeration would exceed its configured size cap."""


class UnsupportedClosedFormError(CapfbError):
    """No closed form is available for the requested parameters."""


class ConvergenceError(CapfbError):
    """An iterative solver stopped before meeting its tolerance.

    ``best`` holds the last (or best) iterate and ``residual`` the final
    stopping quantity (bracket width, span, ...), so callers can decide
    whether the partial answer is usable.
    """

    def __init__(self, message, best=None, residual=None, iterations=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.iterations = iterations


class ErgodicityError(CapfbError):
    """The induced output chain has no unique stationary distribution."""
