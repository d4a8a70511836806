"""Exception types shared across the package.

The CLI maps :class:`ValidationError` to exit code 1 and
:class:`ConvergenceError` to exit code 2.
"""


class MemtrapError(Exception):
    pass


class ValidationError(MemtrapError, ValueError):
    """Invalid input: a violated invariant, bad config key, bad file."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class ConvergenceError(MemtrapError, RuntimeError):
    """An iterative solver diverged or hit its iteration cap."""


class NoGuidedModeError(ConvergenceError):
    pass


class NoTrapError(MemtrapError):
    """The combined potential has no trapping minimum above the surface."""
