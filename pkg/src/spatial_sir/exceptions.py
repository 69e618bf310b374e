"""Exception and warning types shared across the package."""


class InvalidArgumentError(ValueError):
    pass


class IntegrationError(RuntimeError):
    """Raised when the moment ODE solver cannot make progress.

    The ``time`` attribute holds the last time reached.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class UnsupportedFormatError(ValueError):
    pass


class UndefinedStatisticError(ValueError):
    pass


class CholeskyError(RuntimeError):
    pass


class OutOfDesignWarning(UserWarning):
    """A query point lies outside the box spanned by the emulator design."""
