"""Exception hierarchy shared by every module."""


class MHDLabError(Exception):
    """Base class for all errors raised by mhdlab."""


class ConfigurationError(MHDLabError, ValueError):
    """Invalid grid, shape mismatch, or malformed experiment configuration."""

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key


class ContractError(MHDLabError, ValueError):
    """A precondition of an operation was violated by its arguments."""


class DivergenceError(MHDLabError, RuntimeError):
    """Non-finite values or a CFL violation during time integration.

    ``state`` carries the last valid state so that a failed run can be
    inspected or written out as a snapshot.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state
