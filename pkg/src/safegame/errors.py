"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Inconsistent dimensions, parameters, or config files."""


class DomainError(ValueError):
    """A state was evaluated outside the safe set where the quantity is defined."""


class NumericError(ArithmeticError):
    """Singular weights, overflow, or non-finite values."""


class UnsupportedOperation(RuntimeError):
    pass


class SafetyViolation(RuntimeError):
    """Raised when a simulated trajectory crosses the boundary guard.

    The partial trajectory up to the offending step is attached.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory
