"""Exception types shared across the package."""


class FimMimoError(Exception):
    """Base class for package errors."""


class ConfigurationError(FimMimoError, ValueError):
    """Invalid configuration value. ``field`` names the offending entry when known."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class DimensionError(FimMimoError, ValueError):
    pass


class ContractViolation(FimMimoError, ValueError):
    pass


class NumericalError(FimMimoError, ArithmeticError):
    pass
