"""Exception types shared across the package."""


class LowSensError(Exception):
    """Base class for package errors."""


class ConfigError(LowSensError, ValueError):
    """Invalid parameters or configuration."""


class CapacityError(LowSensError, ValueError):
    """Requested size exceeds the exact-computation guard."""


class NumericError(LowSensError, ArithmeticError):
    """A non-finite value showed up during a computation."""
