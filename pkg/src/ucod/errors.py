"""Exception types shared across the package."""


class UcodError(Exception):
    """Base class for all package errors."""


class ConfigError(UcodError, ValueError):
    """Bad or unknown configuration value."""


class InputError(UcodError, ValueError):
    """Input data violates a documented precondition."""


class TrainingError(UcodError, RuntimeError):
    """Training diverged or produced a non-finite loss."""
