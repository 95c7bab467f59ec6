"""Exception types raised by podgp."""


class PodGpError(Exception):
    """Base class for all podgp errors."""


class ShapeError(PodGpError, ValueError):
    """Array dimensions are inconsistent with what an operation expects."""


class DataError(PodGpError, ValueError):
    """Input data is malformed: non-finite values, ragged rows, bad headers."""


class DegenerateInputError(PodGpError, ValueError):
    """Input has no information to work with (all-zero snapshots, zero-width samples)."""


class InsufficientDataError(PodGpError, ValueError):
    pass


class DomainError(PodGpError, ValueError):
    """An argument lies outside the domain on which a function is defined."""


class ConfigError(PodGpError, ValueError):
    pass


class UnsupportedDimensionError(PodGpError, ValueError):
    pass


class ConditioningError(PodGpError, ArithmeticError):
    """Kernel matrix stayed non positive definite after jitter escalation."""


class FitError(PodGpError, RuntimeError):
    """Every optimizer restart failed.

    ``diagnostics`` holds one message per failed restart.
    """

    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


class ModelFormatError(PodGpError, ValueError):
    """A model file is truncated, corrupt, or not a podgp model."""


class UnsupportedVersionError(ModelFormatError):
    pass


class ExtrapolationWarning(UserWarning):
    """Prediction requested outside the parameter-space box."""
