"""Exception types raised across the package."""


class SaddleflowError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(SaddleflowError, ValueError):
    pass


class InvalidSize(SaddleflowError, ValueError):
    pass


class UnsupportedTerm(SaddleflowError, TypeError):
    pass


class NotC11(SaddleflowError, ValueError):
    """A term without a locally Lipschitz gradient was passed to Hessian machinery."""


class MissingReference(SaddleflowError, ValueError):
    pass


NoReference = MissingReference


class NonFiniteState(SaddleflowError, FloatingPointError):
    pass


class DegenerateCone(SaddleflowError, ValueError):
    """An active constraint gradient is numerically zero."""


class InfeasibleStart(SaddleflowError, ValueError):
    pass


class NotPositiveDefinite(SaddleflowError, ValueError):
    pass


class InequalityPresent(SaddleflowError, ValueError):
    pass


class IncompatibleTopology(SaddleflowError, ValueError):
    pass


class UncoveredRow(SaddleflowError, ValueError):
    pass


class LocalityViolation(SaddleflowError, RuntimeError):
    """An agent read data outside its view."""


class ConfigError(SaddleflowError, ValueError):
    """Problem file or scenario configuration is invalid."""
