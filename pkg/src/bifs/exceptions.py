"""Exception hierarchy shared by all bifs modules."""

__all__ = [
    "BIFSError",
    "DimensionError",
    "SymmetryError",
    "NumericalError",
    "DomainError",
    "ScalingError",
    "ParameterError",
    "EstimationError",
    "ConvergenceError",
    "FitError",
    "SamplingError",
    "ConfigError",
    "FormatError",
]


class BIFSError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(BIFSError, ValueError):
    pass


class SymmetryError(BIFSError, ValueError):
    pass


class NumericalError(BIFSError, ArithmeticError):
    pass


class DomainError(BIFSError, ValueError):
    pass


class ScalingError(BIFSError, ValueError):
    pass


class ParameterError(BIFSError, ValueError):
    pass


class EstimationError(BIFSError, ValueError):
    pass


class ConvergenceError(BIFSError, RuntimeError):
    """Iterative solver hit its iteration cap.

    ``best`` holds the last iterate so callers can inspect or fall back.
    """

    def __init__(self, message, best=None, location=None):
        super().__init__(message)
        self.best = best
        self.location = location


class FitError(BIFSError, RuntimeError):
    """Least-squares fit did not converge; ``params`` is the best-so-far fit."""

    def __init__(self, message, params=None):
        super().__init__(message)
        self.params = params


class SamplingError(BIFSError, ValueError):
    pass


class ConfigError(BIFSError, ValueError):
    """Bad experiment configuration; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class FormatError(BIFSError, ValueError):
    pass
