"""Exception hierarchy shared by all modules."""


class HybridUQError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(HybridUQError, ValueError):
    """An argument lies outside its mathematical domain."""


class DimensionError(HybridUQError, ValueError):
    """Array shapes or grid sizes are incompatible."""


class DomainError(HybridUQError, ValueError):
    """A point or value lies outside the admissible domain."""


class StateError(HybridUQError, RuntimeError):
    """An object is used before it has been prepared (e.g. unfactorized)."""


class SingularCovarianceError(HybridUQError, ArithmeticError):
    """Cholesky factorization failed even at the largest jitter."""

    def __init__(self, message, jitter=None):
        super().__init__(message)
        self.jitter = jitter


class SolverError(HybridUQError, ArithmeticError):
    """The finite element system could not be solved."""


class ComputationError(HybridUQError, ArithmeticError):
    """A numerical computation produced a non-finite or invalid result."""


class ParseError(HybridUQError, ValueError):
    """Malformed input data."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DataError(HybridUQError, ValueError):
    """Input data violates a structural requirement."""


class FitError(HybridUQError, RuntimeError):
    """Maximum likelihood fitting failed."""


class ExperimentError(HybridUQError, RuntimeError):
    """An experiment could not produce a meaningful result."""


class ConfigError(HybridUQError, ValueError):
    """Invalid experiment configuration."""
