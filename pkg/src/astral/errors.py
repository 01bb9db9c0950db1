"""Exception types shared across the package."""


class AstralError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(AstralError, ValueError):
    """An argument is outside its documented range."""


class DataError(AstralError, ValueError):
    """Input data violates a storage invariant (shape, finiteness, sign)."""


class CoercivityError(AstralError, ValueError):
    """A diffusion coefficient is not positive definite where required."""


class FormatError(AstralError, ValueError):
    """A serialized dataset or checkpoint is malformed."""


class IterationError(AstralError, RuntimeError):
    """An iterative solver failed to reach its tolerance.

    Carries the final residual norm and the iteration count so callers can
    inspect partial results.
    """

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class TrainingError(AstralError, RuntimeError):
    """Training diverged (non-finite loss). Carries the trace so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
