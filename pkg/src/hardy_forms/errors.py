"""Exception types raised across the package."""


class RecurrentFormError(ValueError):
    """The form operator is singular: some connected component has no killing."""


class ConvergenceError(RuntimeError):
    """An iterative method stopped without meeting its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DivergenceError(ConvergenceError):
    """A fixed-point / Neumann series iteration is not contracting."""


class NotSubcriticalError(ValueError):
    """The shifted form E - mu is not positive definite."""


class MarginError(ValueError):
    """The improved-inequality operator is indefinite for the requested beta."""
