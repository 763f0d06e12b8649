"""Shared exception types."""


class NonConvergenceError(RuntimeError):
    """An iterative solve exhausted its budget.

    Carries the best iterate found so callers can inspect or restart.
    """

    def __init__(self, message, best_x=None, residual=None):
        super().__init__(message)
        self.best_x = best_x
        self.residual = residual


class CapabilityError(TypeError):
    """A target lacks a derivative capability required by the caller."""
