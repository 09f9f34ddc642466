"""Exception types shared across the package."""


class SingularDesignError(ValueError):
    """Raised when a design (or restricted design) is numerically rank deficient."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative solve exhausts its budget.

    Carries the last iterate and its fixed-point residual for diagnosis.
    """

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class NondifferentiableError(ValueError):
    """Raised when a gradient is requested at a nondifferentiable point."""
