"""Exception types shared across the package."""


class BDSDEError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(BDSDEError, ValueError):
    """An input violates a documented precondition."""


class NumericFailureError(BDSDEError, ArithmeticError):
    """An iterative routine failed to reach its tolerance.

    Attributes
    ----------
    residual : float or None
        Last residual observed by the failing routine, when available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DataAssumptionError(BDSDEError, ValueError):
    """Problem data violate a standing hypothesis (e.g. ``phi(xi) = inf``)."""
