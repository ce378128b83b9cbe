"""Exception types raised by the solvers and the harness."""


class SparseCHError(Exception):
    """Base class for all package errors."""


class BasisMismatchError(SparseCHError, ValueError):
    """Operands live on different spectral bases or time grids."""


class MeanValueError(SparseCHError, ValueError):
    """Input to the inverse Neumann Laplacian has nonzero mean."""


class SolverError(SparseCHError, RuntimeError):
    """A time-marching solve failed.

    Parameters
    ----------
    message : str
        Human-readable reason.
    step : int, optional
        Index of the time step at which the failure was detected.
    """

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)


class BlowUpError(SolverError):
    """Non-finite or unbounded state detected during time marching."""


class ConfigError(SparseCHError, ValueError):
    """Configuration file could not be parsed or failed validation."""
