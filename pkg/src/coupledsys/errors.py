"""Exception types shared across the package."""
import numpy as np


class DimensionError(ValueError):
    """A map returned, or was given, an array of the wrong shape."""


class SingularityError(np.linalg.LinAlgError):
    """A linear solve was singular or too ill-conditioned to trust.

    ``rcond`` is the reciprocal 1-norm condition estimate (0 when exactly
    singular); ``time`` is set when raised from inside an integration.
    """

    def __init__(self, message, rcond=0.0, time=None):
        super().__init__(message)
        self.rcond = rcond
        self.time = time

    def at_time(self, t):
        err = SingularityError(f"{self.args[0]} (at t={t:.6g} s)", self.rcond, t)
        return err


class ConvergenceError(RuntimeError):
    """An iterative solve did not converge."""
