"""Small dense solves with conditioning checks."""
import numpy as np

from . import kernels
from .errors import DimensionError, SingularityError

#: reciprocal condition below which a solve is refused
RCOND_MIN = 1e-10


def solve_checked(A, B, what="linear system", rcond_min=RCOND_MIN):
    """Solve the square system ``A X = B`` or raise :class:`SingularityError`."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"{what}: matrix is {A.shape}, not square")
    X, rcond = kernels.solve_rcond(A, B)
    if X is None or rcond < rcond_min:
        raise SingularityError(
            f"{what} is singular or ill-conditioned (rcond={rcond:.3e})", rcond
        )
    return X


def structural_rows(A, rtol=1e-14):
    """Indices of rows of ``A`` that are not identically zero."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return np.arange(A.shape[0])
    scale = max(np.abs(A).max(), 1.0)
    return np.flatnonzero(np.abs(A).max(axis=1) > rtol * scale)


def solve_reduced(A, B, what="linear system", rcond_min=RCOND_MIN):
    """Drop identically-zero rows of ``A`` then solve the remaining square system.

    Rows of ``B`` that belong to dropped rows are ignored.
    """
    A = np.asarray(A, dtype=float)
    X, rcond, kept = kernels.solve_reduced_rcond(A, B, 1e-14)
    if kept != A.shape[1]:
        raise DimensionError(
            f"{what}: {kept} non-zero rows for {A.shape[1]} unknowns; "
            "the reduced system must be square"
        )
    if X is None or rcond < rcond_min:
        raise SingularityError(
            f"{what} is singular or ill-conditioned (rcond={rcond:.3e})", rcond
        )
    return X
