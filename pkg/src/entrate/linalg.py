"""Small dense linear algebra helpers with explicit pivot checks.

All systems in entrate are q x q with q rarely above a dozen, so partial-pivoting
LU from LAPACK is used directly and the smallest pivot is inspected to decide
whether a matrix is singular to working tolerance.
"""

import warnings

import numpy as np
import numpy.typing as npt
import scipy.linalg

from .errors import NumericalError, SingularSystem

FloatArray = npt.NDArray[np.float64]

PIVOT_TOL = 1e-12


def min_pivot(matrix: FloatArray) -> float:
    """Return the smallest absolute pivot of the partial-pivoting LU of ``matrix``."""
    with warnings.catch_warnings():
        # Exactly singular inputs are reported through the pivot value
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, _ = scipy.linalg.lu_factor(matrix, check_finite=True)
    return float(np.min(np.abs(np.diag(lu))))


def solve_checked(
    matrix: FloatArray,
    rhs: FloatArray,
    pivot_tol: float = PIVOT_TOL,
    error: type[NumericalError] = SingularSystem,
) -> FloatArray:
    """Solve ``matrix @ x = rhs`` by pivoted elimination, rejecting tiny pivots.

    Args:
        matrix: Square coefficient matrix.
        rhs: Right-hand side vector or matrix.
        pivot_tol: Smallest admissible absolute pivot.
        error: Exception class raised when a pivot falls below ``pivot_tol``.

    Returns:
        Solution with the same trailing shape as ``rhs``.

    Raises:
        NumericalError: The subclass given by ``error`` when the matrix is
            singular to tolerance.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(matrix, check_finite=True)
    pivot = float(np.min(np.abs(np.diag(lu))))
    if pivot < pivot_tol:
        raise error(f"pivot {pivot:.3e} below tolerance {pivot_tol:.0e}")
    solution: FloatArray = scipy.linalg.lu_solve((lu, piv), rhs)
    return solution
