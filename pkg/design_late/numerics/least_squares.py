from typing import Optional

import numpy as np
import numpy.typing as npt
import scipy.linalg as la

from design_late.errors import DomainError, RankDeficient

DesignMatrix = npt.NDArray[np.float64]
"""n×k matrix of regressors, rows are observations."""

RANK_TOLERANCE = 1e-10


def solve_least_squares(
    design: DesignMatrix,
    response: npt.ArrayLike,
    weights: Optional[npt.ArrayLike] = None,
) -> np.ndarray:
    """Least-squares coefficients through the normal equations.

    The columns are equilibrated to unit norm before the Cholesky
    factorization, so the rank test does not depend on the units the
    covariates are measured in.

    Parameters
    ----------
    design : DesignMatrix
        n×k matrix with n >= k >= 1 and finite entries.
    response : array_like
        n values.
    weights : array_like, optional
        n positive weights. When given, the weighted residual sum of squares
        is minimized.

    Returns
    -------
    np.ndarray
        k coefficients.

    Raises
    ------
    RankDeficient
        If the smallest pivot of the normal equations is not above
        `RANK_TOLERANCE` times the largest one.
    DomainError
        If the shapes do not match or entries are not finite.
    """
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    if design.ndim != 2:
        raise DomainError("design must be a 2-d matrix")
    n, k = design.shape
    if k < 1 or n < k:
        raise DomainError(f"design must satisfy n >= k >= 1, got n={n}, k={k}")
    if response.shape != (n,):
        raise DomainError(f"response must have {n} values, got {response.shape}")
    if not (np.isfinite(design).all() and np.isfinite(response).all()):
        raise DomainError("design and response must be finite")

    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (n,) or not (weights > 0).all():
            raise DomainError("weights must be n positive values")
        root = np.sqrt(weights)
        design = design * root[:, None]
        response = response * root

    scale = np.sqrt(np.einsum("ij,ij->j", design, design))
    if not (scale > 0).all():
        raise RankDeficient("design has an all-zero column")
    scaled = design / scale

    gram = scaled.T @ scaled
    try:
        factor, lower = la.cho_factor(gram, lower=True, check_finite=False)
    except la.LinAlgError as e:
        raise RankDeficient("normal equations are not positive definite") from e

    pivots = np.diag(factor) ** 2
    if pivots.min() <= RANK_TOLERANCE * pivots.max():
        raise RankDeficient(
            "design is rank deficient (collinear covariates or a constant "
            "treatment column)"
        )

    coefficients = la.cho_solve(
        (factor, lower), scaled.T @ response, check_finite=False
    )
    return coefficients / scale
