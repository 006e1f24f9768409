"""Normal and Student t distribution functions.

Thin, validated wrappers around `scipy.special` so that estimators can pass
fractional degrees of freedom and get typed errors on bad input.
"""

import math

from scipy import special

from design_late.errors import DomainError


def normal_quantile(p: float) -> float:
    """Inverse of the standard normal CDF.

    Returns -inf for p=0 and +inf for p=1.
    """
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"probability must be in [0, 1], got {p}")
    return float(special.ndtri(p))


def normal_cdf(z: float) -> float:
    """Standard normal CDF."""
    if math.isnan(z):
        raise DomainError("z must not be NaN")
    return float(special.ndtr(z))


def student_t_cdf(t: float, df: float) -> float:
    """Student t CDF for any positive (possibly fractional) df."""
    if not df > 0:
        raise DomainError(f"df must be positive, got {df}")
    return float(special.stdtr(df, t))


def student_t_quantile(p: float, df: float) -> float:
    """Inverse of `student_t_cdf` in its first argument."""
    if not df > 0:
        raise DomainError(f"df must be positive, got {df}")
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must be in (0, 1), got {p}")
    return float(special.stdtrit(df, p))
