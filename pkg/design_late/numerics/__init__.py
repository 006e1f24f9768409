from .distributions import (
    normal_cdf,
    normal_quantile,
    student_t_cdf,
    student_t_quantile,
)
from .least_squares import DesignMatrix, solve_least_squares

__all__ = [
    "DesignMatrix",
    "normal_cdf",
    "normal_quantile",
    "solve_least_squares",
    "student_t_cdf",
    "student_t_quantile",
]
