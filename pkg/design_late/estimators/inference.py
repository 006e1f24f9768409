import math

from design_late.errors import DomainError
from design_late.models.results import Inference, Reference
from design_late.numerics import (
    normal_cdf,
    normal_quantile,
    student_t_cdf,
    student_t_quantile,
)


def infer(
    tau_late: float,
    variance: float,
    df: float,
    alpha: float = 0.05,
    reference: Reference = Reference.T,
) -> Inference:
    """Two-sided test of a zero effect and the symmetric confidence interval.

    Parameters
    ----------
    tau_late : float
        Point estimate.
    variance : float
        Its estimated variance.
    df : float
        Degrees of freedom, only used by the t reference.
    alpha : float
        1 - confidence level.
    reference : Reference
        t or z.

    Returns
    -------
    Inference
        Variance, standard error, interval, statistic and p-value.
    """
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must be in (0, 1), got {alpha}")
    if not variance >= 0:
        raise DomainError(f"variance must be nonnegative, got {variance}")

    if Reference(reference) == Reference.T:
        if not df > 0:
            raise DomainError(f"df must be positive for the t reference, got {df}")
        critical = student_t_quantile(1 - alpha / 2, df)

        def lower_tail(s):
            return student_t_cdf(-s, df)

    else:
        critical = normal_quantile(1 - alpha / 2)

        def lower_tail(s):
            return normal_cdf(-s)

    se = math.sqrt(variance)
    if se > 0:
        t_stat = tau_late / se
    elif tau_late == 0:
        t_stat = 0.0
    else:
        t_stat = math.copysign(math.inf, tau_late)

    return Inference(
        variance=variance,
        se=se,
        ci_lower=tau_late - critical * se,
        ci_upper=tau_late + critical * se,
        t_stat=t_stat,
        p_value=min(1.0, 2 * lower_tail(abs(t_stat))),
    )
