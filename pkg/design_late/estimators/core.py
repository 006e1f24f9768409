"""LATE estimation for completely randomized (non-blocked, non-clustered) trials.

The LATE is the ratio of two covariate-adjusted ITT effects, one on the
outcome and one on treatment receipt, fitted with the same covariates. Its
design-based variance comes from the linearized residuals of both fits.
"""

import logging
import math
from collections.abc import Sequence
from typing import NamedTuple, Optional

import numpy as np
import numpy.typing as npt

from design_late.errors import (
    DegenerateArm,
    DomainError,
    InsufficientDf,
    ZeroComplianceEffect,
)
from design_late.models.dataset import Dataset
from design_late.models.results import (
    ArmComponents,
    LateResult,
    Reference,
    VarianceComponents,
    VarianceMethod,
    WarningLabel,
)
from design_late.numerics import solve_least_squares

from .inference import infer

COMPLIANCE_TOLERANCE = 1e-12
WEAK_INSTRUMENT_F = 16.0

DEFAULT_METHODS = (VarianceMethod.DB, VarianceMethod.DB_BOUNDED, VarianceMethod.IV)


class IttFit(NamedTuple):
    """Covariate-adjusted ITT fit of one response.

    Attributes
    ----------
    effect : float
        Estimated ITT effect.
    intercept : float
        Intercept of the model with centered regressors.
    covariate_coefs : np.ndarray
        V covariate coefficients.
    group_residuals : tuple[np.ndarray, np.ndarray]
        Treated and control residuals of the group-centered response on the
        group-centered covariates, in data order within each arm.
    arm_sizes : tuple[int, int]
        Treated and control counts.
    """

    effect: float
    intercept: float
    covariate_coefs: np.ndarray
    group_residuals: tuple[np.ndarray, np.ndarray]
    arm_sizes: tuple[int, int]

    @property
    def n(self) -> int:
        return self.arm_sizes[0] + self.arm_sizes[1]


class LateEstimate(NamedTuple):
    """Point estimates of the LATE and the fits they come from."""

    tau_itt: float
    pi_itt: float
    tau_late: float
    fit_y: IttFit
    fit_d: IttFit
    warnings: list[WarningLabel]


def _as_matrix(x: Optional[npt.ArrayLike], n: int) -> np.ndarray:
    if x is None:
        return np.empty((n, 0))
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def _center(values: np.ndarray, weights: Optional[np.ndarray]) -> np.ndarray:
    if weights is None:
        return values - values.mean(axis=0)
    return values - np.average(values, axis=0, weights=weights)


def fit_itt(
    response: npt.ArrayLike,
    t: npt.ArrayLike,
    x: Optional[npt.ArrayLike] = None,
    weights: Optional[npt.ArrayLike] = None,
) -> IttFit:
    """Fits the response on (1, T - n1/n, x - mean(x)) by least squares.

    With `weights` the fit is weighted least squares, the centering uses
    weighted means and each group residual is scaled by its weight over the
    mean weight of its arm.

    Parameters
    ----------
    response : array_like
        Outcomes or receipt indicators (cluster means when weighted).
    t : array_like
        0/1 assignment.
    x : array_like, optional
        n×V covariates.
    weights : array_like, optional
        Positive observation weights.

    Returns
    -------
    IttFit
        The fit.

    Raises
    ------
    DegenerateArm
        If all units share one assignment.
    RankDeficient
        If the centered covariates are collinear.
    """
    response = np.asarray(response, dtype=float)
    t = np.asarray(t, dtype=float)
    n = len(response)
    x = _as_matrix(x, n)
    if weights is not None:
        weights = np.asarray(weights, dtype=float)

    treated = t == 1
    n1 = int(treated.sum())
    n0 = n - n1
    if n1 == 0 or n0 == 0:
        raise DegenerateArm(f"both arms must be nonempty, got {n1} treated of {n}")

    design = np.column_stack([np.ones(n), _center(t, weights), _center(x, weights)])
    coefficients = solve_least_squares(design, response, weights)
    coefs = coefficients[2:]

    residuals = []
    for arm in (treated, ~treated):
        arm_weights = None if weights is None else weights[arm]
        residual = (
            _center(response[arm], arm_weights)
            - _center(x[arm], arm_weights) @ coefs
        )
        if arm_weights is not None:
            residual = residual * arm_weights / arm_weights.mean()
        residuals.append(residual)

    return IttFit(
        effect=float(coefficients[1]),
        intercept=float(coefficients[0]),
        covariate_coefs=coefs,
        group_residuals=(residuals[0], residuals[1]),
        arm_sizes=(n1, n0),
    )


def late_from_fits(fit_y: IttFit, fit_d: IttFit) -> LateEstimate:
    """Ratio of the outcome ITT effect to the receipt ITT effect.

    Raises
    ------
    ZeroComplianceEffect
        If the receipt effect is within `COMPLIANCE_TOLERANCE` of zero.
    """
    pi_itt = fit_d.effect
    if abs(pi_itt) <= COMPLIANCE_TOLERANCE:
        raise ZeroComplianceEffect(
            f"estimated effect of assignment on receipt is {pi_itt:.3g}"
        )
    warnings = [WarningLabel.NEGATIVE_COMPLIANCE] if pi_itt < 0 else []
    return LateEstimate(
        tau_itt=fit_y.effect,
        pi_itt=pi_itt,
        tau_late=fit_y.effect / pi_itt,
        fit_y=fit_y,
        fit_d=fit_d,
        warnings=warnings,
    )


def estimate_late(data: Dataset) -> LateEstimate:
    """Point estimates of the ITT effects and the LATE.

    Both ITT models use the dataset's full covariate set, so the LATE equals
    the 2SLS coefficient on receipt with instruments (1, T, x).
    """
    fit_y = fit_itt(data.y, data.t, data.x)
    fit_d = fit_itt(data.d, data.t, data.x)
    return late_from_fits(fit_y, fit_d)


def covariate_df(num_covariates: int, n1: int, n: int) -> tuple[float, float]:
    """Covariate degrees of freedom charged to the treated and control arms."""
    p = n1 / n
    return num_covariates * p, num_covariates * (1 - p)


def arm_components(
    residual_y: np.ndarray,
    residual_d: np.ndarray,
    tau_late: float,
    pi_itt: float,
    denominator: float,
) -> ArmComponents:
    """Splits one arm's residual variance into outcome, receipt and covariance
    parts sharing the same denominator.

    Raises
    ------
    InsufficientDf
        If `denominator` is not positive.
    """
    if not denominator > 0:
        raise InsufficientDf(
            f"residual degrees of freedom must be positive, got {denominator:.6g}"
        )
    scale = pi_itt**2 * denominator
    s2_ry = float(residual_y @ residual_y) / scale
    s2_rd = tau_late**2 * float(residual_d @ residual_d) / scale
    s2_ryd = -2 * tau_late * float(residual_y @ residual_d) / scale
    residual = residual_y - tau_late * residual_d
    return ArmComponents(
        s2_ry=s2_ry,
        s2_rd=s2_rd,
        s2_ryd=s2_ryd,
        s2_r=float(residual @ residual) / scale,
    )


def variance_db(
    fit_y: IttFit, fit_d: IttFit, tau_late: float, num_covariates: int
) -> tuple[float, VarianceComponents]:
    """Design-based plug-in variance of the LATE estimator.

    Parameters
    ----------
    fit_y, fit_d : IttFit
        Outcome and receipt fits on the same data.
    tau_late : float
        LATE estimate.
    num_covariates : int
        V.

    Returns
    -------
    tuple[float, VarianceComponents]
        s2_R(1)/n1 + s2_R(0)/n0 and the per-arm decomposition.

    Raises
    ------
    InsufficientDf
        If n_t - k_t - 1 <= 0 in an arm.
    """
    n1, n0 = fit_y.arm_sizes
    k1, k0 = covariate_df(num_covariates, n1, n1 + n0)
    pi_itt = fit_d.effect
    (ry1, ry0), (rd1, rd0) = fit_y.group_residuals, fit_d.group_residuals
    treatment = arm_components(ry1, rd1, tau_late, pi_itt, n1 - k1 - 1)
    control = arm_components(ry0, rd0, tau_late, pi_itt, n0 - k0 - 1)
    variance = treatment.s2_r / n1 + control.s2_r / n0
    return variance, VarianceComponents(treatment=treatment, control=control)


def variance_db_bounded(
    variance: float, components: VarianceComponents, n: int
) -> tuple[float, list[WarningLabel]]:
    """Design-based variance minus the Cauchy-Schwarz lower bound on the
    heterogeneity term, (s_R(1) - s_R(0))^2 / n, floored at zero."""
    bound = (
        math.sqrt(components.treatment.s2_r) - math.sqrt(components.control.s2_r)
    ) ** 2 / n
    bounded = variance - bound
    if bounded < 0:
        return 0.0, [WarningLabel.FLOORED_VARIANCE]
    return bounded, []


def variance_iv(
    fit_y: IttFit, fit_d: IttFit, tau_late: float, num_covariates: int
) -> float:
    """Conventional IV variance assuming constant effects: pooled residual
    variance over n - V - 2 df times (1/n1 + 1/n0).

    Raises
    ------
    InsufficientDf
        If n - V - 2 <= 0.
    """
    n1, n0 = fit_y.arm_sizes
    df = n1 + n0 - num_covariates - 2
    if df <= 0:
        raise InsufficientDf(f"IV variance needs n - V - 2 > 0, got {df}")
    rss = sum(
        float(r @ r)
        for r in (
            fit_y.group_residuals[arm] - tau_late * fit_d.group_residuals[arm]
            for arm in (0, 1)
        )
    )
    s2 = rss / (fit_d.effect**2 * df)
    return s2 * (1 / n1 + 1 / n0)


def itt_variance(fit: IttFit, num_covariates: int) -> float:
    """Design-based variance of the ITT estimate of one fit."""
    n1, n0 = fit.arm_sizes
    k1, k0 = covariate_df(num_covariates, n1, n1 + n0)
    variance = 0.0
    for residual, size, k in zip(fit.group_residuals, (n1, n0), (k1, k0)):
        denominator = size - k - 1
        if not denominator > 0:
            raise InsufficientDf(
                f"residual degrees of freedom must be positive, got {denominator:.6g}"
            )
        variance += float(residual @ residual) / (denominator * size)
    return variance


def f_statistic(
    d: npt.ArrayLike, t: npt.ArrayLike, weights: Optional[npt.ArrayLike] = None
) -> float:
    """F statistic of the (weighted) regression of d on (1, T).

    Returns 0 when the fitted values do not vary and +inf when they fit
    exactly.
    """
    d = np.asarray(d, dtype=float)
    t = np.asarray(t, dtype=float)
    n = len(d)
    if n < 3:
        raise DomainError(f"the first-stage F needs at least 3 observations, got {n}")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    treated = t == 1
    if treated.all() or not treated.any():
        return 0.0

    fitted = np.where(
        treated,
        np.average(d[treated], weights=w[treated]),
        np.average(d[~treated], weights=w[~treated]),
    )
    overall = np.average(d, weights=w)
    model_ss = float(w @ (fitted - overall) ** 2)
    residual_ss = float(w @ (d - fitted) ** 2)
    if model_ss <= 0:
        return 0.0
    if residual_ss <= 1e-12 * model_ss:
        return math.inf
    return model_ss / (residual_ss / (n - 2))


def first_stage_f(data: Dataset) -> float:
    """F statistic of the no-covariate regression of receipt on assignment."""
    return f_statistic(data.d, data.t)


def naive_ols_late(data: Dataset) -> float:
    """Coefficient on receipt from the one-stage regression y ~ (1, d, x)."""
    design = np.column_stack([np.ones(data.n), data.d, data.x])
    return float(solve_least_squares(design, data.y)[1])


def method_variances(
    estimate: LateEstimate,
    num_covariates: int,
    methods: Sequence[VarianceMethod],
) -> tuple[
    dict[VarianceMethod, float], Optional[VarianceComponents], list[WarningLabel]
]:
    """Variance estimates of the requested methods for one estimate.

    The design-based variance and its components are only computed when `db`
    or `db_bounded` is requested, so `iv` alone needs only n - V - 2 > 0.
    """
    db, components = None, None
    if VarianceMethod.DB in methods or VarianceMethod.DB_BOUNDED in methods:
        db, components = variance_db(
            estimate.fit_y, estimate.fit_d, estimate.tau_late, num_covariates
        )
    variances = {}
    warnings = []
    for method in methods:
        if method == VarianceMethod.DB:
            variances[method] = db
        elif method == VarianceMethod.DB_BOUNDED:
            variances[method], floored = variance_db_bounded(
                db, components, estimate.fit_y.n
            )
            warnings.extend(floored)
        else:
            variances[method] = variance_iv(
                estimate.fit_y, estimate.fit_d, estimate.tau_late, num_covariates
            )
    return variances, components, warnings


def log_warnings(warnings: Sequence[WarningLabel], context: str) -> None:
    for label in dict.fromkeys(warnings):
        logging.warning(f"{context}: {label.value}")


def analyze(
    data: Dataset,
    methods: Sequence[VarianceMethod] = DEFAULT_METHODS,
    alpha: float = 0.05,
    reference: Reference = Reference.T,
) -> LateResult:
    """Full LATE analysis of a completely randomized trial.

    Parameters
    ----------
    data : Dataset
        Observed data.
    methods : Sequence[VarianceMethod]
        Variance methods to report; the first one is the primary method.
    alpha : float
        1 - confidence level.
    reference : Reference
        t (df = n - V - 2) or z.

    Returns
    -------
    LateResult
        Estimates, variances, inference and diagnostics.
    """
    if not methods:
        raise DomainError("at least one variance method is needed")
    estimate = estimate_late(data)
    num_covariates = data.num_covariates
    variances, components, warnings = method_variances(
        estimate, num_covariates, methods
    )
    warnings = list(estimate.warnings) + warnings

    df = data.n - num_covariates - 2
    if reference == Reference.T and df <= 0:
        raise InsufficientDf(f"t reference needs n - V - 2 > 0, got {df}")

    itt_se = None
    if components is not None:
        itt_se = math.sqrt(itt_variance(estimate.fit_y, num_covariates))

    f = first_stage_f(data)
    if f < WEAK_INSTRUMENT_F:
        warnings.append(WarningLabel.WEAK_INSTRUMENT)
    log_warnings(warnings, "simple design")

    return LateResult(
        design="simple",
        n=data.n,
        arm_sizes=estimate.fit_y.arm_sizes,
        num_covariates=num_covariates,
        tau_itt=estimate.tau_itt,
        pi_itt=estimate.pi_itt,
        tau_late=estimate.tau_late,
        itt_se=itt_se,
        methods={
            method: infer(estimate.tau_late, variance, df, alpha, reference)
            for method, variance in variances.items()
        },
        components=components,
        df=df,
        reference=reference,
        alpha=alpha,
        first_stage_f=f,
        warnings=list(dict.fromkeys(warnings)),
    )
