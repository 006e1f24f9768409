"""Finite-population truths of a population with known potential outcomes.

These are computed independently of the estimators (plain numpy, minimum
norm least squares) so they can serve as the reference in tests and in the
Monte Carlo study.
"""

from typing import Optional

import numpy as np

from design_late.errors import DomainError, ZeroComplianceEffect
from design_late.models.population import PotentialPopulation, TrueQuantities


def _projection_coefficients(x: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Least-squares coefficients of `target` on grand-centered `x`.

    Zero or collinear columns get the minimum-norm solution, so all-zero
    covariates give zero coefficients.
    """
    if x.shape[1] == 0:
        return np.empty(0)
    centered = x - x.mean(axis=0)
    coefs, *_ = np.linalg.lstsq(centered, target - target.mean(), rcond=None)
    return coefs


def _check_rate(p: float) -> None:
    if not 0 < p < 1:
        raise DomainError(f"assignment rate must be in (0, 1), got {p}")


def true_estimands(pop: PotentialPopulation, p: float) -> TrueQuantities:
    """ITT effects, the complier LATE, strata shares and the population
    covariate coefficients.

    Parameters
    ----------
    pop : PotentialPopulation
        Population with every potential outcome known.
    p : float
        Assignment rate used to mix the potential outcomes for the covariate
        coefficients.

    Returns
    -------
    TrueQuantities
        Estimand fields; the variance fields are left unset.

    Raises
    ------
    ZeroComplianceEffect
        If nobody is a complier.
    """
    _check_rate(p)
    tau_itt = float(pop.y1.mean() - pop.y0.mean())
    pi_itt = float(pop.d1.mean() - pop.d0.mean())
    if pi_itt == 0:
        raise ZeroComplianceEffect("the population has no compliers")

    beta_star = _projection_coefficients(pop.x, p * pop.y1 + (1 - p) * pop.y0)
    gamma_star = _projection_coefficients(pop.x, p * pop.d1 + (1 - p) * pop.d0)
    return TrueQuantities(
        tau_itt=tau_itt,
        pi_itt=pi_itt,
        tau_10=tau_itt / pi_itt,
        strata_shares=(
            float(pop.d0.mean()),
            pi_itt,
            float(1 - pop.d1.mean()),
        ),
        beta_star=beta_star.tolist(),
        gamma_star=gamma_star.tolist(),
    )


def linearized_residuals(
    pop: PotentialPopulation, truth: TrueQuantities
) -> tuple[np.ndarray, np.ndarray]:
    """Linearized residuals R(1) and R(0) of every unit.

    R(t) = (Y~(t) - x~ beta* - tau_10 (D~(t) - x~ gamma*)) / pi_itt with all
    variables centered at their population means.
    """
    x = pop.x - pop.x.mean(axis=0)
    x_beta = x @ np.asarray(truth.beta_star, dtype=float)
    x_gamma = x @ np.asarray(truth.gamma_star, dtype=float)

    def residual(y, d):
        return (
            (y - y.mean() - x_beta) - truth.tau_10 * (d - d.mean() - x_gamma)
        ) / truth.pi_itt

    return residual(pop.y1, pop.d1), residual(pop.y0, pop.d0)


def true_var_qbar(
    pop: PotentialPopulation, n1: int, p: Optional[float] = None
) -> TrueQuantities:
    """Estimands together with the exact randomization variance of the
    linearized contrast under complete randomization of `n1` units.

    Parameters
    ----------
    pop : PotentialPopulation
        Population with every potential outcome known.
    n1 : int
        Number of treated units, 1 <= n1 <= n - 1.
    p : float, optional
        Assignment rate of the covariate coefficients, n1 / n by default.

    Returns
    -------
    TrueQuantities
        All fields, with var_qbar = S2_R(1)/n1 + S2_R(0)/n0 - S2_tau/n.
    """
    n = pop.n
    if not 1 <= n1 <= n - 1:
        raise DomainError(f"n1 must be between 1 and {n - 1}, got {n1}")
    truth = true_estimands(pop, n1 / n if p is None else p)
    r1, r0 = linearized_residuals(pop, truth)

    s2_r1 = float(np.var(r1, ddof=1))
    s2_r0 = float(np.var(r0, ddof=1))
    s2_r10 = float(np.cov(r1, r0, ddof=1)[0, 1])
    s2_tau = float(np.var(r1 - r0, ddof=1))
    var_qbar = s2_r1 / n1 + s2_r0 / (n - n1) - s2_tau / n
    return truth.model_copy(
        update={
            "var_qbar": max(var_qbar, 0.0),
            "s2_r1": s2_r1,
            "s2_r0": s2_r0,
            "s2_r10": s2_r10,
            "s2_tau": s2_tau,
        }
    )
