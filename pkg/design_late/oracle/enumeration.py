import itertools
import math
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict

from design_late.errors import DomainError, TooLarge
from design_late.estimators.core import COMPLIANCE_TOLERANCE, fit_itt
from design_late.models.population import PotentialPopulation

from .estimands import linearized_residuals, true_var_qbar

MAX_ASSIGNMENTS = 1_000_000


class EnumeratedEstimator(str, Enum):
    ITT_Y = "itt_y"
    ITT_D = "itt_d"
    LATE = "late"
    LINEARIZED_QBAR = "linearized_qbar"


class AssignmentDistribution(BaseModel):
    """Exact randomization distribution of an estimator.

    Every assignment is equally likely. Undefined estimates (a LATE with no
    receipt effect) are NaN and left out of the moments.

    Attributes
    ----------
    estimator : EnumeratedEstimator
        Which estimator was evaluated.
    assignments : np.ndarray
        C(n, n1)×n boolean matrix, subsets in lexicographic order.
    estimates : np.ndarray
        Estimate under each assignment.
    undefined : int
        Number of assignments without a defined estimate.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    estimator: EnumeratedEstimator
    assignments: np.ndarray
    estimates: np.ndarray
    undefined: int

    @property
    def probability(self) -> float:
        return 1 / len(self.estimates)

    @property
    def defined(self) -> np.ndarray:
        return self.estimates[~np.isnan(self.estimates)]

    @property
    def mean(self) -> float:
        return float(self.defined.mean())

    @property
    def variance(self) -> float:
        """Variance over the defined assignments, each weighted equally."""
        return float(self.defined.var())


def assignment_matrix(n: int, n1: int) -> np.ndarray:
    """All assignments of `n1` treated among `n` units, one per row.

    Raises
    ------
    TooLarge
        If there are more than `MAX_ASSIGNMENTS` of them.
    """
    if not 1 <= n1 <= n - 1:
        raise DomainError(f"n1 must be between 1 and {n - 1}, got {n1}")
    count = math.comb(n, n1)
    if count > MAX_ASSIGNMENTS:
        raise TooLarge(
            f"{count} assignments exceed the enumeration limit of {MAX_ASSIGNMENTS}"
        )
    treated = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(n), n1)),
        dtype=np.intp,
        count=count * n1,
    ).reshape(count, n1)
    assignments = np.zeros((count, n), dtype=bool)
    np.put_along_axis(assignments, treated, True, axis=1)
    return assignments


def _differences(
    assignments: np.ndarray, v1: np.ndarray, v0: np.ndarray
) -> np.ndarray:
    """Treated mean of `v1` minus control mean of `v0` under each assignment."""
    n1 = assignments[0].sum()
    n0 = assignments.shape[1] - n1
    return assignments @ v1 / n1 - ~assignments @ v0 / n0


def _adjusted_effects(
    pop: PotentialPopulation, assignments: np.ndarray, receipt: bool
) -> np.ndarray:
    effects = np.empty(len(assignments))
    for i, t in enumerate(assignments):
        if receipt:
            response = np.where(t, pop.d1, pop.d0)
        else:
            response = np.where(t, pop.y1, pop.y0)
        effects[i] = fit_itt(response, t.astype(float), pop.x).effect
    return effects


def enumerate_assignments(
    pop: PotentialPopulation,
    n1: int,
    estimator: EnumeratedEstimator,
    covariate_adjusted: bool = False,
) -> AssignmentDistribution:
    """Evaluates an estimator under every complete randomization of `n1` units.

    Parameters
    ----------
    pop : PotentialPopulation
        Population with every potential outcome known.
    n1 : int
        Number of treated units.
    estimator : EnumeratedEstimator
        itt_y, itt_d, late or the linearized contrast r(1) - r(0).
    covariate_adjusted : bool
        Use the covariate-adjusted ITT fits instead of raw differences in
        means (itt_y, itt_d and late only).

    Returns
    -------
    AssignmentDistribution
        One estimate per assignment.

    Raises
    ------
    TooLarge
        If C(n, n1) > `MAX_ASSIGNMENTS`.
    """
    estimator = EnumeratedEstimator(estimator)
    assignments = assignment_matrix(pop.n, n1)

    def itt(receipt: bool) -> np.ndarray:
        if covariate_adjusted:
            return _adjusted_effects(pop, assignments, receipt)
        if receipt:
            return _differences(assignments, pop.d1, pop.d0)
        return _differences(assignments, pop.y1, pop.y0)

    if estimator == EnumeratedEstimator.ITT_Y:
        estimates = itt(receipt=False)
    elif estimator == EnumeratedEstimator.ITT_D:
        estimates = itt(receipt=True)
    elif estimator == EnumeratedEstimator.LATE:
        numerator = itt(receipt=False)
        denominator = itt(receipt=True)
        undefined = np.abs(denominator) <= COMPLIANCE_TOLERANCE
        estimates = np.full(len(assignments), np.nan)
        estimates[~undefined] = numerator[~undefined] / denominator[~undefined]
    else:
        r1, r0 = linearized_residuals(pop, true_var_qbar(pop, n1))
        estimates = _differences(assignments, r1, r0)

    estimates.setflags(write=False)
    assignments.setflags(write=False)
    return AssignmentDistribution(
        estimator=estimator,
        assignments=assignments,
        estimates=estimates,
        undefined=int(np.isnan(estimates).sum()),
    )
