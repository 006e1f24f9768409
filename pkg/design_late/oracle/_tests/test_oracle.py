import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from design_late.errors import DomainError, TooLarge, ZeroComplianceEffect
from design_late.models.population import PotentialPopulation

from ..enumeration import (
    EnumeratedEstimator,
    assignment_matrix,
    enumerate_assignments,
)
from ..estimands import linearized_residuals, true_estimands, true_var_qbar


@pytest.fixture
def half_compliers() -> PotentialPopulation:
    return PotentialPopulation.create(
        y1=[2, 2, 2, 2], y0=[1, 1, 2, 2], d1=[1, 1, 0, 0], d0=[0, 0, 0, 0]
    )


@st.composite
def populations(draw, max_n=10):
    n = draw(st.integers(min_value=4, max_value=max_n))
    num_covariates = draw(st.integers(min_value=0, max_value=2))
    seed = draw(st.integers(min_value=0, max_value=2**32 - 1))
    rng = np.random.default_rng(seed)
    strata = rng.choice(3, size=n)
    strata[0] = 1
    d1 = (strata >= 1).astype(float)
    d0 = (strata == 2).astype(float)
    y0 = rng.normal(size=n)
    y1 = y0 + np.where(strata == 1, rng.normal(1.0, 2.0, size=n), 0.0)
    x = rng.normal(size=(n, num_covariates)) + y0[:, None]
    pop = PotentialPopulation.create(y1=y1, y0=y0, d1=d1, d0=d0, x=x)
    n1 = draw(st.integers(min_value=1, max_value=n - 1))
    return pop, n1


def test_true_estimands(half_compliers):
    truth = true_estimands(half_compliers, 0.5)

    assert truth.tau_itt == pytest.approx(0.5)
    assert truth.pi_itt == pytest.approx(0.5)
    assert truth.tau_10 == pytest.approx(1.0)
    assert truth.strata_shares == (0.0, 0.5, 0.5)
    assert truth.beta_star == []
    assert truth.var_qbar is None


def test_exclusion_violation_is_rejected():
    with pytest.raises(DomainError, match="exclusion"):
        PotentialPopulation.create(
            y1=[2, 2, 2, 2], y0=[1, 1, 1, 1], d1=[1, 1, 0, 0], d0=[0, 0, 0, 0]
        )


def test_true_estimands_no_effect():
    pop = PotentialPopulation.create(
        y1=[3, 1, 2, 5], y0=[3, 1, 2, 5], d1=[1, 1, 1, 0], d0=[0, 0, 1, 0]
    )

    truth = true_estimands(pop, 0.3)

    assert truth.tau_itt == 0
    assert truth.tau_10 == 0
    assert sum(truth.strata_shares) == pytest.approx(1.0)


def test_true_estimands_full_compliance():
    pop = PotentialPopulation.create(
        y1=[3, 2, 4, 6], y0=[1, 1, 2, 5], d1=[1, 1, 1, 1], d0=[0, 0, 0, 0]
    )

    truth = true_estimands(pop, 0.5)

    assert truth.pi_itt == 1
    assert truth.tau_10 == truth.tau_itt == pytest.approx(1.5)


def test_true_estimands_no_compliers():
    pop = PotentialPopulation.create(
        y1=[3, 1, 2, 5], y0=[3, 1, 2, 5], d1=[1, 0, 1, 0], d0=[1, 0, 1, 0]
    )

    with pytest.raises(ZeroComplianceEffect):
        true_estimands(pop, 0.5)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.2])
def test_true_estimands_invalid_rate(half_compliers, p):
    with pytest.raises(DomainError):
        true_estimands(half_compliers, p)


def test_constant_complier_effect_has_no_heterogeneity():
    pop = PotentialPopulation.create(
        y1=[4.0, 2.5, 2.0, 7.0, 1.0],
        y0=[1.0, -0.5, 2.0, 7.0, 1.0],
        d1=[1, 1, 1, 0, 1],
        d0=[0, 0, 1, 0, 1],
        x=[0.3, 1.2, -0.7, 0.1, 2.0],
    )

    truth = true_var_qbar(pop, 2)

    assert truth.s2_tau == pytest.approx(0.0, abs=1e-12)
    assert truth.var_qbar == pytest.approx(
        truth.s2_r1 / 2 + truth.s2_r0 / 3, rel=1e-12
    )


def test_identical_units_have_no_variance():
    pop = PotentialPopulation.create(
        y1=[3.0] * 5, y0=[1.0] * 5, d1=[1] * 5, d0=[0] * 5
    )

    assert true_var_qbar(pop, 2).var_qbar == pytest.approx(0.0, abs=1e-15)


def test_residuals_are_centered(half_compliers):
    truth = true_estimands(half_compliers, 0.5)
    r1, r0 = linearized_residuals(half_compliers, truth)

    assert r1.mean() == pytest.approx(0.0, abs=1e-15)
    assert r0.mean() == pytest.approx(0.0, abs=1e-15)


def test_zero_covariates_change_nothing():
    pop = PotentialPopulation.create(
        y1=[4.0, 2.5, 2.0, 7.0],
        y0=[1.0, 1.5, 2.0, 7.0],
        d1=[1, 1, 1, 0],
        d0=[0, 0, 1, 0],
    )
    padded = PotentialPopulation.create(
        y1=pop.y1, y0=pop.y0, d1=pop.d1, d0=pop.d0, x=np.zeros((4, 2))
    )

    plain = true_var_qbar(pop, 2)
    zeros = true_var_qbar(padded, 2)

    assert zeros.beta_star == [0.0, 0.0]
    for field in ("tau_itt", "pi_itt", "tau_10", "var_qbar", "s2_r1", "s2_r0"):
        assert getattr(zeros, field) == pytest.approx(getattr(plain, field))


def test_assignment_matrix():
    assignments = assignment_matrix(4, 2)

    assert assignments.shape == (6, 4)
    assert assignments[0].tolist() == [True, True, False, False]
    assert assignments[-1].tolist() == [False, False, True, True]
    assert (assignments.sum(axis=1) == 2).all()


def test_assignment_matrix_too_large():
    assert math.comb(30, 15) > 1_000_000
    with pytest.raises(TooLarge):
        assignment_matrix(30, 15)


@pytest.mark.parametrize("n1", [0, 4])
def test_assignment_matrix_needs_both_arms(n1):
    with pytest.raises(DomainError):
        assignment_matrix(4, n1)


def test_enumerate_late_counts_undefined():
    pop = PotentialPopulation.create(
        y1=[3, 1, 2, 5], y0=[1, 1, 2, 5], d1=[1, 0, 0, 0], d0=[0, 0, 0, 0]
    )

    distribution = enumerate_assignments(pop, 2, EnumeratedEstimator.LATE)

    assert len(distribution.estimates) == 6
    assert distribution.probability == pytest.approx(1 / 6)
    assert distribution.undefined == 3
    assert len(distribution.defined) == 3
    assert distribution.mean == pytest.approx((-3 - 1 + 5) / 3)


def test_covariate_adjustment_without_covariates(half_compliers):
    raw = enumerate_assignments(half_compliers, 2, "itt_y")
    adjusted = enumerate_assignments(
        half_compliers, 2, "itt_y", covariate_adjusted=True
    )

    np.testing.assert_allclose(adjusted.estimates, raw.estimates, atol=1e-12)


@given(populations())
@settings(max_examples=60, deadline=None)
def test_difference_in_means_is_unbiased(problem):
    pop, n1 = problem
    truth = true_estimands(pop, n1 / pop.n)

    itt_y = enumerate_assignments(pop, n1, EnumeratedEstimator.ITT_Y)
    itt_d = enumerate_assignments(pop, n1, EnumeratedEstimator.ITT_D)

    assert itt_y.mean == pytest.approx(truth.tau_itt, abs=1e-12)
    assert itt_d.mean == pytest.approx(truth.pi_itt, abs=1e-14)
    assert truth.tau_10 * truth.pi_itt == pytest.approx(truth.tau_itt, abs=1e-14)


@given(populations())
@settings(max_examples=60, deadline=None)
def test_exact_variance_of_linearized_contrast(problem):
    pop, n1 = problem
    truth = true_var_qbar(pop, n1)

    distribution = enumerate_assignments(
        pop, n1, EnumeratedEstimator.LINEARIZED_QBAR
    )

    assert distribution.mean == pytest.approx(0.0, abs=1e-10)
    assert distribution.variance == pytest.approx(
        truth.var_qbar, rel=1e-12, abs=1e-14
    )
    assert truth.s2_tau == pytest.approx(
        truth.s2_r1 + truth.s2_r0 - 2 * truth.s2_r10, rel=1e-9, abs=1e-12
    )
