import itertools
from collections import Counter

import numpy as np
import pytest

from design_late.errors import DomainError
from design_late.models.simulation_config import SimulationConfig
from design_late.numerics import normal_quantile

from ..generator import (
    draw_assignment,
    generate_population,
    population_stream,
    replication_stream,
)


def make_config(**kwargs) -> SimulationConfig:
    settings = {"name": "test", "n": 400, "dbar0": 0.2, "dbar1": 0.5}
    settings.update(kwargs)
    return SimulationConfig(**settings)


@pytest.fixture(scope="module")
def large_population():
    cfg = make_config(n=100_000, with_covariate=True, num_datasets=1)
    return generate_population(cfg, 0)


def test_strata_follow_thresholds():
    pop = generate_population(make_config(dbar1=0.5), 0)
    low, high = normal_quantile(0.2), normal_quantile(0.5)

    always = pop.delta <= low
    compliers = (pop.delta > low) & (pop.delta <= high)
    np.testing.assert_array_equal(pop.d0, always)
    np.testing.assert_array_equal(pop.d1, always | compliers)
    assert low == pytest.approx(-0.8416212335729143)
    assert high == 0.0


def test_full_compliance_population():
    pop = generate_population(make_config(dbar0=0.0, dbar1=1.0), 0)

    assert (pop.d1 == 1).all()
    assert (pop.d0 == 0).all()


def test_only_compliers_are_affected():
    pop = generate_population(make_config(), 0)

    noncompliers = pop.d1 == pop.d0
    np.testing.assert_array_equal(pop.y1[noncompliers], pop.y0[noncompliers])
    assert (pop.y1[~noncompliers] != pop.y0[~noncompliers]).all()
    assert (pop.d1 >= pop.d0).all()


def test_strata_shares(large_population):
    pop = large_population

    assert pop.d0.mean() == pytest.approx(0.2, abs=0.01)
    assert (pop.d1 - pop.d0).mean() == pytest.approx(0.3, abs=0.01)
    assert 1 - pop.d1.mean() == pytest.approx(0.5, abs=0.01)


def test_outcome_moments(large_population):
    pop = large_population
    r2 = np.corrcoef(pop.y0, pop.x[:, 0])[0, 1] ** 2

    assert np.corrcoef(pop.delta, pop.y0)[0, 1] == pytest.approx(0.3, abs=0.02)
    assert r2 == pytest.approx(0.4, abs=0.02)
    assert pop.y1.var() > pop.y0.var()


def test_treatment_effect_correlation():
    cfg = make_config(n=100_000, dbar0=0.0, dbar1=1.0, num_datasets=1)
    pop = generate_population(cfg, 0)
    theta = pop.y1 - pop.y0

    assert np.corrcoef(pop.delta, theta)[0, 1] == pytest.approx(0.1, abs=0.02)
    assert theta.var() == pytest.approx(pop.y0.var() / 3, rel=0.05)


def test_generate_population_is_reproducible():
    cfg = make_config()

    first = generate_population(cfg, 2)
    second = generate_population(cfg, 2)
    other = generate_population(cfg, 3)

    assert first.checksum() == second.checksum()
    assert first.checksum() != other.checksum()


def test_covariate_does_not_change_outcomes():
    plain = generate_population(make_config(), 1)
    adjusted = generate_population(make_config(with_covariate=True), 1)

    np.testing.assert_array_equal(plain.y1, adjusted.y1)
    np.testing.assert_array_equal(plain.d0, adjusted.d0)
    assert (plain.num_covariates, adjusted.num_covariates) == (0, 1)


@pytest.mark.parametrize("index", [-1, 5])
def test_generate_population_invalid_index(index):
    with pytest.raises(DomainError):
        generate_population(make_config(), index)


def test_streams_are_distinct():
    draws = [
        population_stream(7, 0).random(),
        population_stream(7, 1).random(),
        replication_stream(7, 0, 0).random(),
        replication_stream(7, 0, 1).random(),
        replication_stream(8, 0, 0).random(),
    ]

    assert len(set(draws)) == len(draws)
    assert replication_stream(7, 0, 1).random() == draws[3]


@pytest.mark.parametrize("n, n1", [(4, 2), (10, 3), (5, 4)])
def test_draw_assignment_size(n, n1):
    rng = np.random.default_rng(0)

    for _ in range(20):
        t = draw_assignment(n, n1, rng)
        assert t.sum() == n1
        assert set(np.unique(t)) <= {0.0, 1.0}


def test_draw_assignment_is_uniform():
    rng = np.random.default_rng(1)
    draws = 60_000

    counts = Counter(
        tuple(draw_assignment(4, 2, rng).astype(int)) for _ in range(draws)
    )

    subsets = list(itertools.combinations(range(4), 2))
    assert len(counts) == len(subsets)
    tolerance = 4 * np.sqrt(10_000 * 5 / 6)
    for count in counts.values():
        assert abs(count - 10_000) <= tolerance


@pytest.mark.parametrize("n1", [0, 4, -1])
def test_draw_assignment_invalid(n1):
    with pytest.raises(DomainError):
        draw_assignment(4, n1, np.random.default_rng(0))
