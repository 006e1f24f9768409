"""Latent-variable populations and complete randomization.

Receipt follows a binary choice model on a standard normal tendency delta:
a unit takes the treatment when assigned to control if delta falls below the
dbar0 quantile, and when assigned to treatment if it falls below the dbar1
quantile. Units in between are the compliers, the only ones whose outcome
moves with assignment.
"""

import math

import numpy as np

from design_late.errors import DomainError
from design_late.models.population import PotentialPopulation
from design_late.models.simulation_config import SimulationConfig
from design_late.numerics import normal_quantile


def population_stream(seed: int, dataset_index: int) -> np.random.Generator:
    """Random stream of one population, independent of every replication."""
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(dataset_index,))
    )


def replication_stream(
    seed: int, dataset_index: int, rep_index: int
) -> np.random.Generator:
    """Random stream of one replication of one population."""
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(dataset_index, rep_index))
    )


def generate_population(
    cfg: SimulationConfig, dataset_index: int
) -> PotentialPopulation:
    """Draws the potential outcomes of one simulated population.

    Parameters
    ----------
    cfg : SimulationConfig
        Generator parameters.
    dataset_index : int
        Which of the `cfg.num_datasets` populations to draw.

    Returns
    -------
    PotentialPopulation
        Potential outcomes, with the covariate only if `cfg.with_covariate`.
        Populations with and without the covariate share every draw.
    """
    if not 0 <= dataset_index < cfg.num_datasets:
        raise DomainError(
            f"dataset index must be in [0, {cfg.num_datasets}), got {dataset_index}"
        )
    n = cfg.n
    rng = population_stream(cfg.seed, dataset_index)
    delta = rng.standard_normal(n)
    eta = rng.standard_normal(n)
    u = rng.standard_normal(n)
    v = rng.standard_normal(n)

    d0 = delta <= normal_quantile(cfg.dbar0)
    d1 = delta <= normal_quantile(cfg.dbar1)

    rho = cfg.rho_delta_y0
    phi = rho / math.sqrt(1 - rho**2)
    var_y0 = phi**2 + 1
    y0 = phi * delta + eta

    sigma_theta2 = cfg.sigma_theta2_rule * var_y0
    psi = cfg.rho_delta_theta * math.sqrt(sigma_theta2)
    sigma_v = math.sqrt(sigma_theta2 * (1 - cfg.rho_delta_theta**2))
    theta = psi * delta + sigma_v * v
    compliers = d1 & ~d0
    y1 = y0 + np.where(compliers, theta, 0.0)

    x = None
    if cfg.with_covariate:
        sigma_u = math.sqrt(var_y0 * (1 - cfg.r2_y0x) / cfg.r2_y0x)
        x = y0 + sigma_u * u

    return PotentialPopulation.create(y1=y1, y0=y0, d1=d1, d0=d0, x=x, delta=delta)


def draw_assignment(n: int, n1: int, rng: np.random.Generator) -> np.ndarray:
    """Completely randomized assignment: the first `n1` units of a uniform
    random permutation are treated.

    Returns
    -------
    np.ndarray
        0/1 floats with exactly `n1` ones.
    """
    if not 0 < n1 < n:
        raise DomainError(f"n1 must be between 1 and {n - 1}, got {n1}")
    t = np.zeros(n)
    t[rng.permutation(n)[:n1]] = 1.0
    return t
