import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import NamedTuple, Optional

import numpy as np

from design_late.errors import NumericalError, ZeroComplianceEffect
from design_late.estimators.core import (
    estimate_late,
    first_stage_f,
    method_variances,
    naive_ols_late,
)
from design_late.estimators.inference import infer
from design_late.models.dataset import Dataset
from design_late.models.population import PotentialPopulation, TrueQuantities
from design_late.models.results import (
    MethodSummary,
    SimulationSummary,
    VarianceMethod,
)
from design_late.models.simulation_config import SimulationConfig
from design_late.oracle.estimands import true_var_qbar

from .generator import draw_assignment, generate_population, replication_stream


class ReplicationRecord(NamedTuple):
    """Outcome of one random assignment of a fixed population.

    Attributes
    ----------
    tau_late : float
        LATE estimate.
    se : dict[VarianceMethod, float]
        Estimated standard error per method.
    covered : dict[VarianceMethod, bool]
        Whether each method's interval contains the true LATE.
    naive_ols : float
        One-stage regression coefficient on receipt.
    first_stage_f : float
        First-stage F statistic.
    """

    tau_late: float
    se: dict[VarianceMethod, float]
    covered: dict[VarianceMethod, bool]
    naive_ols: float
    first_stage_f: float


class DatasetSummary(NamedTuple):
    methods: dict[VarianceMethod, MethodSummary]
    naive_ols_bias: float
    mean_first_stage_f: float


def run_replication(
    cfg: SimulationConfig,
    pop: PotentialPopulation,
    tau_10: float,
    dataset_index: int,
    rep_index: int,
) -> Optional[ReplicationRecord]:
    """Assigns, reveals and estimates once.

    Returns None when the sample has no receipt effect.
    """
    rng = replication_stream(cfg.seed, dataset_index, rep_index)
    t = draw_assignment(cfg.n, cfg.n1, rng)
    y, d = pop.reveal(t)
    data = Dataset.create(y=y, d=d, t=t, x=pop.x)
    try:
        estimate = estimate_late(data)
    except ZeroComplianceEffect:
        return None

    num_covariates = data.num_covariates
    variances, _, _ = method_variances(
        estimate, num_covariates, cfg.variance_methods
    )
    df = data.n - num_covariates - 2
    se = {}
    covered = {}
    for method, variance in variances.items():
        inference = infer(estimate.tau_late, variance, df, cfg.alpha)
        se[method] = inference.se
        covered[method] = inference.ci_lower <= tau_10 <= inference.ci_upper
    return ReplicationRecord(
        tau_late=estimate.tau_late,
        se=se,
        covered=covered,
        naive_ols=naive_ols_late(data),
        first_stage_f=first_stage_f(data),
    )


def summarize_dataset(
    records: Sequence[Optional[ReplicationRecord]],
    tau_10: float,
    methods: Sequence[VarianceMethod],
) -> DatasetSummary:
    """Bias, coverage and standard errors over the replications of one
    population, in replication order.

    Raises
    ------
    NumericalError
        If fewer than two replications produced an estimate.
    """
    kept = [record for record in records if record is not None]
    rejected = len(records) - len(kept)
    if len(kept) < 2:
        raise NumericalError(
            f"only {len(kept)} of {len(records)} replications had an estimate"
        )

    estimates = np.array([record.tau_late for record in kept])
    bias = float(estimates.mean() - tau_10)
    true_se = float(estimates.std(ddof=1))
    summaries = {
        method: MethodSummary(
            bias=bias,
            coverage=float(np.mean([record.covered[method] for record in kept])),
            true_se=true_se,
            mean_est_se=float(np.mean([record.se[method] for record in kept])),
            rejected_replications=rejected,
        )
        for method in methods
    }
    naive = np.array([record.naive_ols for record in kept])
    f = np.array([record.first_stage_f for record in kept])
    return DatasetSummary(
        methods=summaries,
        naive_ols_bias=float(naive.mean() - tau_10),
        mean_first_stage_f=float(f.mean()),
    )


def _average(
    summaries: Sequence[DatasetSummary], methods: Sequence[VarianceMethod]
) -> dict[VarianceMethod, MethodSummary]:
    averaged = {}
    for method in methods:
        rows = [summary.methods[method] for summary in summaries]
        averaged[method] = MethodSummary(
            bias=float(np.mean([row.bias for row in rows])),
            coverage=float(np.mean([row.coverage for row in rows])),
            true_se=float(np.mean([row.true_se for row in rows])),
            mean_est_se=float(np.mean([row.mean_est_se for row in rows])),
            rejected_replications=sum(row.rejected_replications for row in rows),
        )
    return averaged


def _replicate_dataset(
    cfg: SimulationConfig,
    pop: PotentialPopulation,
    truth: TrueQuantities,
    dataset_index: int,
    executor: Optional[ThreadPoolExecutor],
) -> list[Optional[ReplicationRecord]]:
    def replicate(rep_index: int) -> Optional[ReplicationRecord]:
        return run_replication(cfg, pop, truth.tau_10, dataset_index, rep_index)

    if executor is None:
        return [replicate(rep_index) for rep_index in range(cfg.reps)]
    # map yields in submission order whatever order the workers finish in
    return list(executor.map(replicate, range(cfg.reps)))


def run_monte_carlo(cfg: SimulationConfig) -> SimulationSummary:
    """Finite-population Monte Carlo study of the simple design.

    Each population is drawn once and kept fixed while `cfg.reps` random
    assignments are evaluated against its true LATE. Per-population summaries
    are averaged over the `cfg.num_datasets` populations. The result does not
    depend on `cfg.threads`.

    Parameters
    ----------
    cfg : SimulationConfig
        Study parameters.

    Returns
    -------
    SimulationSummary
        Performance per variance method and the extra diagnostics.
    """
    methods = list(cfg.variance_methods)
    summaries = []
    checksums = []
    oracle_se = []
    executor = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
    try:
        for dataset_index in range(cfg.num_datasets):
            pop = generate_population(cfg, dataset_index)
            checksum = pop.checksum()
            truth = true_var_qbar(pop, cfg.n1)
            oracle_se.append(math.sqrt(truth.var_qbar))
            logging.info(
                f"{cfg.name}: dataset {dataset_index} has tau_10={truth.tau_10:.4f}, "
                f"complier share {truth.pi_itt:.3f}"
            )

            records = _replicate_dataset(cfg, pop, truth, dataset_index, executor)

            if pop.checksum() != checksum:
                raise RuntimeError(
                    f"population {dataset_index} changed during the replications"
                )
            summary = summarize_dataset(records, truth.tau_10, methods)
            rejected = len(records) - sum(record is not None for record in records)
            if rejected:
                logging.warning(
                    f"{cfg.name}: {rejected} replications of dataset {dataset_index} "
                    "had no receipt effect and were left out"
                )
            summaries.append(summary)
            checksums.append(checksum)
    finally:
        if executor is not None:
            executor.shutdown()

    return SimulationSummary(
        name=cfg.name,
        n=cfg.n,
        n1=cfg.n1,
        with_covariate=cfg.with_covariate,
        num_datasets=cfg.num_datasets,
        reps=cfg.reps,
        seed=cfg.seed,
        methods=_average(summaries, methods),
        naive_ols_bias=float(np.mean([s.naive_ols_bias for s in summaries])),
        oracle_se=float(np.mean(oracle_se)),
        mean_first_stage_f=float(np.mean([s.mean_first_stage_f for s in summaries])),
        dataset_checksums=checksums,
    )
