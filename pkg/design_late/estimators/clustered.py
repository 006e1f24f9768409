"""LATE estimation for cluster-randomized trials.

Estimation runs on cluster-level aggregates: weighted arm means, weighted
least squares for the covariate coefficients and residuals scaled by each
cluster's weight relative to its arm. Degrees of freedom count clusters.
"""

from collections.abc import Sequence
from typing import Optional

import numpy as np
import numpy.typing as npt
import pandas as pd

from design_late.errors import (
    DataError,
    DegenerateArm,
    DomainError,
    EmptyArm,
    InconsistentWeightColumn,
    InsufficientDf,
    MixedAssignmentInCluster,
    ZeroComplianceEffect,
)
from design_late.models.dataset import ClusterDataset, Dataset
from design_late.models.results import (
    BlockResult,
    LateResult,
    PooledResult,
    Reference,
    VarianceComponents,
    VarianceMethod,
    WarningLabel,
)
from design_late.models.run_config import (
    BlockPolicy,
    BlockWeightScheme,
    ClusterWeightScheme,
)

from .blocked import BLOCKED_METHODS, apply_block_policy, block_labels, pool
from .core import (
    WEAK_INSTRUMENT_F,
    LateEstimate,
    f_statistic,
    fit_itt,
    itt_variance,
    late_from_fits,
    log_warnings,
    variance_db,
    variance_db_bounded,
)
from .inference import infer

CLUSTERED_METHODS = BLOCKED_METHODS


def _first_row_of(frame: pd.DataFrame, clusters: pd.Index) -> int:
    """1-based data row of the first unit belonging to one of `clusters`."""
    return int(frame.index[frame["cluster"].isin(clusters)][0]) + 1


def cluster_labels(data: Dataset) -> np.ndarray:
    if data.cluster_id is None:
        raise DomainError("clustered designs need cluster labels")
    return np.asarray(data.cluster_id).astype(str)


def aggregate(
    data: Dataset,
    weight_scheme: ClusterWeightScheme = ClusterWeightScheme.SIZE,
    rows: Optional[npt.ArrayLike] = None,
) -> ClusterDataset:
    """Collapses unit rows to within-cluster means.

    Parameters
    ----------
    data : Dataset
        Unit-level data with cluster labels.
    weight_scheme : ClusterWeightScheme
        Cluster weight: its size, 1, or the value of the weight column.
    rows : array-like, optional
        0-based positions of the units of `data` in the original data, used to
        number rows in errors. Defaults to 0, ..., n - 1.

    Returns
    -------
    ClusterDataset
        One row per cluster, sorted by label.

    Raises
    ------
    MixedAssignmentInCluster
        If the units of a cluster have different assignments.
    InconsistentWeightColumn
        If the weight column varies within a cluster.
    EmptyArm
        If all clusters share one assignment.
    """
    weight_scheme = ClusterWeightScheme(weight_scheme)
    frame = pd.DataFrame(
        {"cluster": cluster_labels(data), "t": data.t, "y": data.y, "d": data.d},
        index=None if rows is None else np.asarray(rows, dtype=int),
    )
    covariates = [f"x{v}" for v in range(data.num_covariates)]
    for name, column in zip(covariates, data.x.T):
        frame[name] = column
    if weight_scheme == ClusterWeightScheme.COLUMN:
        if data.weight is None:
            raise DomainError("weight scheme 'column' needs a weight column")
        frame["w"] = data.weight

    groups = frame.groupby("cluster", sort=True)
    mixed = groups["t"].nunique() > 1
    if mixed.any():
        raise MixedAssignmentInCluster(
            f"cluster '{mixed.index[mixed][0]}' mixes treated and control units",
            row=_first_row_of(frame, mixed.index[mixed]),
            column="assignment",
        )

    means = groups.mean()
    sizes = groups.size().to_numpy()
    if weight_scheme == ClusterWeightScheme.SIZE:
        w = sizes.astype(float)
    elif weight_scheme == ClusterWeightScheme.UNIFORM:
        w = np.ones(len(sizes))
    else:
        varying = groups["w"].nunique() > 1
        if varying.any():
            raise InconsistentWeightColumn(
                f"weight varies within cluster '{varying.index[varying][0]}'",
                row=_first_row_of(frame, varying.index[varying]),
                column="weight",
            )
        w = means["w"].to_numpy()

    t = means["t"].to_numpy()
    m1 = int(t.sum())
    if m1 == 0 or m1 == len(t):
        raise EmptyArm(
            f"both arms need clusters, got {m1} treated of {len(t)}",
            column="assignment",
        )

    arrays = {
        "labels": means.index.to_numpy(dtype=str),
        "t": t,
        "w": w,
        "ybar": means["y"].to_numpy(),
        "dbar": means["d"].to_numpy(),
        "xbar": means[covariates].to_numpy(dtype=float),
        "sizes": sizes,
    }
    for values in arrays.values():
        values.setflags(write=False)
    return ClusterDataset(**arrays)


def estimate_late_clustered(cd: ClusterDataset) -> LateEstimate:
    """Point estimates from weighted least squares on the cluster aggregates.

    Raises
    ------
    ZeroComplianceEffect
        If the cluster-level receipt effect vanishes.
    RankDeficient
        If the centered cluster covariates are collinear.
    """
    fit_y = fit_itt(cd.ybar, cd.t, cd.xbar, weights=cd.w)
    fit_d = fit_itt(cd.dbar, cd.t, cd.xbar, weights=cd.w)
    return late_from_fits(fit_y, fit_d)


def variance_clustered(
    estimate: LateEstimate, num_covariates: int
) -> tuple[float, VarianceComponents]:
    """Design-based variance from the weight-scaled cluster residuals, with
    covariate df V * m1 / m and V * m0 / m charged to the arms.

    Raises
    ------
    InsufficientDf
        If an arm has no residual degrees of freedom left.
    """
    return variance_db(
        estimate.fit_y, estimate.fit_d, estimate.tau_late, num_covariates
    )


def cluster_first_stage_f(cd: ClusterDataset) -> float:
    """F statistic of the weighted regression of cluster receipt on assignment."""
    return f_statistic(cd.dbar, cd.t, weights=cd.w)


def _method_variances(
    estimate: LateEstimate,
    num_covariates: int,
    m: int,
    methods: Sequence[VarianceMethod],
) -> tuple[
    float, dict[VarianceMethod, float], VarianceComponents, list[WarningLabel]
]:
    variance, components = variance_clustered(estimate, num_covariates)
    variances = {}
    warnings = []
    for method in methods:
        if method == VarianceMethod.DB:
            variances[method] = variance
        elif method == VarianceMethod.DB_BOUNDED:
            variances[method], floored = variance_db_bounded(variance, components, m)
            warnings.extend(floored)
        else:
            raise DomainError(
                f"variance method '{VarianceMethod(method).value}' is not available "
                "for clustered designs"
            )
    return variance, variances, components, warnings


def analyze_clustered(
    cd: ClusterDataset,
    methods: Sequence[VarianceMethod] = CLUSTERED_METHODS,
    alpha: float = 0.05,
    reference: Reference = Reference.T,
) -> LateResult:
    """Full LATE analysis of a cluster-randomized trial.

    Parameters
    ----------
    cd : ClusterDataset
        Cluster aggregates.
    methods : Sequence[VarianceMethod]
        db and/or db_bounded; the first is primary.
    alpha : float
        1 - confidence level.
    reference : Reference
        t (df = m - V - 2) or z.
    """
    if not methods:
        raise DomainError("at least one variance method is needed")
    estimate = estimate_late_clustered(cd)
    num_covariates = cd.num_covariates
    _, variances, components, warnings = _method_variances(
        estimate, num_covariates, cd.m, methods
    )
    warnings = list(estimate.warnings) + warnings

    df = cd.m - num_covariates - 2
    if reference == Reference.T and df <= 0:
        raise InsufficientDf(f"t reference needs m - V - 2 > 0, got {df}")

    f = cluster_first_stage_f(cd)
    if f < WEAK_INSTRUMENT_F:
        warnings.append(WarningLabel.WEAK_INSTRUMENT)
    log_warnings(warnings, "clustered design")

    return LateResult(
        design="clustered",
        n=cd.n,
        m=cd.m,
        arm_sizes=estimate.fit_y.arm_sizes,
        num_covariates=num_covariates,
        tau_itt=estimate.tau_itt,
        pi_itt=estimate.pi_itt,
        tau_late=estimate.tau_late,
        itt_se=float(np.sqrt(itt_variance(estimate.fit_y, num_covariates))),
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


def _check_nesting(data: Dataset, blocks: np.ndarray) -> None:
    frame = pd.DataFrame({"cluster": cluster_labels(data), "block": blocks})
    spanning = frame.groupby("cluster", sort=True)["block"].nunique() > 1
    if spanning.any():
        raise DataError(
            f"cluster '{spanning.index[spanning][0]}' spans several blocks",
            row=_first_row_of(frame, spanning.index[spanning]),
            column="cluster",
        )


def estimate_blocked_clustered(
    data: Dataset,
    weight_scheme: ClusterWeightScheme = ClusterWeightScheme.SIZE,
    scheme: BlockWeightScheme = BlockWeightScheme.COMPLIER_SIZE,
    policy: BlockPolicy = BlockPolicy.ERROR,
    methods: Sequence[VarianceMethod] = CLUSTERED_METHODS,
    alpha: float = 0.05,
    reference: Reference = Reference.T,
) -> PooledResult:
    """Clustered estimates per block, pooled across blocks.

    Clusters must be nested within blocks. Each block is aggregated and
    estimated on its own; complier-size weights use the block's unit count
    times its cluster-level receipt effect, and df = m - V - 2h.

    Raises
    ------
    DataError
        If a cluster spans several blocks.
    DegenerateArm, ZeroComplianceEffect, InsufficientDf
        Under the error policy.
    AllBlocksDropped
        If no block is left.
    """
    if not methods:
        raise DomainError("at least one variance method is needed")
    labels = block_labels(data)
    _check_nesting(data, labels)
    num_covariates = data.num_covariates

    blocks, dropped, warnings = [], [], []
    in_model = np.zeros(data.n, dtype=bool)
    h = m = 0
    for label in np.unique(labels):
        label = str(label)
        mask = labels == label
        n1_b = int(data.t[mask].sum())
        if n1_b == 0 or n1_b == mask.sum():
            apply_block_policy(
                policy,
                DegenerateArm(f"block '{label}' has a single arm"),
                label,
                dropped,
            )
            continue
        cd = aggregate(data.subset(mask), weight_scheme, rows=np.flatnonzero(mask))
        in_model |= mask
        h += 1
        m += cd.m
        try:
            estimate = estimate_late_clustered(cd)
            var_qbar_b, variances, _, floored = _method_variances(
                estimate, num_covariates, cd.m, methods
            )
        except (ZeroComplianceEffect, InsufficientDf) as e:
            apply_block_policy(
                policy, type(e)(f"block '{label}': {e}"), label, dropped
            )
            continue
        warnings.extend(estimate.warnings + floored)
        blocks.append(
            BlockResult(
                label=label,
                n_b=cd.n,
                m_b=cd.m,
                arm_sizes=(cd.m1, cd.m - cd.m1),
                tau_itt_b=estimate.tau_itt,
                pi_itt_b=estimate.pi_itt,
                tau_late_b=estimate.tau_late,
                var_qbar_b=var_qbar_b,
                variances=variances,
            )
        )

    if dropped:
        warnings.append(WarningLabel.DROPPED_BLOCK)
    dropped.sort(key=lambda block: block.label)
    result = pool(
        blocks,
        scheme,
        m,
        num_covariates,
        h,
        methods=methods,
        alpha=alpha,
        reference=reference,
        dropped=dropped,
        design="blocked_clustered",
    )
    warnings.extend(result.warnings)

    f = cluster_first_stage_f(aggregate(data.subset(in_model), weight_scheme))
    if f < WEAK_INSTRUMENT_F:
        warnings.append(WarningLabel.WEAK_INSTRUMENT)
    log_warnings(warnings, "blocked clustered design")
    return result.model_copy(
        update={
            "n": int(in_model.sum()),
            "m": m,
            "first_stage_f": f,
            "warnings": list(dict.fromkeys(warnings)),
        }
    )
