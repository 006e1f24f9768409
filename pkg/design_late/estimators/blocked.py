"""LATE estimation for block-randomized trials.

Every block is a small completely randomized experiment. One model with block
intercepts, block-specific treatment effects and covariates centered within
block gives per-block estimates sharing the covariate coefficients; the block
estimates are then pooled with complier-size weights.
"""

import logging
from collections.abc import Sequence
from typing import NamedTuple

import numpy as np

from design_late.errors import (
    AllBlocksDropped,
    DegenerateArm,
    DomainError,
    InsufficientDf,
    ZeroComplianceEffect,
)
from design_late.models.dataset import Dataset
from design_late.models.results import (
    BlockResult,
    DroppedBlock,
    LateResult,
    PooledResult,
    Reference,
    VarianceComponents,
    VarianceMethod,
    WarningLabel,
)
from design_late.models.run_config import BlockPolicy, BlockWeightScheme
from design_late.numerics import solve_least_squares

from .core import (
    COMPLIANCE_TOLERANCE,
    WEAK_INSTRUMENT_F,
    arm_components,
    f_statistic,
    log_warnings,
    variance_db_bounded,
)
from .inference import infer

BLOCKED_METHODS = (VarianceMethod.DB, VarianceMethod.DB_BOUNDED)


class BlockEstimates(NamedTuple):
    """Per-block results of the shared block model.

    Attributes
    ----------
    blocks : list[BlockResult]
        Retained blocks in label order, with zero pooling weight.
    dropped : list[DroppedBlock]
        Blocks removed by the drop policy.
    n : int
        Units in the fitted model.
    h : int
        Blocks in the fitted model.
    warnings : list[WarningLabel]
        Diagnostics.
    """

    blocks: list[BlockResult]
    dropped: list[DroppedBlock]
    n: int
    h: int
    warnings: list[WarningLabel]


def block_labels(data: Dataset) -> np.ndarray:
    if data.block_id is None:
        raise DomainError("the blocked design needs block labels")
    return np.asarray(data.block_id).astype(str)


def apply_block_policy(
    policy: BlockPolicy, error: Exception, label: str, dropped: list
) -> None:
    """Raises `error` under the error policy, records the block otherwise."""
    if BlockPolicy(policy) == BlockPolicy.ERROR:
        raise error
    logging.info(f"Dropping block '{label}': {error}")
    dropped.append(DroppedBlock(label=label, reason=str(error)))


def _check_methods(methods: Sequence[VarianceMethod]) -> None:
    if not methods:
        raise DomainError("at least one variance method is needed")
    for method in methods:
        if method not in BLOCKED_METHODS:
            raise DomainError(
                f"variance method '{VarianceMethod(method).value}' is not available "
                "for blocked designs"
            )


def estimate_blocks(
    data: Dataset,
    policy: BlockPolicy = BlockPolicy.ERROR,
    methods: Sequence[VarianceMethod] = BLOCKED_METHODS,
) -> BlockEstimates:
    """Fits the shared block model and computes each block's LATE and variance.

    Blocks with a single arm are handled by `policy` before the fit. Blocks
    whose receipt effect vanishes, or that lack residual degrees of freedom,
    are handled by `policy` after the fit and then only leave the pooling.

    Parameters
    ----------
    data : Dataset
        Observed data with block labels.
    policy : BlockPolicy
        Raise on the first unusable block, or drop it.
    methods : Sequence[VarianceMethod]
        Per-block variance methods to compute.

    Returns
    -------
    BlockEstimates
        Retained and dropped blocks and the size of the fitted model.

    Raises
    ------
    DegenerateArm, ZeroComplianceEffect, InsufficientDf
        Under the error policy.
    AllBlocksDropped
        If no block is left.
    RankDeficient
        If the block-centered covariates are collinear.
    """
    _check_methods(methods)
    labels = block_labels(data)
    dropped = []

    usable = []
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
        else:
            usable.append((label, mask))
    if not usable:
        raise AllBlocksDropped("no block has both arms")

    in_model = np.logical_or.reduce([mask for _, mask in usable])
    n = int(in_model.sum())
    h = len(usable)
    num_covariates = data.num_covariates

    columns_s, columns_t, x_centered = [], [], data.x.copy()
    for _, mask in usable:
        t_b = data.t[mask]
        columns_s.append(mask.astype(float))
        columns_t.append(np.where(mask, data.t - t_b.mean(), 0.0))
        x_centered[mask] -= data.x[mask].mean(axis=0)
    design = np.column_stack([*columns_s, *columns_t, x_centered])[in_model]
    coefs_y = solve_least_squares(design, data.y[in_model])
    coefs_d = solve_least_squares(design, data.d[in_model])
    beta, gamma = coefs_y[2 * h :], coefs_d[2 * h :]

    blocks = []
    warnings = []
    for b, (label, mask) in enumerate(usable):
        tau_itt_b = float(coefs_y[h + b])
        pi_itt_b = float(coefs_d[h + b])
        if abs(pi_itt_b) <= COMPLIANCE_TOLERANCE:
            apply_block_policy(
                policy,
                ZeroComplianceEffect(
                    f"block '{label}' has receipt effect {pi_itt_b:.3g}"
                ),
                label,
                dropped,
            )
            continue
        if pi_itt_b < 0:
            warnings.append(WarningLabel.NEGATIVE_COMPLIANCE)
        tau_late_b = tau_itt_b / pi_itt_b

        t_b = data.t[mask]
        n_b = int(mask.sum())
        n1_b = int(t_b.sum())
        p_b = n1_b / n_b
        q_b = n_b / n
        arms = []
        for arm, k in ((t_b == 1, p_b), (t_b == 0, 1 - p_b)):
            y, d, x = data.y[mask][arm], data.d[mask][arm], data.x[mask][arm]
            x = x - x.mean(axis=0)
            residual_y = y - y.mean() - x @ beta
            residual_d = d - d.mean() - x @ gamma
            denominator = arm.sum() - num_covariates * q_b * k - 1
            try:
                arms.append(
                    arm_components(
                        residual_y, residual_d, tau_late_b, pi_itt_b, denominator
                    )
                )
            except InsufficientDf as e:
                apply_block_policy(
                    policy, InsufficientDf(f"block '{label}': {e}"), label, dropped
                )
                break
        if len(arms) < 2:
            continue

        treatment, control = arms
        components = VarianceComponents(treatment=treatment, control=control)
        var_qbar_b = treatment.s2_r / n1_b + control.s2_r / (n_b - n1_b)
        variances = {}
        for method in methods:
            if method == VarianceMethod.DB:
                variances[method] = var_qbar_b
            else:
                variances[method], floored = variance_db_bounded(
                    var_qbar_b, components, n_b
                )
                warnings.extend(floored)
        blocks.append(
            BlockResult(
                label=label,
                n_b=n_b,
                arm_sizes=(n1_b, n_b - n1_b),
                tau_itt_b=tau_itt_b,
                pi_itt_b=pi_itt_b,
                tau_late_b=tau_late_b,
                var_qbar_b=var_qbar_b,
                variances=variances,
            )
        )

    if not blocks:
        raise AllBlocksDropped("every block was dropped")
    if dropped:
        warnings.append(WarningLabel.DROPPED_BLOCK)
    dropped.sort(key=lambda block: block.label)
    return BlockEstimates(
        blocks=blocks, dropped=dropped, n=n, h=h, warnings=warnings
    )


def block_weights(
    blocks: Sequence[BlockResult], scheme: BlockWeightScheme
) -> tuple[np.ndarray, list[WarningLabel]]:
    """Pooling weights of the retained blocks.

    Negative complier-size weights are floored at zero.
    """
    scheme = BlockWeightScheme(scheme)
    if scheme == BlockWeightScheme.COMPLIER_SIZE:
        weights = np.array([block.n_b * block.pi_itt_b for block in blocks])
    elif scheme == BlockWeightScheme.BLOCK_SIZE:
        weights = np.array([float(block.n_b) for block in blocks])
    else:
        weights = np.ones(len(blocks))

    warnings = []
    if (weights < 0).any():
        warnings.append(WarningLabel.NEGATIVE_WEIGHT)
        weights = np.maximum(weights, 0.0)
    return weights, warnings


def pool(
    blocks: Sequence[BlockResult],
    scheme: BlockWeightScheme,
    n: int,
    num_covariates: int,
    h: int,
    *,
    methods: Sequence[VarianceMethod] = (VarianceMethod.DB,),
    alpha: float = 0.05,
    reference: Reference = Reference.T,
    dropped: Sequence[DroppedBlock] = (),
    design: str = "blocked",
) -> PooledResult:
    """Weighted combination of block estimates.

    Parameters
    ----------
    blocks : Sequence[BlockResult]
        Retained blocks.
    scheme : BlockWeightScheme
        complier_size (n_b * pi_itt_b), block_size (n_b) or uniform.
    n : int
        Observations in the fitted model, units or clusters.
    num_covariates : int
        V.
    h : int
        Blocks in the fitted model; df = n - V - 2h.
    methods : Sequence[VarianceMethod]
        Methods whose block variances are pooled; the first is primary.
    alpha : float
        1 - confidence level.
    reference : Reference
        t or z.
    dropped : Sequence[DroppedBlock]
        Blocks removed before pooling, carried into the result.
    design : str
        Design name for the result.

    Returns
    -------
    PooledResult
        Pooled estimate, variances and inference.

    Raises
    ------
    AllBlocksDropped
        If there are no blocks or the weights sum to zero.
    InsufficientDf
        If the t reference is requested with df <= 0.
    """
    if not blocks:
        raise AllBlocksDropped("no block is left to pool")
    weights, warnings = block_weights(blocks, scheme)
    total = weights.sum()
    if not total > 0:
        raise AllBlocksDropped("the block weights sum to zero")

    tau_late_pooled = float(weights @ [block.tau_late_b for block in blocks]) / total

    def pooled_variance(values):
        return float(weights**2 @ np.asarray(values)) / total**2

    var_pooled = pooled_variance([block.var_qbar_b for block in blocks])

    df = n - num_covariates - 2 * h
    if Reference(reference) == Reference.T and df <= 0:
        raise InsufficientDf(f"t reference needs n - V - 2h > 0, got {df}")

    inference = {}
    for method in methods:
        variance = pooled_variance(
            [block.variances.get(method, block.var_qbar_b) for block in blocks]
        )
        inference[method] = infer(tau_late_pooled, variance, df, alpha, reference)

    sizes = np.array([block.n_b for block in blocks], dtype=float)
    return PooledResult(
        design=design,
        n=n,
        h=h,
        num_covariates=num_covariates,
        scheme=BlockWeightScheme(scheme).value,
        tau_itt=float(sizes @ [block.tau_itt_b for block in blocks]) / sizes.sum(),
        pi_itt=float(sizes @ [block.pi_itt_b for block in blocks]) / sizes.sum(),
        tau_late_pooled=tau_late_pooled,
        var_pooled=var_pooled,
        methods=inference,
        df=df,
        reference=reference,
        alpha=alpha,
        per_block=[
            block.model_copy(update={"weight_w_b": float(w)})
            for block, w in zip(blocks, weights)
        ],
        dropped_blocks=list(dropped),
        warnings=warnings,
    )


def fixed_effects_iv(
    data: Dataset, alpha: float = 0.05, reference: Reference = Reference.T
) -> LateResult:
    """Conventional 2SLS with block fixed effects and a common effect.

    Regresses y on (block dummies, d, x) with instruments (block dummies, T, x)
    and reports the homoskedastic IV variance with n - h - V - 1 df.
    """
    labels = block_labels(data)
    dummies = np.column_stack(
        [(labels == label).astype(float) for label in np.unique(labels)]
    )
    h = dummies.shape[1]
    num_covariates = data.num_covariates
    exogenous = np.column_stack([dummies, data.x])

    instruments = np.column_stack([dummies, data.t, data.x])
    first_stage = solve_least_squares(instruments, data.d)
    tau_itt = float(solve_least_squares(instruments, data.y)[h])
    pi_itt = float(first_stage[h])
    if abs(pi_itt) <= COMPLIANCE_TOLERANCE:
        raise ZeroComplianceEffect(
            f"estimated effect of assignment on receipt is {pi_itt:.3g}"
        )
    tau_late = tau_itt / pi_itt

    d_hat = instruments @ first_stage
    structural = solve_least_squares(
        np.column_stack([dummies, d_hat, data.x]), data.y
    )
    structural[h] = tau_late
    residuals = data.y - np.column_stack([dummies, data.d, data.x]) @ structural

    df = data.n - h - num_covariates - 1
    if df <= 0:
        raise InsufficientDf(f"fixed-effects IV needs n - h - V - 1 > 0, got {df}")
    s2 = float(residuals @ residuals) / df
    d_hat_residuals = d_hat - exogenous @ solve_least_squares(exogenous, d_hat)
    variance = s2 / float(d_hat_residuals @ d_hat_residuals)

    warnings = [WarningLabel.NEGATIVE_COMPLIANCE] if pi_itt < 0 else []
    return LateResult(
        design="fixed_effects_iv",
        n=data.n,
        arm_sizes=(data.n1, data.n - data.n1),
        num_covariates=num_covariates,
        tau_itt=tau_itt,
        pi_itt=pi_itt,
        tau_late=tau_late,
        methods={VarianceMethod.IV: infer(tau_late, variance, df, alpha, reference)},
        df=df,
        reference=reference,
        alpha=alpha,
        first_stage_f=f_statistic(data.d, data.t),
        warnings=warnings,
    )


def analyze_blocked(
    data: Dataset,
    methods: Sequence[VarianceMethod] = BLOCKED_METHODS,
    alpha: float = 0.05,
    reference: Reference = Reference.T,
    scheme: BlockWeightScheme = BlockWeightScheme.COMPLIER_SIZE,
    policy: BlockPolicy = BlockPolicy.ERROR,
    with_fixed_effects_iv: bool = False,
) -> PooledResult:
    """Full LATE analysis of a block-randomized trial.

    Returns
    -------
    PooledResult
        Pooled estimate with per-block detail, the first-stage F of the whole
        sample and, if requested, the fixed-effects IV comparison.
    """
    estimates = estimate_blocks(data, policy, methods)
    result = pool(
        estimates.blocks,
        scheme,
        estimates.n,
        data.num_covariates,
        estimates.h,
        methods=methods,
        alpha=alpha,
        reference=reference,
        dropped=estimates.dropped,
    )

    warnings = estimates.warnings + result.warnings
    f = f_statistic(data.d, data.t)
    if f < WEAK_INSTRUMENT_F:
        warnings.append(WarningLabel.WEAK_INSTRUMENT)
    log_warnings(warnings, "blocked design")

    comparison = None
    if with_fixed_effects_iv:
        comparison = fixed_effects_iv(data, alpha, reference)
    return result.model_copy(
        update={
            "first_stage_f": f,
            "warnings": list(dict.fromkeys(warnings)),
            "fixed_effects_iv": comparison,
        }
    )
