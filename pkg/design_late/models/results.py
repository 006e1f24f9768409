import math
from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field, model_validator


class WarningLabel(str, Enum):
    """Diagnostics attached to results without stopping estimation."""

    WEAK_INSTRUMENT = "WeakInstrument"
    NEGATIVE_COMPLIANCE = "NegativeCompliance"
    FLOORED_VARIANCE = "FlooredVariance"
    NEGATIVE_WEIGHT = "NegativeWeight"
    DROPPED_BLOCK = "DroppedBlock"


class VarianceMethod(str, Enum):
    DB = "db"
    DB_BOUNDED = "db_bounded"
    IV = "iv"


class Reference(str, Enum):
    T = "t"
    Z = "z"


class ArmComponents(BaseModel):
    """The outcome, receipt and covariance parts of one arm's residual variance.

    Attributes
    ----------
    s2_ry : float
        Outcome-model part.
    s2_rd : float
        Receipt-model part, nonnegative.
    s2_ryd : float
        Outcome-receipt covariance part, of either sign.
    s2_r : float
        Their sum.
    """

    s2_ry: float
    s2_rd: float
    s2_ryd: float
    s2_r: float


class VarianceComponents(BaseModel):
    treatment: ArmComponents
    control: ArmComponents


class Inference(BaseModel):
    """Variance estimate of one method and the inference based on it."""

    variance: float = Field(ge=0)
    se: float = Field(ge=0)
    ci_lower: float
    ci_upper: float
    t_stat: float
    p_value: float = Field(ge=0, le=1)


class LateResult(BaseModel):
    """LATE estimate of a simple or clustered design.

    Attributes
    ----------
    design : str
        "simple" or "clustered".
    n : int
        Number of units.
    m : Optional[int]
        Number of clusters, for clustered designs.
    arm_sizes : tuple[int, int]
        Treated and control units (clusters for clustered designs).
    num_covariates : int
        V.
    tau_itt, pi_itt, tau_late : float
        ITT effects on outcome and receipt, and their ratio.
    itt_se : Optional[float]
        Design-based standard error of tau_itt.
    methods : dict[VarianceMethod, Inference]
        Variance and inference for every requested method, in request order.
    components : Optional[VarianceComponents]
        Decomposition of the design-based residual variances.
    df : float
        Degrees of freedom of the t reference.
    reference : Reference
        Reference distribution of the tests.
    alpha : float
        1 - confidence level.
    first_stage_f : float
        F statistic of the no-covariate first stage, may be +inf.
    warnings : list[WarningLabel]
        Diagnostics.
    """

    design: str = "simple"
    n: int
    m: Optional[int] = None
    arm_sizes: tuple[int, int]
    num_covariates: int
    tau_itt: float
    pi_itt: float
    tau_late: float
    itt_se: Optional[float] = None
    methods: dict[VarianceMethod, Inference] = {}
    components: Optional[VarianceComponents] = None
    df: float
    reference: Reference = Reference.T
    alpha: float = 0.05
    first_stage_f: float = Field(ge=0)
    warnings: list[WarningLabel] = []

    @model_validator(mode="after")
    @classmethod
    def check_ratio(cls, values):
        """Ensures that tau_late * pi_itt reproduces tau_itt."""
        product = values.tau_late * values.pi_itt
        scale = max(abs(values.tau_itt), abs(product), 1.0)
        if abs(product - values.tau_itt) > 1e-10 * scale:
            raise ValueError("tau_late * pi_itt must equal tau_itt")
        return values

    @property
    def variance(self) -> dict[VarianceMethod, float]:
        return {method: inf.variance for method, inf in self.methods.items()}

    @property
    def primary(self) -> Inference:
        """Inference of the first requested method."""
        return next(iter(self.methods.values()))

    @property
    def ci(self) -> tuple[float, float]:
        return self.primary.ci_lower, self.primary.ci_upper

    @property
    def t_stat(self) -> float:
        return self.primary.t_stat

    @property
    def p_value(self) -> float:
        return self.primary.p_value


class BlockResult(BaseModel):
    """Estimates of one block of a blocked design.

    Attributes
    ----------
    label : str
        Block label.
    n_b : int
        Units in the block (for clustered blocks, units summed over clusters).
    m_b : Optional[int]
        Clusters in the block, for blocked clustered designs.
    arm_sizes : tuple[int, int]
        Treated and control units (clusters for clustered blocks).
    tau_itt_b, pi_itt_b, tau_late_b : float
        Block ITT effects and their ratio.
    var_qbar_b : float
        Design-based variance estimate of tau_late_b.
    variances : dict[VarianceMethod, float]
        Variance estimate for every requested method.
    weight_w_b : float
        Pooling weight.
    """

    label: str
    n_b: int
    m_b: Optional[int] = None
    arm_sizes: tuple[int, int]
    tau_itt_b: float
    pi_itt_b: float
    tau_late_b: float
    var_qbar_b: float = Field(ge=0)
    variances: dict[VarianceMethod, float] = {}
    weight_w_b: float = Field(default=0.0, ge=0)


class DroppedBlock(BaseModel):
    label: str
    reason: str


class PooledResult(BaseModel):
    """Complier-weighted pooling of block estimates.

    Attributes
    ----------
    design : str
        "blocked" or "blocked_clustered".
    n : int
        Units.
    m : Optional[int]
        Clusters, for blocked clustered designs.
    h : int
        Blocks in the model.
    num_covariates : int
        V.
    scheme : str
        Block weighting scheme.
    tau_itt, pi_itt : float
        Block-size weighted means of the block ITT estimates.
    tau_late_pooled : float
        Weighted mean of the retained block LATE estimates.
    var_pooled : float
        Pooled design-based variance.
    methods : dict[VarianceMethod, Inference]
        Pooled variance and inference per method.
    df : float
        Degrees of freedom of the t reference.
    per_block : list[BlockResult]
        Retained blocks in label order.
    dropped_blocks : list[DroppedBlock]
        Blocks removed by the drop policy.
    first_stage_f : float
        F statistic of the no-covariate first stage on the whole sample.
    warnings : list[WarningLabel]
        Diagnostics.
    fixed_effects_iv : Optional[LateResult]
        Conventional IV fit with block fixed effects, when requested.
    """

    design: str = "blocked"
    n: int
    m: Optional[int] = None
    h: int
    num_covariates: int
    scheme: str
    tau_itt: float
    pi_itt: float
    tau_late_pooled: float
    var_pooled: float = Field(ge=0)
    methods: dict[VarianceMethod, Inference] = {}
    df: float
    reference: Reference = Reference.T
    alpha: float = 0.05
    per_block: list[BlockResult]
    dropped_blocks: list[DroppedBlock] = []
    first_stage_f: float = Field(default=math.inf, ge=0)
    warnings: list[WarningLabel] = []
    fixed_effects_iv: Optional[LateResult] = None

    @property
    def tau_late(self) -> float:
        return self.tau_late_pooled

    @property
    def primary(self) -> Inference:
        return next(iter(self.methods.values()))


class MethodSummary(BaseModel):
    """Monte Carlo performance of one variance method, averaged over datasets.

    Attributes
    ----------
    bias : float
        Mean estimate minus the dataset's true LATE.
    coverage : float
        Share of confidence intervals containing the true LATE.
    true_se : float
        Standard deviation of the estimates across replications.
    mean_est_se : float
        Mean estimated standard error.
    rejected_replications : int
        Replications without a defined estimate, summed over datasets.
    """

    bias: float
    coverage: float = Field(ge=0, le=1)
    true_se: float = Field(ge=0)
    mean_est_se: float = Field(ge=0)
    rejected_replications: int = Field(ge=0)


class SimulationSummary(BaseModel):
    """Result of a Monte Carlo run.

    Attributes
    ----------
    name : str
        Name of the simulation config.
    n, n1 : int
        Population size and number treated.
    with_covariate : bool
        Whether the LATE models adjust for the covariate.
    num_datasets, reps : int
        Populations drawn and replications per population.
    seed : int
        Master seed.
    methods : dict[VarianceMethod, MethodSummary]
        Performance per variance method.
    naive_ols_bias : float
        Bias of the one-stage regression of y on d.
    oracle_se : float
        Mean over datasets of the exact standard error of the linearized
        contrast.
    mean_first_stage_f : float
        Mean first-stage F statistic.
    dataset_checksums : list[str]
        Checksums of the fixed populations.
    """

    name: str
    n: int
    n1: int
    with_covariate: bool
    num_datasets: int
    reps: int
    seed: int
    methods: dict[VarianceMethod, MethodSummary]
    naive_ols_bias: float
    oracle_se: float = Field(ge=0)
    mean_first_stage_f: float
    dataset_checksums: list[str]


class Diagnostics(BaseModel):
    """First-stage checks of a dataset, reported by `diagnose`.

    Attributes
    ----------
    design : str
        Randomization design of the run config.
    n : int
        Units.
    arm_sizes : tuple[int, int]
        Treated and control units.
    receipt_rates : tuple[float, float]
        Share receiving the treatment in each arm.
    compliance_effect : float
        Difference of the receipt rates.
    first_stage_f : float
        F statistic of receipt on assignment.
    weak_instrument : bool
        Whether the F statistic is below the weak-instrument threshold.
    threshold : float
        The threshold.
    h : Optional[int]
        Blocks, for blocked designs.
    m : Optional[int]
        Clusters, for clustered designs.
    cluster_first_stage_f : Optional[float]
        F statistic of the cluster-level first stage.
    """

    design: str
    n: int
    arm_sizes: tuple[int, int]
    receipt_rates: tuple[float, float]
    compliance_effect: float
    first_stage_f: float = Field(ge=0)
    weak_instrument: bool
    threshold: float
    h: Optional[int] = None
    m: Optional[int] = None
    cluster_first_stage_f: Optional[float] = None
