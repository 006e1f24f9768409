from enum import Enum
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from .results import Reference, VarianceMethod
from .utils import YamlBaseModel, find_duplicate


class Design(str, Enum):
    SIMPLE = "simple"
    BLOCKED = "blocked"
    CLUSTERED = "clustered"
    BLOCKED_CLUSTERED = "blocked_clustered"


class BlockPolicy(str, Enum):
    """What to do with a block that cannot be estimated."""

    ERROR = "error"
    DROP = "drop"


class BlockWeightScheme(str, Enum):
    COMPLIER_SIZE = "complier_size"
    BLOCK_SIZE = "block_size"
    UNIFORM = "uniform"


class ClusterWeightScheme(str, Enum):
    SIZE = "size"
    UNIFORM = "uniform"
    COLUMN = "column"


SIMPLE_METHODS = (VarianceMethod.DB, VarianceMethod.DB_BOUNDED, VarianceMethod.IV)
POOLED_METHODS = (VarianceMethod.DB, VarianceMethod.DB_BOUNDED)


class ColumnMap(BaseModel):
    """Names of the CSV columns holding each variable.

    Attributes
    ----------
    outcome : str
        Observed outcome.
    receipt : str
        Observed treatment receipt, 0 or 1.
    assignment : str
        Treatment assignment, 0 or 1.
    covariates : list[str]
        Baseline covariates, possibly none. Names must be unique.
    block : Optional[str]
        Block label, required by blocked designs.
    cluster : Optional[str]
        Cluster label, required by clustered designs.
    weight : Optional[str]
        Positive weight, required by the `column` cluster weight scheme.
    """

    outcome: str = Field(min_length=1)
    receipt: str = Field(min_length=1)
    assignment: str = Field(min_length=1)
    covariates: list[str] = []
    block: Optional[str] = None
    cluster: Optional[str] = None
    weight: Optional[str] = None

    @field_validator("covariates", mode="after")
    @classmethod
    def check_duplicate_covariates(cls, v: list[str]) -> list[str]:
        """Ensures that no covariate is listed twice."""
        duplicate = find_duplicate(v)
        if duplicate is not None:
            raise ValueError(f"covariate '{duplicate}' was listed multiple times")
        return v

    def mapped(self) -> list[str]:
        """All mapped column names, in a stable order."""
        names = [self.outcome, self.receipt, self.assignment, *self.covariates]
        names.extend(c for c in (self.block, self.cluster, self.weight) if c)
        return names


class RunConfig(YamlBaseModel):
    """Settings of an `estimate` or `diagnose` run.

    Attributes
    ----------
    design : Design
        Randomization design.
    columns : ColumnMap
        Where each variable lives in the CSV file.
    variance_methods : Optional[list[VarianceMethod]]
        Methods to report, the first is the primary one. Defaults to all
        methods available for the design.
    inference : Reference
        t or z reference distribution.
    alpha : float
        1 - confidence level.
    block_policy : BlockPolicy
        Handling of blocks without both arms or without compliance.
    block_weight_scheme : BlockWeightScheme
        Pooling weights across blocks.
    weight_scheme : ClusterWeightScheme
        Cluster weights.
    fixed_effects_iv : bool
        Also report the IV model with block fixed effects (blocked design).
    output_path : Optional[Path]
        Default report path, overridden by `--out`.
    """

    design: Design = Design.SIMPLE
    columns: ColumnMap
    variance_methods: Optional[list[VarianceMethod]] = None
    inference: Reference = Reference.T
    alpha: float = Field(default=0.05, gt=0, lt=1)
    block_policy: BlockPolicy = BlockPolicy.ERROR
    block_weight_scheme: BlockWeightScheme = BlockWeightScheme.COMPLIER_SIZE
    weight_scheme: ClusterWeightScheme = ClusterWeightScheme.SIZE
    fixed_effects_iv: bool = False
    output_path: Optional[Path] = None

    @model_validator(mode="after")
    @classmethod
    def check_design_columns(cls, values):
        """Ensures that the columns needed by the design are mapped."""
        design = values.design
        columns = values.columns
        if design in (Design.BLOCKED, Design.BLOCKED_CLUSTERED) and not columns.block:
            raise ValueError(f"design '{design.value}' needs a block column")
        clustered = design in (Design.CLUSTERED, Design.BLOCKED_CLUSTERED)
        if clustered and not columns.cluster:
            raise ValueError(f"design '{design.value}' needs a cluster column")
        if values.weight_scheme == ClusterWeightScheme.COLUMN and not columns.weight:
            raise ValueError("weight scheme 'column' needs a weight column")
        duplicate = find_duplicate(columns.mapped())
        if duplicate is not None:
            raise ValueError(f"column '{duplicate}' is mapped to multiple variables")
        return values

    @model_validator(mode="after")
    @classmethod
    def check_methods(cls, values):
        """Ensures that the variance methods are available for the design."""
        methods = values.variance_methods
        if methods is None:
            return values
        if not methods:
            raise ValueError("variance_methods must not be empty")
        duplicate = find_duplicate(methods)
        if duplicate is not None:
            raise ValueError(f"variance method '{duplicate.value}' listed twice")
        if values.design != Design.SIMPLE and VarianceMethod.IV in methods:
            raise ValueError(
                f"the 'iv' variance is only available for the simple design; "
                f"use fixed_effects_iv for '{values.design.value}'"
            )
        return values

    @model_validator(mode="after")
    @classmethod
    def check_fixed_effects_iv(cls, values):
        """Ensures that the fixed-effects IV model is only asked of blocked designs."""
        if values.fixed_effects_iv and values.design != Design.BLOCKED:
            raise ValueError("fixed_effects_iv requires the blocked design")
        return values

    def methods(self) -> tuple[VarianceMethod, ...]:
        """Requested variance methods, or the design's defaults."""
        if self.variance_methods is not None:
            return tuple(self.variance_methods)
        return SIMPLE_METHODS if self.design == Design.SIMPLE else POOLED_METHODS
