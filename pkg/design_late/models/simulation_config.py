from typing import Optional

from pydantic import Field, field_validator, model_validator

from .results import VarianceMethod
from .run_config import SIMPLE_METHODS
from .utils import YamlBaseModel, find_duplicate


class SimulationConfig(YamlBaseModel):
    """Parameters of a Monte Carlo study of the simple design.

    Attributes
    ----------
    name : str
        Name of the preset.
    description : str
        Free text shown by `presets list`.
    n : int
        Population size.
    p : float
        Assignment rate; n1 = round(n * p) units are treated.
    dbar0, dbar1 : float
        Receipt rates under control and under treatment, i.e. the
        always-taker share and one minus the never-taker share.
    rho_delta_y0 : float
        Correlation of the latent receipt tendency with Y(0).
    r2_y0x : float
        R² of Y(0) on the covariate.
    rho_delta_theta : float
        Correlation of the latent receipt tendency with the treatment effect.
    sigma_theta2_rule : float
        Variance of the treatment effects as a multiple of Var(Y(0)).
    with_covariate : bool
        Adjust the estimators for the covariate.
    num_datasets : int
        Populations drawn; results are averaged over them.
    reps : int
        Random assignments per population.
    alpha : float
        1 - confidence level.
    seed : int
        Master seed of every random stream.
    variance_methods : list[VarianceMethod]
        Methods to evaluate.
    threads : int
        Worker threads of the replication pool.
    """

    name: str = Field(min_length=1)
    description: str = ""
    n: int = Field(ge=4)
    p: float = Field(default=0.5, gt=0, lt=1)
    dbar0: float = Field(ge=0, le=1)
    dbar1: float = Field(ge=0, le=1)
    rho_delta_y0: float = Field(default=0.3, gt=-1, lt=1)
    r2_y0x: float = Field(default=0.4, gt=0, lt=1)
    rho_delta_theta: float = Field(default=0.1, gt=-1, lt=1)
    sigma_theta2_rule: float = Field(default=1 / 3, ge=0)
    with_covariate: bool = False
    num_datasets: int = Field(default=5, ge=1)
    reps: int = Field(default=10_000, ge=2)
    alpha: float = Field(default=0.05, gt=0, lt=1)
    seed: int = Field(default=20240101, ge=0, lt=2**64)
    variance_methods: list[VarianceMethod] = list(SIMPLE_METHODS)
    threads: int = Field(default=1, ge=1)

    @field_validator("variance_methods", mode="after")
    @classmethod
    def check_methods(cls, v: list[VarianceMethod]) -> list[VarianceMethod]:
        """Ensures that at least one method is given and none twice."""
        if not v:
            raise ValueError("variance_methods must not be empty")
        duplicate = find_duplicate(v)
        if duplicate is not None:
            raise ValueError(f"variance method '{duplicate.value}' listed twice")
        return v

    @model_validator(mode="after")
    @classmethod
    def check_compliance(cls, values):
        """Ensures that the population has compliers."""
        if not values.dbar0 < values.dbar1:
            raise ValueError(
                f"dbar0 must be below dbar1, got {values.dbar0} and {values.dbar1}"
            )
        return values

    @model_validator(mode="after")
    @classmethod
    def check_arms(cls, values):
        """Ensures that both arms leave degrees of freedom for every method."""
        n1 = values.n1
        n0 = values.n - n1
        k = values.num_covariates
        if n1 - k * values.p - 1 <= 0 or n0 - k * (1 - values.p) - 1 <= 0:
            raise ValueError(f"n={values.n} and p={values.p} leave an arm too small")
        if values.n - k - 2 <= 0:
            raise ValueError("n is too small for the t reference")
        return values

    @property
    def n1(self) -> int:
        return int(round(self.n * self.p))

    @property
    def num_covariates(self) -> int:
        return 1 if self.with_covariate else 0

    def with_overrides(
        self,
        reps: Optional[int] = None,
        seed: Optional[int] = None,
        threads: Optional[int] = None,
    ) -> "SimulationConfig":
        """Returns a validated copy with command-line overrides applied."""
        update = {
            key: value
            for key, value in (("reps", reps), ("seed", seed), ("threads", threads))
            if value is not None
        }
        return self.model_validate({**self.model_dump(), **update})
