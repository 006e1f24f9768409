from typing import Optional

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field

from design_late.errors import DomainError
from design_late.utils import arrays_checksum


class PotentialPopulation(BaseModel):
    """A finite population with every potential outcome known.

    Use `PotentialPopulation.create` to build a validated instance.

    Attributes
    ----------
    y1, y0 : np.ndarray
        Potential outcomes under assignment to treatment and to control.
    d1, d0 : np.ndarray
        Potential treatment receipt, 0 or 1, with d1 >= d0.
    x : np.ndarray
        n×V covariates, V may be 0.
    delta : Optional[np.ndarray]
        Latent receipt tendency, only set for simulated populations.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    y1: np.ndarray
    y0: np.ndarray
    d1: np.ndarray
    d0: np.ndarray
    x: np.ndarray
    delta: Optional[np.ndarray] = None

    @classmethod
    def create(
        cls,
        *,
        y1: npt.ArrayLike,
        y0: npt.ArrayLike,
        d1: npt.ArrayLike,
        d0: npt.ArrayLike,
        x: Optional[npt.ArrayLike] = None,
        delta: Optional[npt.ArrayLike] = None,
    ) -> "PotentialPopulation":
        """Creates a population after checking monotonicity and exclusion.

        Raises
        ------
        DomainError
            If a unit is a defier, if an always-taker or never-taker has
            y1 != y0, or if the shapes disagree.
        """
        y1 = np.array(y1, dtype=float)
        y0 = np.array(y0, dtype=float)
        d1 = np.array(d1, dtype=float)
        d0 = np.array(d0, dtype=float)
        n = len(y1)
        x = np.empty((n, 0)) if x is None else np.array(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]

        if any(a.shape != (n,) for a in (y0, d1, d0)) or x.shape[0] != n:
            raise DomainError("all potential outcome arrays must have n entries")
        if n < 2:
            raise DomainError("a population needs at least two units")
        for values in (y1, y0, d1, d0, x):
            if not np.isfinite(values).all():
                raise DomainError("potential outcomes must be finite")
        for values in (d1, d0):
            if not np.isin(values, (0.0, 1.0)).all():
                raise DomainError("potential receipt must be 0 or 1")
        if (d1 < d0).any():
            raise DomainError("monotonicity violated: population contains defiers")
        noncompliers = d1 == d0
        if (y1[noncompliers] != y0[noncompliers]).any():
            raise DomainError(
                "exclusion violated: always-takers and never-takers need y1 == y0"
            )

        arrays = {"y1": y1, "y0": y0, "d1": d1, "d0": d0, "x": x}
        if delta is not None:
            arrays["delta"] = np.array(delta, dtype=float)
        for values in arrays.values():
            values.setflags(write=False)
        return cls(**arrays)

    @property
    def n(self) -> int:
        return len(self.y1)

    @property
    def num_covariates(self) -> int:
        return self.x.shape[1]

    def reveal(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Observed (y, d) under assignment `t`."""
        treated = t == 1
        return (
            np.where(treated, self.y1, self.y0),
            np.where(treated, self.d1, self.d0),
        )

    def checksum(self) -> str:
        """SHA-256 of all potential outcome arrays."""
        return arrays_checksum(self.y1, self.y0, self.d1, self.d0, self.x)


class TrueQuantities(BaseModel):
    """Finite-population truths of a `PotentialPopulation`.

    Attributes
    ----------
    tau_itt : float
        Effect of assignment on the outcome.
    pi_itt : float
        Effect of assignment on receipt, equal to the complier share.
    tau_10 : float
        Average effect among compliers, tau_itt / pi_itt.
    strata_shares : tuple[float, float, float]
        Shares of always-takers, compliers and never-takers.
    beta_star, gamma_star : list[float]
        Population covariate coefficients of the outcome and receipt models.
    var_qbar : Optional[float]
        Exact randomization variance of the linearized contrast.
    s2_r1, s2_r0, s2_r10, s2_tau : Optional[float]
        Residual variances of each arm, their covariance, and the
        heterogeneity term.
    """

    tau_itt: float
    pi_itt: float
    tau_10: float
    strata_shares: tuple[float, float, float]
    beta_star: list[float]
    gamma_star: list[float]
    var_qbar: Optional[float] = Field(default=None, ge=0)
    s2_r1: Optional[float] = None
    s2_r0: Optional[float] = None
    s2_r10: Optional[float] = None
    s2_tau: Optional[float] = None
