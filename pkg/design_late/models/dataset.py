from typing import Optional

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict

from design_late.errors import (
    DomainError,
    EmptyArm,
    NonBinaryValue,
    NonFiniteValue,
    NonPositiveWeight,
)


def _first_bad_row(mask: np.ndarray) -> int:
    """1-based index of the first True entry of `mask`."""
    return int(np.flatnonzero(mask)[0]) + 1


def _readonly(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


class Dataset(BaseModel):
    """Observed data of a randomized trial.

    Use `Dataset.create` to build a validated instance.

    Attributes
    ----------
    y : np.ndarray
        Observed outcomes.
    d : np.ndarray
        Observed treatment receipt, 0 or 1.
    t : np.ndarray
        Treatment assignment, 0 or 1.
    x : np.ndarray
        n×V covariate matrix, V may be 0.
    block_id : Optional[np.ndarray]
        Block labels.
    cluster_id : Optional[np.ndarray]
        Cluster labels.
    weight : Optional[np.ndarray]
        Positive weights, the source of cluster weights.
    covariate_names : list[str]
        Names of the covariate columns, for reports.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    y: np.ndarray
    d: np.ndarray
    t: np.ndarray
    x: np.ndarray
    block_id: Optional[np.ndarray] = None
    cluster_id: Optional[np.ndarray] = None
    weight: Optional[np.ndarray] = None
    covariate_names: list[str] = []

    @classmethod
    def create(
        cls,
        *,
        y: npt.ArrayLike,
        d: npt.ArrayLike,
        t: npt.ArrayLike,
        x: Optional[npt.ArrayLike] = None,
        block_id: Optional[npt.ArrayLike] = None,
        cluster_id: Optional[npt.ArrayLike] = None,
        weight: Optional[npt.ArrayLike] = None,
        covariate_names: Optional[list[str]] = None,
    ) -> "Dataset":
        """Creates a validated `Dataset`.

        Raises
        ------
        NonBinaryValue
            If `d` or `t` holds anything other than 0 and 1.
        NonFiniteValue
            If a numeric entry is NaN or infinite.
        NonPositiveWeight
            If a weight is not positive.
        EmptyArm
            If the treatment or the control group is empty.
        DomainError
            If the lengths of the columns disagree.
        """
        y = np.asarray(y, dtype=float).copy()
        d = np.asarray(d, dtype=float).copy()
        t = np.asarray(t, dtype=float).copy()
        n = len(y)
        if x is None:
            x = np.empty((n, 0))
        x = np.asarray(x, dtype=float).copy()
        if x.ndim == 1:
            x = x[:, None]

        if d.shape != (n,) or t.shape != (n,) or x.shape[0] != n:
            raise DomainError("y, d, t and x must have the same number of rows")
        for values, name in ((block_id, "block"), (cluster_id, "cluster")):
            if values is not None and len(values) != n:
                raise DomainError(f"{name} labels must have {n} entries")

        for values, name in ((y, "outcome"), (d, "receipt"), (t, "assignment")):
            bad = ~np.isfinite(values)
            if bad.any():
                raise NonFiniteValue(
                    "value is not a finite number", row=_first_bad_row(bad), column=name
                )
        bad_rows = ~np.isfinite(x).all(axis=1)
        if bad_rows.any():
            raise NonFiniteValue(
                "covariate is not a finite number", row=_first_bad_row(bad_rows)
            )

        for values, name in ((d, "receipt"), (t, "assignment")):
            bad = (values != 0) & (values != 1)
            if bad.any():
                raise NonBinaryValue(
                    "value must be 0 or 1", row=_first_bad_row(bad), column=name
                )

        if weight is not None:
            weight = np.asarray(weight, dtype=float).copy()
            if weight.shape != (n,):
                raise DomainError(f"weights must have {n} entries")
            bad = ~np.isfinite(weight)
            if bad.any():
                raise NonFiniteValue(
                    "weight is not a finite number",
                    row=_first_bad_row(bad),
                    column="weight",
                )
            bad = weight <= 0
            if bad.any():
                raise NonPositiveWeight(
                    "weight must be positive", row=_first_bad_row(bad), column="weight"
                )

        n1 = int(t.sum())
        if n1 == 0 or n1 == n:
            raise EmptyArm(
                f"both arms must be nonempty, got {n1} treated out of {n}",
                column="assignment",
            )

        names = list(covariate_names or [f"x{v + 1}" for v in range(x.shape[1])])
        if len(names) != x.shape[1]:
            raise DomainError("one name is needed per covariate column")

        return cls(
            y=_readonly(y),
            d=_readonly(d),
            t=_readonly(t),
            x=_readonly(x),
            block_id=None if block_id is None else _readonly(np.asarray(block_id)),
            cluster_id=(
                None if cluster_id is None else _readonly(np.asarray(cluster_id))
            ),
            weight=None if weight is None else _readonly(weight),
            covariate_names=names,
        )

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def n1(self) -> int:
        return int(self.t.sum())

    @property
    def num_covariates(self) -> int:
        return self.x.shape[1]

    def subset(self, mask: np.ndarray) -> "Dataset":
        """Returns a validated dataset made of the rows selected by `mask`."""

        def pick(values):
            return None if values is None else values[mask]

        return Dataset.create(
            y=self.y[mask],
            d=self.d[mask],
            t=self.t[mask],
            x=self.x[mask],
            block_id=pick(self.block_id),
            cluster_id=pick(self.cluster_id),
            weight=pick(self.weight),
            covariate_names=self.covariate_names,
        )


class ClusterDataset(BaseModel):
    """Cluster-level aggregates of a cluster-randomized trial.

    Attributes
    ----------
    labels : np.ndarray
        Cluster labels, sorted.
    t : np.ndarray
        Cluster assignment, 0 or 1.
    w : np.ndarray
        Positive cluster weights.
    ybar : np.ndarray
        Within-cluster mean outcomes.
    dbar : np.ndarray
        Within-cluster mean receipt, in [0, 1].
    xbar : np.ndarray
        m×V within-cluster covariate means.
    sizes : np.ndarray
        Number of units in each cluster.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    labels: np.ndarray
    t: np.ndarray
    w: np.ndarray
    ybar: np.ndarray
    dbar: np.ndarray
    xbar: np.ndarray
    sizes: np.ndarray

    @property
    def m(self) -> int:
        return len(self.t)

    @property
    def m1(self) -> int:
        return int(self.t.sum())

    @property
    def n(self) -> int:
        return int(self.sizes.sum())

    @property
    def num_covariates(self) -> int:
        return self.xbar.shape[1]
