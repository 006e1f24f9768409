"""JSON and CSV reports of estimation, diagnostic and simulation results.

Floats are written with their shortest round-trip representation in both
formats, so a report read back gives the exact numbers that were computed.
"""

import json
import sys
from enum import Enum
from pathlib import Path
from typing import Any, Optional, Union

import pandas as pd
from pydantic import BaseModel

from design_late.errors import IoError
from design_late.models.results import (
    Diagnostics,
    LateResult,
    PooledResult,
    SimulationSummary,
)

Report = Union[LateResult, PooledResult, SimulationSummary, Diagnostics]


class ReportFormat(str, Enum):
    JSON = "json"
    CSV = "csv"

    @classmethod
    def from_path(cls, path: Optional[Path]) -> "ReportFormat":
        """CSV for `.csv` files, JSON otherwise."""
        if path is not None and path.suffix.lower() == ".csv":
            return cls.CSV
        return cls.JSON


def _plain(value: Any) -> Any:
    """Replaces enums, tuples and enum keys with plain JSON types."""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {_plain(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    return value


def to_dict(result: BaseModel) -> dict[str, Any]:
    """Report document of `result`.

    Estimation results always carry `tau_late` and `variance_components`
    keys, pooled results also carry the per-block estimates.
    """
    data = _plain(result.model_dump())
    if isinstance(result, LateResult):
        data["variance_components"] = data.pop("components")
    elif isinstance(result, PooledResult):
        data["tau_late"] = result.tau_late_pooled
        data["variance_components"] = None
    return data


def _shared_fields(data: dict[str, Any], keys: tuple[str, ...]) -> dict[str, Any]:
    return {key: data.get(key) for key in keys}


def to_rows(result: BaseModel) -> list[dict[str, Any]]:
    """Flat CSV rows of `result`, one per variance method."""
    data = to_dict(result)
    if isinstance(result, SimulationSummary):
        shared = _shared_fields(
            data,
            ("name", "n", "n1", "with_covariate", "num_datasets", "reps", "seed"),
        )
        extras = _shared_fields(
            data, ("naive_ols_bias", "oracle_se", "mean_first_stage_f")
        )
        return [
            {**shared, "method": method, **summary, **extras}
            for method, summary in data["methods"].items()
        ]
    if isinstance(result, Diagnostics):
        row = dict(data)
        row["arm_sizes"] = ";".join(str(size) for size in data["arm_sizes"])
        row["receipt_rates"] = ";".join(repr(rate) for rate in data["receipt_rates"])
        return [row]

    shared = _shared_fields(
        data, ("design", "n", "m", "h", "tau_itt", "pi_itt", "tau_late")
    )
    tail = _shared_fields(data, ("df", "reference", "alpha", "first_stage_f"))
    tail["warnings"] = ";".join(data["warnings"])
    return [
        {**shared, "method": method, **inference, **tail}
        for method, inference in data["methods"].items()
    ]


def write_report(
    result: Report,
    path: Optional[Path] = None,
    report_format: Optional[ReportFormat] = None,
) -> None:
    """Writes `result` as JSON or CSV.

    Parameters
    ----------
    result : Report
        Finished result.
    path : Path, optional
        Output file; standard output if None.
    report_format : ReportFormat, optional
        Defaults to CSV for `.csv` paths and JSON otherwise.

    Raises
    ------
    IoError
        If the file cannot be written.
    """
    report_format = ReportFormat(report_format or ReportFormat.from_path(path))
    if report_format == ReportFormat.JSON:
        text = json.dumps(to_dict(result), indent=2) + "\n"
    else:
        text = pd.DataFrame(to_rows(result)).to_csv(index=False, lineterminator="\n")

    if path is None:
        sys.stdout.write(text)
        return
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write report to {path}: {e}") from e
