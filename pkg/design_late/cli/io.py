"""Reading trial data from CSV files."""

from pathlib import Path

import numpy as np
import pandas as pd

from design_late.errors import (
    DataError,
    MissingColumn,
    MissingValue,
    NonBinaryValue,
    NonFiniteValue,
    NonPositiveWeight,
)
from design_late.models.dataset import Dataset
from design_late.models.run_config import RunConfig


def _first_bad_row(mask) -> int:
    return int(np.flatnonzero(np.asarray(mask))[0]) + 1


def _numeric(frame: pd.DataFrame, column: str) -> np.ndarray:
    """Parses one column as floats.

    Raises
    ------
    NonFiniteValue
        If an entry is not a number or is NaN or infinite.
    """
    values = pd.to_numeric(frame[column].str.strip(), errors="coerce")
    bad = ~np.isfinite(values.to_numpy(dtype=float))
    if bad.any():
        index = int(np.flatnonzero(bad)[0])
        raise NonFiniteValue(
            f"'{frame[column].iloc[index]}' is not a finite number",
            row=index + 1,
            column=column,
        )
    return values.to_numpy(dtype=float)


def _binary(frame: pd.DataFrame, column: str) -> np.ndarray:
    values = _numeric(frame, column)
    bad = (values != 0) & (values != 1)
    if bad.any():
        raise NonBinaryValue(
            f"value must be 0 or 1, got {values[bad][0]:g}",
            row=_first_bad_row(bad),
            column=column,
        )
    return values


def read_frame(csv_path: Path) -> pd.DataFrame:
    """Reads a CSV file with a header row, keeping every entry as text.

    Blank lines are kept as empty rows so that row numbers match the file.

    Raises
    ------
    DataError
        If the file is missing, empty or malformed.
    """
    try:
        return pd.read_csv(
            csv_path, dtype=str, encoding="utf-8", skip_blank_lines=False
        )
    except FileNotFoundError as e:
        raise DataError(f"data file not found: {csv_path}") from e
    except pd.errors.EmptyDataError as e:
        raise DataError(f"data file is empty: {csv_path}") from e
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DataError(f"cannot parse {csv_path}: {e}") from e


def load_dataset(csv_path: Path, config: RunConfig) -> Dataset:
    """Builds a validated `Dataset` from the columns mapped in `config`.

    Rows are numbered from 1, not counting the header.

    Parameters
    ----------
    csv_path : Path
        Comma-separated file with a header row.
    config : RunConfig
        Column map and design.

    Returns
    -------
    Dataset
        Every row of the file.

    Raises
    ------
    MissingColumn
        If a mapped column is absent.
    MissingValue
        If a mapped column has an empty entry.
    NonFiniteValue, NonBinaryValue, NonPositiveWeight, EmptyArm
        If a value is invalid.
    """
    frame = read_frame(csv_path)
    columns = config.columns
    for name in columns.mapped():
        if name not in frame.columns:
            raise MissingColumn("column not found in the data file", column=name)

    for name in columns.mapped():
        missing = frame[name].isna() | (frame[name].str.strip() == "")
        if missing.any():
            raise MissingValue(
                "missing value", row=_first_bad_row(missing), column=name
            )

    y = _numeric(frame, columns.outcome)
    d = _binary(frame, columns.receipt)
    t = _binary(frame, columns.assignment)
    x = (
        np.column_stack([_numeric(frame, name) for name in columns.covariates])
        if columns.covariates
        else None
    )
    weight = None
    if columns.weight:
        weight = _numeric(frame, columns.weight)
        bad = weight <= 0
        if bad.any():
            raise NonPositiveWeight(
                "weight must be positive",
                row=_first_bad_row(bad),
                column=columns.weight,
            )

    def labels(name):
        return None if name is None else frame[name].str.strip().to_numpy(dtype=str)

    return Dataset.create(
        y=y,
        d=d,
        t=t,
        x=x,
        block_id=labels(columns.block),
        cluster_id=labels(columns.cluster),
        weight=weight,
        covariate_names=list(columns.covariates),
    )
