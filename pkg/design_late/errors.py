from typing import Optional


class LateError(Exception):
    """Base class of all errors raised by the package."""


class DomainError(LateError, ValueError):
    """An argument lies outside the domain of the operation."""


class TooLarge(LateError):
    """An exhaustive computation would exceed its size guard."""


class DataError(LateError):
    """Invalid input data.

    Attributes
    ----------
    row : Optional[int]
        1-based index of the offending data row (header excluded), if known.
    column : Optional[str]
        Name of the offending column, if known.
    """

    def __init__(
        self,
        message: str,
        *,
        row: Optional[int] = None,
        column: Optional[str] = None,
    ):
        self.row = row
        self.column = column
        locus = []
        if column is not None:
            locus.append(f"column '{column}'")
        if row is not None:
            locus.append(f"row {row}")
        if locus:
            message = f"{message} ({', '.join(locus)})"
        super().__init__(message)


class MissingColumn(DataError):
    pass


class NonBinaryValue(DataError):
    pass


class MissingValue(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class NonPositiveWeight(DataError):
    pass


class DegenerateArm(DataError):
    """A treatment or control group is empty."""


class EmptyArm(DegenerateArm):
    pass


class MixedAssignmentInCluster(DataError):
    pass


class InconsistentWeightColumn(DataError):
    pass


class NumericalError(LateError):
    """The data are valid but the requested quantity cannot be computed."""


class RankDeficient(NumericalError):
    pass


class ZeroComplianceEffect(NumericalError):
    pass


class InsufficientDf(NumericalError):
    pass


class AllBlocksDropped(NumericalError):
    pass


class IoError(LateError):
    """A report or preset could not be written."""


class UsageError(LateError):
    """Invalid command-line arguments."""
