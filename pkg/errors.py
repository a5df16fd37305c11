from typing import Optional


class AirQualityError(Exception):
    """Base class for every error raised by the library"""


class DataError(AirQualityError, ValueError):
    """Input data violates a documented contract"""


class SchemaError(DataError):
    """A table file is malformed; carries the offending row and column"""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        self.row = row
        self.column = column
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)


class OutOfBoundsError(DataError):
    """A lookup fell outside the spatial or temporal coverage of a field"""


class GridMismatchError(DataError):
    """Two grids that must agree do not"""


class UndefinedMetricError(DataError):
    """A metric is undefined for the given observations"""
