"""Timestamps, calendar features and wind derivation shared by every stage.

All instants are UTC with one-second resolution. Internally they travel as
integer unix seconds; `datetime` values only appear at the edges.
"""
from datetime import datetime, timezone
from typing import NamedTuple, Tuple, Union

import numpy as np
import pandas as pd
from dateutil import parser as date_parser
from dateutil import tz

from errors import DataError
from schemas import StationType

MIN_YEAR = 1979
MAX_YEAR = 2100

_MIN_UNIX = int(datetime(MIN_YEAR, 1, 1, tzinfo=timezone.utc).timestamp())
_MAX_UNIX = int(datetime(MAX_YEAR + 1, 1, 1, tzinfo=timezone.utc).timestamp()) - 1

TimestampLike = Union[int, np.integer, datetime, str]


class TemporalFeatures(NamedTuple):
    day_of_week: int
    day_of_year: int
    hour: int
    month: int
    year: int


def to_unix(t: TimestampLike) -> int:
    """Normalize a timestamp-like value to validated UTC unix seconds"""
    if isinstance(t, str):
        parsed = date_parser.isoparse(t.strip())
        if parsed.tzinfo is None:
            parsed = parsed.replace(tzinfo=tz.UTC)
        seconds = int(parsed.astimezone(tz.UTC).timestamp())
    elif isinstance(t, datetime):
        if t.tzinfo is None:
            raise DataError(f"naive datetime {t.isoformat()} is not allowed; use UTC")
        seconds = int(t.astimezone(tz.UTC).timestamp())
    else:
        seconds = int(t)

    if not _MIN_UNIX <= seconds <= _MAX_UNIX:
        raise DataError(f"timestamp {seconds} outside years {MIN_YEAR}-{MAX_YEAR}")
    return seconds


def from_unix(seconds: int) -> datetime:
    return datetime.fromtimestamp(to_unix(seconds), tz=tz.UTC)


def check_unix_array(seconds) -> np.ndarray:
    """Validate an array of unix seconds against the supported year range"""
    array = np.asarray(seconds, dtype=np.int64)
    if array.size and (array.min() < _MIN_UNIX or array.max() > _MAX_UNIX):
        raise DataError(f"timestamps outside years {MIN_YEAR}-{MAX_YEAR}")
    return array


def temporal_features(t: TimestampLike) -> TemporalFeatures:
    """Calendar features of a UTC instant (Monday = 1, Jan 1 = day 1)"""
    moment = from_unix(to_unix(t))
    return TemporalFeatures(
        day_of_week=moment.isoweekday(),
        day_of_year=moment.timetuple().tm_yday,
        hour=moment.hour,
        month=moment.month,
        year=moment.year,
    )


def temporal_feature_arrays(seconds) -> dict:
    """Vectorized temporal_features over unix seconds"""
    index = pd.to_datetime(check_unix_array(seconds), unit="s", utc=True)
    return {
        "day_of_week": (index.dayofweek + 1).to_numpy(dtype=np.float64),
        "day_of_year": index.dayofyear.to_numpy(dtype=np.float64),
        "hour": index.hour.to_numpy(dtype=np.float64),
        "month": index.month.to_numpy(dtype=np.float64),
        "year": index.year.to_numpy(dtype=np.float64),
    }


def wind(u, v) -> Tuple:
    """Speed and meteorological direction (blowing FROM, clockwise from north).

    Works on scalars and arrays alike. Calm air maps to direction 0.
    """
    u_arr = np.asarray(u, dtype=np.float64)
    v_arr = np.asarray(v, dtype=np.float64)
    if not (np.all(np.isfinite(u_arr)) and np.all(np.isfinite(v_arr))):
        raise DataError("wind components must be finite")

    speed = np.hypot(u_arr, v_arr)
    direction = np.mod(180.0 + np.degrees(np.arctan2(u_arr, v_arr)), 360.0)
    # mod can round up to exactly 360
    direction = np.where((speed == 0) | (direction >= 360.0), 0.0, direction)

    if speed.ndim == 0:
        return float(speed), float(direction)
    return speed, direction


def station_type_from_code(code) -> StationType:
    """Map the 1/2/3 code onto the station type enum"""
    try:
        return StationType(int(code))
    except (TypeError, ValueError):
        raise DataError(f"station type code must be 1, 2 or 3, got {code!r}")
