"""Spatio-temporal alignment of stations, meteorology and land cover."""
from typing import Dict, Optional, Tuple

import numpy as np

from core import TimestampLike, to_unix, wind
from errors import DataError, OutOfBoundsError
from models import LandCoverRaster, MeteoFieldSet, METEO_VARIABLES, SECONDS_PER_HOUR, SELECTED_CLASSES, StationSeries
from schemas import GeoPoint

DEFAULT_MAX_GAP = 2 * SECONDS_PER_HOUR

# Meteo features emitted per point; wind components become speed/direction
METEO_FEATURES = (
    "wind_speed",
    "wind_direction",
    "dewpoint_2m",
    "evaporation",
    "temp_2m",
    "precip_total",
    "surface_pressure",
    "blh",
    "ssrd",
)

_EDGE_TOLERANCE = 1e-9


def interp_observation(series: StationSeries, t: TimestampLike, max_gap: int = DEFAULT_MAX_GAP) -> Optional[float]:
    """Linear interpolation of a station series at instant t.

    Returns None when t is not bracketed by two samples at most `max_gap`
    seconds apart.
    """
    if max_gap <= 0:
        raise DataError(f"max_gap must be positive, got {max_gap}")

    t = to_unix(t)
    times, values = series.times, series.values
    i = int(np.searchsorted(times, t, side="left"))

    # Exact hit
    if i < times.size and times[i] == t:
        return float(values[i])
    if i == 0 or i == times.size:
        return None

    t0, t1 = int(times[i - 1]), int(times[i])
    if t1 - t0 > max_gap:
        return None

    w = (t - t0) / (t1 - t0)
    v0, v1 = float(values[i - 1]), float(values[i])
    value = v0 + w * (v1 - v0)
    # No overshoot past the bracketing samples
    return min(max(value, min(v0, v1)), max(v0, v1))


def _node_coordinates(fields: MeteoFieldSet, lats: np.ndarray, lons: np.ndarray):
    spec = fields.spec
    # Nodes sit on lat_min + row * cell_size
    y = (lats - spec.lat_min) / spec.cell_size
    x = (lons - spec.lon_min) / spec.cell_size
    return y, x


def meteo_covers(fields: MeteoFieldSet, lats, lons) -> np.ndarray:
    """Mask of points inside the node hull of the meteo grid"""
    y, x = _node_coordinates(fields, np.asarray(lats, dtype=np.float64), np.asarray(lons, dtype=np.float64))
    y_max, x_max = fields.spec.n_rows - 1, fields.spec.n_cols - 1
    return (
        (y >= -_EDGE_TOLERANCE) & (y <= y_max + _EDGE_TOLERANCE)
        & (x >= -_EDGE_TOLERANCE) & (x <= x_max + _EDGE_TOLERANCE)
    )


def meteo_spans(fields: MeteoFieldSet, t: int) -> bool:
    return bool(fields.times[0] <= t <= fields.times[-1])


def _bilinear_weights(fields: MeteoFieldSet, lats: np.ndarray, lons: np.ndarray):
    y, x = _node_coordinates(fields, lats, lons)
    y_max, x_max = fields.spec.n_rows - 1, fields.spec.n_cols - 1
    outside = ~meteo_covers(fields, lats, lons)
    if np.any(outside):
        bad = int(np.argmax(outside))
        raise OutOfBoundsError(
            f"point ({lats[bad]:.5f}, {lons[bad]:.5f}) lies outside the meteo grid"
        )
    # Snap to nodes so node coordinates reproduce node values exactly
    y = np.where(np.abs(y - np.round(y)) < _EDGE_TOLERANCE, np.round(y), y)
    x = np.where(np.abs(x - np.round(x)) < _EDGE_TOLERANCE, np.round(x), x)
    y = np.clip(y, 0, y_max)
    x = np.clip(x, 0, x_max)

    r0 = np.minimum(np.floor(y).astype(np.int64), max(y_max - 1, 0))
    c0 = np.minimum(np.floor(x).astype(np.int64), max(x_max - 1, 0))
    r1 = np.minimum(r0 + 1, y_max)
    c1 = np.minimum(c0 + 1, x_max)
    fy = y - r0
    fx = x - c0
    return r0, r1, c0, c1, fy, fx


def _time_weights(fields: MeteoFieldSet, t: int) -> Tuple[int, int, float]:
    times = fields.times
    if t < times[0] or t > times[-1]:
        raise OutOfBoundsError(f"time {t} outside meteo span [{times[0]}, {times[-1]}]")
    i0 = min(int((t - times[0]) // SECONDS_PER_HOUR), times.size - 1)
    i1 = min(i0 + 1, times.size - 1)
    w = (t - times[i0]) / SECONDS_PER_HOUR if i1 != i0 else 0.0
    return i0, i1, float(w)


def meteo_at_points(fields: MeteoFieldSet, lats, lons, t: TimestampLike) -> Dict[str, np.ndarray]:
    """Bilinear in space at the two bracketing hours, then linear in time"""
    lats = np.atleast_1d(np.asarray(lats, dtype=np.float64))
    lons = np.atleast_1d(np.asarray(lons, dtype=np.float64))
    t = to_unix(t)

    r0, r1, c0, c1, fy, fx = _bilinear_weights(fields, lats, lons)
    i0, i1, wt = _time_weights(fields, t)

    def sample(grid: np.ndarray) -> np.ndarray:
        def at_hour(layer):
            return ((1 - fy) * (1 - fx) * layer[r0, c0] + (1 - fy) * fx * layer[r0, c1]
                    + fy * (1 - fx) * layer[r1, c0] + fy * fx * layer[r1, c1])
        first = at_hour(grid[i0])
        if wt == 0.0:
            return first
        return (1 - wt) * first + wt * at_hour(grid[i1])

    values = {name: sample(fields.variables[name]) for name in METEO_VARIABLES}
    speed, direction = wind(values.pop("wind_u10"), values.pop("wind_v10"))
    values["wind_speed"] = np.atleast_1d(speed)
    values["wind_direction"] = np.atleast_1d(direction)
    return {name: values[name] for name in METEO_FEATURES}


def meteo_at(fields: MeteoFieldSet, p: GeoPoint, t: TimestampLike) -> Dict[str, float]:
    """Meteo feature values at one point and instant"""
    values = meteo_at_points(fields, [p.latitude], [p.longitude], t)
    return {name: float(array[0]) for name, array in values.items()}


def _pixel_window(raster: LandCoverRaster, lat_lo: float, lat_hi: float, lon_lo: float, lon_hi: float):
    spec = raster.spec
    lat_centres = spec.lat_min + (np.arange(spec.n_rows) + 0.5) * spec.cell_size
    lon_centres = spec.lon_min + (np.arange(spec.n_cols) + 0.5) * spec.cell_size
    r0, r1 = np.searchsorted(lat_centres, [lat_lo, lat_hi], side="left")
    c0, c1 = np.searchsorted(lon_centres, [lon_lo, lon_hi], side="left")
    return raster.codes[r0:r1, c0:c1]


def landcover_fractions(raster: LandCoverRaster, cell: Tuple[float, float, float, float]) -> Dict[str, float]:
    """Share of pixel centres inside the half-open cell carrying each selected class.

    `cell` is (lat_lo, lat_hi, lon_lo, lon_hi).
    """
    lat_lo, lat_hi, lon_lo, lon_hi = cell
    window = _pixel_window(raster, lat_lo, lat_hi, lon_lo, lon_hi)
    if window.size == 0:
        raise DataError(
            f"cell [{lat_lo:.4f}, {lat_hi:.4f}) x [{lon_lo:.4f}, {lon_hi:.4f}) "
            "contains no land cover pixel centres"
        )
    total = window.size
    return {
        name: float(np.count_nonzero(window == code)) / total
        for code, name in SELECTED_CLASSES.items()
    }
