"""Readers and writers for the plain-text interchange files.

All CSVs are UTF-8 with LF line endings and `.` decimals; floats are written
with 17 significant digits so they read back bit-exactly.
"""
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union
import logging

import numpy as np
import pandas as pd
from pydantic import ValidationError

from core import check_unix_array, station_type_from_code
from errors import DataError, SchemaError
from models import (
    ElevationRaster,
    GridField,
    LandCoverRaster,
    METEO_VARIABLES,
    MeteoFieldSet,
    StationSeries,
)
from schemas import GeoPoint, GridSpec, StationMeta

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
FLOAT_FORMAT = "%.17g"

_SPEC_KEYS = ("lat_min", "lon_min", "cell_size", "n_rows", "n_cols")


def _check_exists(path: PathLike) -> Path:
    path = Path(path)
    if not path.exists():
        raise DataError(f"File not found: {path}")
    return path


def read_csv(path: PathLike, columns: Iterable[str], dtype: Optional[dict] = None) -> pd.DataFrame:
    """Read a CSV and insist on an exact column set"""
    path = _check_exists(path)
    try:
        frame = pd.read_csv(path, dtype=dtype, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as exc:
        raise SchemaError(f"{path}: cannot parse CSV: {exc}")

    columns = list(columns)
    for column in columns:
        if column not in frame.columns:
            raise SchemaError(f"{path}: missing column", column=column)
    extra = [c for c in frame.columns if c not in columns]
    if extra:
        raise SchemaError(f"{path}: unexpected column", column=str(extra[0]))
    for column in columns:
        if frame[column].isna().any():
            row = int(np.argmax(frame[column].isna().to_numpy()))
            raise SchemaError(f"{path}: empty value", row=row, column=column)
    return frame[columns]


def write_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")
    return path


def sidecar_path(path: PathLike) -> Path:
    """`fields/x.csv` -> `fields/x.spec`"""
    return Path(path).with_suffix(".spec")


# Grid spec sidecars
def format_spec(spec: GridSpec, extra: Optional[Dict[str, object]] = None) -> str:
    tokens = [f"{key}={getattr(spec, key)!r}" for key in _SPEC_KEYS]
    for key, value in (extra or {}).items():
        tokens.append(f"{key}={'none' if value is None else value}")
    return " ".join(tokens)


def parse_spec_line(line: str, source: str = "<spec>") -> Dict[str, str]:
    tokens = {}
    for token in line.split():
        if "=" not in token:
            raise DataError(f"{source}: malformed spec token {token!r}")
        key, value = token.split("=", 1)
        tokens[key] = value
    missing = [key for key in _SPEC_KEYS if key not in tokens]
    if missing:
        raise DataError(f"{source}: spec lacks {', '.join(missing)}")
    return tokens


def _spec_from_tokens(tokens: Dict[str, str], source: str) -> GridSpec:
    try:
        return GridSpec(
            lat_min=float(tokens["lat_min"]),
            lon_min=float(tokens["lon_min"]),
            cell_size=float(tokens["cell_size"]),
            n_rows=int(tokens["n_rows"]),
            n_cols=int(tokens["n_cols"]),
        )
    except (ValueError, ValidationError) as exc:
        raise DataError(f"{source}: invalid grid spec: {exc}")


def read_spec(path: PathLike) -> GridSpec:
    path = _check_exists(path)
    line = path.read_text(encoding="utf-8").strip().splitlines()[0]
    return _spec_from_tokens(parse_spec_line(line, str(path)), str(path))


def write_spec(spec: GridSpec, path: PathLike, extra: Optional[Dict[str, object]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_spec(spec, extra) + "\n", encoding="utf-8")
    return path


def _cells_to_array(frame: pd.DataFrame, column: str, spec: GridSpec, fill, dtype, path) -> np.ndarray:
    rows = frame["row"].to_numpy(dtype=np.int64)
    cols = frame["col"].to_numpy(dtype=np.int64)
    bad = (rows < 0) | (rows >= spec.n_rows) | (cols < 0) | (cols >= spec.n_cols)
    if bad.any():
        raise SchemaError(f"{path}: cell outside grid", row=int(np.argmax(bad)), column="row")
    array = np.full((spec.n_rows, spec.n_cols), fill, dtype=dtype)
    array[rows, cols] = frame[column].to_numpy(dtype=dtype)
    return array


# Swaths
SWATH_COLUMNS = ["lat", "lon", "value", "qa", "time_unix"]


def read_swath(path: PathLike) -> pd.DataFrame:
    frame = read_csv(path, SWATH_COLUMNS)
    values = frame[["lat", "lon", "value", "qa"]].to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(values)):
        row, col = np.argwhere(~np.isfinite(values))[0]
        raise SchemaError(f"{path}: non-finite value", row=int(row), column=["lat", "lon", "value", "qa"][col])
    check_unix_array(frame["time_unix"])
    return frame


def write_swath(frame: pd.DataFrame, path: PathLike) -> Path:
    return write_csv(frame[SWATH_COLUMNS], path)


# Grid fields
def write_grid_field(field: GridField, path: PathLike) -> Path:
    """Non-empty cells as `row,col,value,count` plus a `.spec` sidecar"""
    rows, cols = np.nonzero(field.count)
    frame = pd.DataFrame({
        "row": rows,
        "col": cols,
        "value": field.mean[rows, cols],
        "count": field.count[rows, cols],
    })
    write_spec(field.spec, sidecar_path(path), {
        "variable": field.variable or "none",
        "overpass_time": field.overpass_time,
    })
    return write_csv(frame, path)


def read_grid_field(path: PathLike) -> GridField:
    path = _check_exists(path)
    side = _check_exists(sidecar_path(path))
    tokens = parse_spec_line(side.read_text(encoding="utf-8").strip(), str(side))
    spec = _spec_from_tokens(tokens, str(side))

    frame = read_csv(path, ["row", "col", "value", "count"])
    if (frame["count"] <= 0).any():
        raise SchemaError(f"{path}: count must be positive", row=int(np.argmax((frame["count"] <= 0).to_numpy())), column="count")
    overpass = tokens.get("overpass_time", "none")
    variable = tokens.get("variable", "none")
    try:
        return GridField(
            spec=spec,
            mean=_cells_to_array(frame, "value", spec, np.nan, np.float64, path),
            count=_cells_to_array(frame, "count", spec, 0, np.int64, path),
            overpass_time=None if overpass == "none" else int(overpass),
            variable="" if variable == "none" else variable,
        )
    except ValidationError as exc:
        raise DataError(f"{path}: invalid grid field: {exc}")


# Stations
STATION_COLUMNS = ["station_id", "lat", "lon", "altitude_m", "station_type_code"]
SERIES_COLUMNS = ["station_id", "time_unix", "value"]


def read_stations(path: PathLike) -> List[StationMeta]:
    frame = read_csv(path, STATION_COLUMNS, dtype={"station_id": str})
    stations = []
    for i, record in enumerate(frame.itertuples(index=False)):
        try:
            stations.append(StationMeta(
                station_id=record.station_id,
                location=GeoPoint(latitude=record.lat, longitude=record.lon, altitude=record.altitude_m),
                station_type=station_type_from_code(record.station_type_code),
            ))
        except (ValidationError, DataError) as exc:
            raise SchemaError(f"{path}: invalid station: {exc}", row=i)

    ids = [s.station_id for s in stations]
    if len(set(ids)) != len(ids):
        duplicate = next(i for i in ids if ids.count(i) > 1)
        raise DataError(f"{path}: duplicate station_id {duplicate!r}")
    return stations


def write_stations(stations: List[StationMeta], path: PathLike) -> Path:
    frame = pd.DataFrame({
        "station_id": [s.station_id for s in stations],
        "lat": [s.location.latitude for s in stations],
        "lon": [s.location.longitude for s in stations],
        "altitude_m": [s.location.altitude for s in stations],
        "station_type_code": [int(s.station_type) for s in stations],
    })
    return write_csv(frame, path)


def read_station_series(path: PathLike, stations: List[StationMeta]) -> List[StationSeries]:
    """Group observations by station; stations without rows get empty series"""
    frame = read_csv(path, SERIES_COLUMNS, dtype={"station_id": str})
    check_unix_array(frame["time_unix"])
    known = {s.station_id: s for s in stations}
    unknown = sorted(set(frame["station_id"]) - set(known))
    if unknown:
        raise DataError(f"{path}: observations for unknown station {unknown[0]!r}")

    frame = frame.sort_values(["station_id", "time_unix"], kind="mergesort")
    grouped = {sid: group for sid, group in frame.groupby("station_id", sort=True)}
    series = []
    for station in stations:
        group = grouped.get(station.station_id)
        times = np.empty(0, dtype=np.int64) if group is None else group["time_unix"].to_numpy(dtype=np.int64)
        values = np.empty(0) if group is None else group["value"].to_numpy(dtype=np.float64)
        try:
            series.append(StationSeries(meta=station, times=times, values=values))
        except ValidationError as exc:
            raise DataError(f"{path}: {exc.errors()[0]['msg']}")
    logger.debug("Read %d observations for %d stations", len(frame), len(series))
    return series


def write_station_series(series: List[StationSeries], path: PathLike) -> Path:
    frames = [
        pd.DataFrame({"station_id": s.meta.station_id, "time_unix": s.times, "value": s.values})
        for s in series
    ]
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=SERIES_COLUMNS)
    return write_csv(frame[SERIES_COLUMNS], path)


# Meteorology
METEO_COLUMNS = ["time_unix", "row", "col", "value"]


def read_meteo(directory: PathLike) -> MeteoFieldSet:
    """One `<variable>.csv` per variable next to a shared `grid.spec`"""
    directory = _check_exists(directory)
    spec = read_spec(directory / "grid.spec")

    grids = {}
    times = None
    for name in METEO_VARIABLES:
        path = directory / f"{name}.csv"
        frame = read_csv(path, METEO_COLUMNS)
        hours = np.unique(frame["time_unix"].to_numpy(dtype=np.int64))
        if times is None:
            times = hours
        elif not np.array_equal(times, hours):
            raise DataError(f"{path}: hours differ from the other meteo variables")
        expected = hours.size * spec.n_cells
        if len(frame) != expected:
            raise DataError(f"{path}: expected {expected} records (every node every hour), got {len(frame)}")

        grid = np.full((hours.size, spec.n_rows, spec.n_cols), np.nan)
        h = np.searchsorted(hours, frame["time_unix"].to_numpy(dtype=np.int64))
        grid[h, frame["row"].to_numpy(dtype=np.int64), frame["col"].to_numpy(dtype=np.int64)] = frame["value"].to_numpy(dtype=np.float64)
        if not np.all(np.isfinite(grid)):
            raise DataError(f"{path}: missing or non-finite node values")
        grids[name] = grid

    check_unix_array(times)
    try:
        return MeteoFieldSet(spec=spec, times=times, variables=grids)
    except ValidationError as exc:
        raise DataError(f"{directory}: {exc.errors()[0]['msg']}")


def write_meteo(fields: MeteoFieldSet, directory: PathLike) -> Path:
    directory = Path(directory)
    write_spec(fields.spec, directory / "grid.spec")
    h, r, c = np.meshgrid(
        np.arange(fields.times.size), np.arange(fields.spec.n_rows), np.arange(fields.spec.n_cols), indexing="ij"
    )
    for name in METEO_VARIABLES:
        frame = pd.DataFrame({
            "time_unix": fields.times[h.ravel()],
            "row": r.ravel(),
            "col": c.ravel(),
            "value": fields.variables[name].ravel(),
        })
        write_csv(frame, directory / f"{name}.csv")
    return directory


# Land cover and elevation rasters
def read_landcover(path: PathLike) -> LandCoverRaster:
    spec = read_spec(sidecar_path(path))
    frame = read_csv(path, ["row", "col", "class_code"])
    if len(frame) != spec.n_cells:
        raise DataError(f"{path}: expected {spec.n_cells} pixels, got {len(frame)}")
    codes = _cells_to_array(frame, "class_code", spec, 0, np.int64, path)
    try:
        return LandCoverRaster(spec=spec, codes=codes)
    except ValidationError as exc:
        raise DataError(f"{path}: {exc.errors()[0]['msg']}")


def write_landcover(raster: LandCoverRaster, path: PathLike) -> Path:
    rows, cols = np.indices(raster.codes.shape)
    write_spec(raster.spec, sidecar_path(path))
    return write_csv(pd.DataFrame({
        "row": rows.ravel(), "col": cols.ravel(), "class_code": raster.codes.ravel(),
    }), path)


def read_elevation(path: PathLike) -> ElevationRaster:
    spec = read_spec(sidecar_path(path))
    frame = read_csv(path, ["row", "col", "altitude_m"])
    return ElevationRaster(spec=spec, altitude=_cells_to_array(frame, "altitude_m", spec, np.nan, np.float64, path))


def write_elevation(raster: ElevationRaster, path: PathLike) -> Path:
    rows, cols = np.nonzero(np.isfinite(raster.altitude))
    write_spec(raster.spec, sidecar_path(path))
    return write_csv(pd.DataFrame({
        "row": rows, "col": cols, "altitude_m": raster.altitude[rows, cols],
    }), path)


# Grid predictions
PREDICTION_COLUMNS = ["time_unix", "row", "col", "prediction"]


def read_predictions(path: PathLike) -> pd.DataFrame:
    frame = read_csv(path, PREDICTION_COLUMNS)
    check_unix_array(frame["time_unix"])
    return frame


def write_predictions(frame: pd.DataFrame, path: PathLike) -> Path:
    frame = frame.sort_values(["time_unix", "row", "col"], kind="mergesort")
    return write_csv(frame[PREDICTION_COLUMNS], path)
