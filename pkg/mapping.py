"""Grid-wide prediction, annual and monthly aggregation, ESRI ASCII rasters."""
from pathlib import Path
from typing import Dict, List, Sequence, Union
import logging

import numpy as np
import pandas as pd

from core import temporal_feature_arrays
from dataset import FEATURE_COLUMNS, LANDCOVER_FEATURES, FeatureTable, empty_frame
from errors import DataError, GridMismatchError, SchemaError
from forest import ForestModel, predict
from interchange import PREDICTION_COLUMNS, write_csv
from join import meteo_at_points, meteo_covers, meteo_spans
from models import ElevationRaster, GridField, LandCoverRaster, MeteoFieldSet, Raster, SELECTED_CLASSES, ArrayModel
from regrid import cell_indices
from schemas import GridSpec, MonthlyStats, StationType

logger = logging.getLogger(__name__)

NODATA = -9999
MONTHLY_COLUMNS = ["month", "min", "q1", "median", "q3", "max", "mean", "whisker_lo", "whisker_hi", "n"]


class PredictionGrid(ArrayModel):
    """Per-cell attributes that do not change between overpasses.

    Arrays are (n_rows, n_cols). `covered` is False where the land cover
    raster has no pixel centre inside the cell or the elevation is unknown.
    """

    spec: GridSpec
    latitude: np.ndarray
    longitude: np.ndarray
    altitude: np.ndarray
    landcover: Dict[str, np.ndarray]
    covered: np.ndarray
    station_type: StationType = StationType.background

    def cell_id(self, row: int, col: int) -> str:
        return f"cell:{row:05d}:{col:05d}"


def _window_counts(codes: np.ndarray, code: int, r0, r1, c0, c1) -> np.ndarray:
    # Summed-area table of one class
    table = np.zeros((codes.shape[0] + 1, codes.shape[1] + 1), dtype=np.int64)
    table[1:, 1:] = np.cumsum(np.cumsum(codes == code, axis=0), axis=1)
    return table[r1, c1] - table[r0, c1] - table[r1, c0] + table[r0, c0]


def build_prediction_grid(
    spec: GridSpec,
    lc: LandCoverRaster,
    elevation: ElevationRaster,
    station_type: StationType = StationType.background,
) -> PredictionGrid:
    """Static attributes of every cell, computed once"""
    if elevation is None:
        raise DataError("grid prediction needs an elevation raster")

    rows, cols = np.divmod(np.arange(spec.n_cells), spec.n_cols)
    lats, lons = spec.centroid_arrays()

    er, ec, inside = cell_indices(lats, lons, elevation.spec)
    if not inside.all():
        raise GridMismatchError("elevation raster does not cover every grid cell centroid")
    altitude = elevation.altitude[er, ec]

    # Same bounds as GridSpec.cell_bounds
    lat_lo = spec.lat_min + rows * spec.cell_size
    lon_lo = spec.lon_min + cols * spec.cell_size
    lat_hi, lon_hi = lat_lo + spec.cell_size, lon_lo + spec.cell_size
    px = lc.spec
    lat_centres = px.lat_min + (np.arange(px.n_rows) + 0.5) * px.cell_size
    lon_centres = px.lon_min + (np.arange(px.n_cols) + 0.5) * px.cell_size
    r0 = np.searchsorted(lat_centres, lat_lo, side="left")
    r1 = np.searchsorted(lat_centres, lat_hi, side="left")
    c0 = np.searchsorted(lon_centres, lon_lo, side="left")
    c1 = np.searchsorted(lon_centres, lon_hi, side="left")
    total = (r1 - r0) * (c1 - c0)
    covered = total > 0
    if not covered.all():
        logger.warning("%d grid cells have no land cover pixels and are skipped", int((~covered).sum()))
    if not np.all(np.isfinite(altitude)):
        logger.warning("%d grid cells have no elevation value and are skipped", int((~np.isfinite(altitude)).sum()))
        covered &= np.isfinite(altitude)
        altitude = np.where(np.isfinite(altitude), altitude, 0.0)

    safe_total = np.where(covered, total, 1)
    landcover = {
        name: np.where(covered, _window_counts(lc.codes, code, r0, r1, c0, c1) / safe_total, 0.0).reshape(
            spec.n_rows, spec.n_cols)
        for code, name in SELECTED_CLASSES.items()
    }

    shape = (spec.n_rows, spec.n_cols)
    return PredictionGrid(
        spec=spec,
        latitude=lats.reshape(shape),
        longitude=lons.reshape(shape),
        altitude=altitude.reshape(shape),
        landcover=landcover,
        covered=covered.reshape(shape),
        station_type=station_type,
    )


def grid_rows(grid: PredictionGrid, field: GridField, meteo: MeteoFieldSet) -> FeatureTable:
    """Rows of one overpass for every cell with satellite, meteo and land cover data"""
    if field.spec != grid.spec:
        raise GridMismatchError("grid field does not share the prediction grid spec")
    t = field.overpass_time
    if t is None or not meteo_spans(meteo, t):
        logger.debug("Overpass %s lies outside the meteo period", t)
        return FeatureTable(frame=empty_frame())

    usable = (field.count > 0) & grid.covered
    usable &= meteo_covers(meteo, grid.latitude, grid.longitude)
    rows, cols = np.nonzero(usable)
    lats, lons = grid.latitude[rows, cols], grid.longitude[rows, cols]
    n = rows.size

    columns = {name: np.full(n, value, dtype=np.float64)
               for name, value in temporal_feature_arrays(np.array([t])).items()}
    columns["station_type_code"] = np.full(n, float(int(grid.station_type)))
    columns["latitude"] = lats
    columns["longitude"] = lons
    columns["altitude_m"] = grid.altitude[rows, cols]
    columns["satellite_value"] = field.mean[rows, cols]
    for name in LANDCOVER_FEATURES:
        columns[name] = grid.landcover[name][rows, cols]
    if n:
        columns.update(meteo_at_points(meteo, lats, lons, t))
    else:
        columns.update({name: np.empty(0) for name in FEATURE_COLUMNS if name not in columns})

    frame = pd.DataFrame({name: np.asarray(columns[name], dtype=np.float64) for name in FEATURE_COLUMNS})
    frame["station_id"] = [grid.cell_id(r, c) for r, c in zip(rows, cols)]
    frame["time_unix"] = np.full(n, t, dtype=np.int64)
    frame["target"] = np.full(n, np.nan)
    return FeatureTable(frame=frame, pollutant=None)


def build_grid_rows(
    spec: GridSpec,
    field: GridField,
    meteo: MeteoFieldSet,
    lc: LandCoverRaster,
    elevation: ElevationRaster,
    station_type: StationType = StationType.background,
) -> FeatureTable:
    """Prediction rows (no targets) for one overpass"""
    return grid_rows(build_prediction_grid(spec, lc, elevation, station_type), field, meteo)


def _cell_of(station_id: str):
    _, row, col = station_id.split(":")
    return int(row), int(col)


def predict_grid(model: ForestModel, grid: PredictionGrid, fields: Sequence[GridField],
                 meteo: MeteoFieldSet, threads: int = 1) -> pd.DataFrame:
    """Predictions `time_unix,row,col,prediction` over every overpass, in time order"""
    ordered = sorted((f for f in fields if f.overpass_time is not None), key=lambda f: f.overpass_time)
    parts = []
    for field in ordered:
        table = grid_rows(grid, field, meteo)
        if len(table) == 0:
            continue
        cells = np.array([_cell_of(s) for s in table.station_ids], dtype=np.int64).reshape(-1, 2)
        parts.append(pd.DataFrame({
            "time_unix": table.frame["time_unix"].to_numpy(),
            "row": cells[:, 0],
            "col": cells[:, 1],
            "prediction": predict(model, table, threads),
        }))
        logger.debug("Overpass %d: %d cells predicted", field.overpass_time, len(table))

    if not parts:
        logger.warning("No grid cell had data for any of %d overpasses", len(ordered))
        return pd.DataFrame({"time_unix": pd.Series(dtype=np.int64), "row": pd.Series(dtype=np.int64),
                             "col": pd.Series(dtype=np.int64), "prediction": pd.Series(dtype=np.float64)})
    frame = pd.concat(parts, ignore_index=True)
    logger.info("Predicted %d cell values over %d overpasses", len(frame), len(parts))
    return frame.loc[:, PREDICTION_COLUMNS]


def annual_mean(predictions: pd.DataFrame, spec: GridSpec) -> Raster:
    """Per-cell mean over all overpasses; cells never predicted are no-data"""
    rows = predictions["row"].to_numpy(dtype=np.int64)
    cols = predictions["col"].to_numpy(dtype=np.int64)
    if rows.size and (rows.min() < 0 or rows.max() >= spec.n_rows or cols.min() < 0 or cols.max() >= spec.n_cols):
        raise GridMismatchError("predictions reference cells outside the grid")

    flat = rows * spec.n_cols + cols
    sums = np.bincount(flat, weights=predictions["prediction"].to_numpy(dtype=np.float64), minlength=spec.n_cells)
    counts = np.bincount(flat, minlength=spec.n_cells)
    values = np.full(spec.n_cells, np.nan)
    covered = counts > 0
    values[covered] = sums[covered] / counts[covered]
    return Raster(spec=spec, values=values.reshape(spec.n_rows, spec.n_cols))


def _box(values: np.ndarray, month: int) -> MonthlyStats:
    q1, median, q3 = np.quantile(values, [0.25, 0.5, 0.75])
    iqr = q3 - q1
    low = values[values >= q1 - 1.5 * iqr]
    high = values[values <= q3 + 1.5 * iqr]
    return MonthlyStats(
        month=month,
        min=float(values.min()), q1=float(q1), median=float(median), q3=float(q3), max=float(values.max()),
        mean=float(values.mean()),
        whisker_lo=float(low.min()), whisker_hi=float(high.max()),
        n=int(values.size),
    )


def monthly_stats(predictions: pd.DataFrame) -> List[MonthlyStats]:
    """Box-plot statistics of all predicted cell values, per calendar month.

    Quartiles interpolate linearly between closest ranks; whiskers reach the
    most extreme values within 1.5 IQR of the box. Empty months are omitted.
    """
    values = predictions["prediction"].to_numpy(dtype=np.float64)
    months = temporal_feature_arrays(predictions["time_unix"].to_numpy(dtype=np.int64))["month"]
    return [_box(values[months == month], month) for month in range(1, 13) if np.any(months == month)]


def write_monthly_stats(stats: List[MonthlyStats], path: Union[str, Path]) -> Path:
    frame = pd.DataFrame([s.model_dump() for s in stats], columns=MONTHLY_COLUMNS)
    return write_csv(frame, path)


# ESRI ASCII grids
def _token(value: float) -> str:
    return str(NODATA) if np.isnan(value) else format(float(value), ".17g")


def write_ascii_grid(raster: Raster, path: Union[str, Path]) -> Path:
    """Header, then rows north to south; NaN cells become -9999"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    spec = raster.spec
    lines = [
        f"ncols {spec.n_cols}",
        f"nrows {spec.n_rows}",
        f"xllcorner {format(spec.lon_min, '.17g')}",
        f"yllcorner {format(spec.lat_min, '.17g')}",
        f"cellsize {format(spec.cell_size, '.17g')}",
        f"NODATA_value {NODATA}",
    ]
    for row in raster.values[::-1]:
        lines.append(" ".join(_token(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


def read_ascii_grid(path: Union[str, Path]) -> Raster:
    path = Path(path)
    if not path.exists():
        raise DataError(f"File not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if len(lines) < 6:
        raise SchemaError(f"{path}: truncated ESRI ASCII header")

    header = {}
    for lineno, line in enumerate(lines[:6], start=1):
        parts = line.split()
        if len(parts) != 2 or parts[0].lower() not in _HEADER_KEYS:
            raise SchemaError(f"{path}: bad header line {line!r}", row=lineno)
        header[parts[0].lower()] = parts[1]
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise SchemaError(f"{path}: header lacks {', '.join(missing)}")

    try:
        spec = GridSpec(lat_min=float(header["yllcorner"]), lon_min=float(header["xllcorner"]),
                        cell_size=float(header["cellsize"]), n_rows=int(header["nrows"]),
                        n_cols=int(header["ncols"]))
        nodata = float(header["nodata_value"])
        body = [[float(token) for token in line.split()] for line in lines[6:] if line.strip()]
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}")

    values = np.array(body, dtype=np.float64)
    if values.shape != (spec.n_rows, spec.n_cols):
        raise SchemaError(f"{path}: expected {spec.n_rows}x{spec.n_cols} values, got {values.shape}")
    values[values == nodata] = np.nan
    return Raster(spec=spec, values=values[::-1].copy())
