"""Per-pollutant feature tables: assembly and CSV serialization.

Column order is fixed: the 26 features, then `station_id,time_unix,target`.
Rows are sorted by (time_unix, station_id).
"""
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union
import logging

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core import temporal_features
from errors import DataError, GridMismatchError, OutOfBoundsError, SchemaError
from interchange import FLOAT_FORMAT
from join import DEFAULT_MAX_GAP, METEO_FEATURES, interp_observation, landcover_fractions, meteo_at
from models import GridField, LandCoverRaster, MeteoFieldSet, SELECTED_CLASSES, StationSeries
from regrid import cell_index
from schemas import PollutantKind

logger = logging.getLogger(__name__)

TEMPORAL_FEATURES = ("day_of_week", "day_of_year", "hour", "month", "year")
STATION_FEATURES = ("station_type_code", "latitude", "longitude", "altitude_m")
LANDCOVER_FEATURES = tuple(SELECTED_CLASSES.values())

FEATURE_COLUMNS: Tuple[str, ...] = (
    TEMPORAL_FEATURES
    + STATION_FEATURES
    + ("satellite_value",)
    + LANDCOVER_FEATURES
    + METEO_FEATURES
)
META_COLUMNS = ("station_id", "time_unix", "target")
TABLE_COLUMNS = FEATURE_COLUMNS + META_COLUMNS

assert len(FEATURE_COLUMNS) == 26


class FeatureRow(BaseModel):
    """One station (or grid cell) at one overpass"""

    day_of_week: int = Field(..., ge=1, le=7)
    day_of_year: int = Field(..., ge=1, le=366)
    hour: int = Field(..., ge=0, le=23)
    month: int = Field(..., ge=1, le=12)
    year: int
    station_type_code: int = Field(..., ge=1, le=3)
    latitude: float = Field(..., ge=-90, le=90)
    longitude: float = Field(..., ge=-180, le=180)
    altitude_m: float
    satellite_value: float
    lc_continuous_urban: float = Field(..., ge=0, le=1)
    lc_discontinuous_urban: float = Field(..., ge=0, le=1)
    lc_industrial: float = Field(..., ge=0, le=1)
    lc_road_rail: float = Field(..., ge=0, le=1)
    lc_port: float = Field(..., ge=0, le=1)
    lc_airport: float = Field(..., ge=0, le=1)
    lc_broadleaf: float = Field(..., ge=0, le=1)
    wind_speed: float = Field(..., ge=0)
    wind_direction: float = Field(..., ge=0, lt=360)
    dewpoint_2m: float
    evaporation: float
    temp_2m: float
    precip_total: float
    surface_pressure: float
    blh: float
    ssrd: float
    # Absent in prediction rows
    target: Optional[float] = Field(None, ge=0)
    station_id: str = Field(..., min_length=1)
    time_unix: int


class FeatureTable(BaseModel):
    """Ordered rows of one pollutant and year, backed by a DataFrame"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    frame: pd.DataFrame
    pollutant: Optional[PollutantKind] = None
    year: Optional[int] = None

    @model_validator(mode="after")
    def check_frame(self):
        if list(self.frame.columns) != list(TABLE_COLUMNS):
            raise ValueError("feature table columns are not in the fixed order")
        if self.frame.duplicated(["station_id", "time_unix"]).any():
            raise ValueError("duplicate (station_id, time_unix) rows")
        if self.year is None and len(self.frame):
            self.year = int(self.frame["year"].iloc[0])
        return self

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def features(self) -> np.ndarray:
        return self.frame.loc[:, list(FEATURE_COLUMNS)].to_numpy(dtype=np.float64)

    @property
    def targets(self) -> np.ndarray:
        return self.frame["target"].to_numpy(dtype=np.float64)

    @property
    def station_ids(self) -> np.ndarray:
        return self.frame["station_id"].to_numpy(dtype=object)

    @property
    def has_targets(self) -> bool:
        return len(self.frame) > 0 and bool(np.all(np.isfinite(self.targets)))

    def take(self, indices: Sequence[int]) -> "FeatureTable":
        """Sub-table of the given row positions, in the given order"""
        frame = self.frame.iloc[np.asarray(indices, dtype=np.int64)].reset_index(drop=True)
        return FeatureTable(frame=frame, pollutant=self.pollutant, year=self.year)

    def row(self, i: int) -> FeatureRow:
        record = {
            key: value.item() if isinstance(value, np.generic) else value
            for key, value in self.frame.iloc[i].to_dict().items()
        }
        if not np.isfinite(record["target"]):
            record["target"] = None
        return FeatureRow(**record)


def empty_frame() -> pd.DataFrame:
    frame = pd.DataFrame({column: pd.Series(dtype=np.float64) for column in FEATURE_COLUMNS})
    frame["station_id"] = pd.Series(dtype=object)
    frame["time_unix"] = pd.Series(dtype=np.int64)
    frame["target"] = pd.Series(dtype=np.float64)
    return frame


def table_from_records(records: List[Dict], pollutant: Optional[PollutantKind] = None,
                       year: Optional[int] = None) -> FeatureTable:
    """Build a table from row dicts; sorts by (time_unix, station_id)"""
    if not records:
        return FeatureTable(frame=empty_frame(), pollutant=pollutant, year=year)

    frame = pd.DataFrame.from_records(records)
    missing = [c for c in TABLE_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"records lack columns: {', '.join(missing)}")
    frame = frame.loc[:, list(TABLE_COLUMNS)]
    frame[list(FEATURE_COLUMNS)] = frame[list(FEATURE_COLUMNS)].astype(np.float64)
    frame["station_id"] = frame["station_id"].astype(str)
    frame["time_unix"] = frame["time_unix"].astype(np.int64)
    frame["target"] = frame["target"].astype(np.float64)
    frame = frame.sort_values(["time_unix", "station_id"], kind="mergesort").reset_index(drop=True)

    features = frame[list(FEATURE_COLUMNS)].to_numpy()
    if not np.all(np.isfinite(features)):
        raise DataError("feature values must be finite")
    try:
        return FeatureTable(frame=frame, pollutant=pollutant, year=year)
    except ValueError as exc:
        raise DataError(str(exc))


def station_record(series: StationSeries, cell_fractions: Dict[str, float]) -> Dict:
    """Static per-station part of a row"""
    meta = series.meta
    record = {
        "station_type_code": int(meta.station_type),
        "latitude": meta.location.latitude,
        "longitude": meta.location.longitude,
        "altitude_m": meta.location.altitude,
        "station_id": meta.station_id,
    }
    record.update(cell_fractions)
    return record


def _check_fields(fields: List[GridField], pollutant: PollutantKind):
    spec = fields[0].spec
    for field in fields[1:]:
        if field.spec != spec:
            raise GridMismatchError(f"grid fields disagree on grid spec: {field.spec} vs {spec}")
    for field in fields:
        if field.variable and field.variable != pollutant.satellite_variable:
            raise DataError(
                f"{pollutant.value} needs satellite variable {pollutant.satellite_variable}, "
                f"got {field.variable}"
            )
    times = [f.overpass_time for f in fields if f.overpass_time is not None]
    if len(set(times)) != len(times):
        raise DataError("two grid fields share one overpass time")


def _overpass_records(field: GridField, stations: List[Tuple[StationSeries, int, int, Dict]],
                      meteo: MeteoFieldSet, max_gap: int) -> List[Dict]:
    t = field.overpass_time
    calendar = temporal_features(t)._asdict()
    records = []
    for series, row, col, static in stations:
        satellite = field.value_at(row, col)
        if satellite is None:
            continue
        observation = interp_observation(series, t, max_gap)
        if observation is None:
            continue
        try:
            weather = meteo_at(meteo, series.meta.location, t)
        except OutOfBoundsError as exc:
            logger.debug("Skipping %s at %d: %s", series.meta.station_id, t, exc)
            continue

        record = dict(static)
        record.update(calendar)
        record.update(weather)
        record["satellite_value"] = satellite
        record["time_unix"] = t
        record["target"] = observation
        records.append(record)
    return records


def build_table(
    stations: List[StationSeries],
    fields: List[GridField],
    meteo: MeteoFieldSet,
    lc: LandCoverRaster,
    pollutant: PollutantKind,
    max_gap: int = DEFAULT_MAX_GAP,
    threads: int = 1,
) -> FeatureTable:
    """One row per (station, overpass) where every source has data"""
    ids = [s.meta.station_id for s in stations]
    if len(set(ids)) != len(ids):
        raise DataError("station ids must be unique")

    if not fields:
        logger.warning("No grid fields given; the %s table is empty", pollutant.value)
        return table_from_records([], pollutant)
    _check_fields(fields, pollutant)
    spec = fields[0].spec

    # Land cover is aggregated on the satellite cell of each station
    placed = []
    fractions_by_cell: Dict[Tuple[int, int], Dict[str, float]] = {}
    for series in stations:
        cell = cell_index(series.meta.location, spec)
        if cell is None:
            logger.debug("Station %s lies outside the satellite grid", series.meta.station_id)
            continue
        if cell not in fractions_by_cell:
            fractions_by_cell[cell] = landcover_fractions(lc, spec.cell_bounds(*cell))
        placed.append((series, cell[0], cell[1], station_record(series, fractions_by_cell[cell])))

    usable = [f for f in fields if f.overpass_time is not None]
    batches = Parallel(n_jobs=threads, prefer="threads")(
        delayed(_overpass_records)(field, placed, meteo, max_gap) for field in usable
    )
    records = [record for batch in batches for record in batch]

    table = table_from_records(records, pollutant)
    if len(table) == 0:
        logger.warning("Built an empty %s table from %d stations and %d overpasses",
                       pollutant.value, len(stations), len(fields))
    else:
        logger.info("Built %d %s rows from %d stations and %d overpasses",
                    len(table), pollutant.value, len(stations), len(fields))
    return table


def write_table(table: FeatureTable, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n",
                       encoding="utf-8", na_rep="")
    return path


def read_table(path: Union[str, Path], pollutant: Optional[PollutantKind] = None) -> FeatureTable:
    """Parse a feature table CSV, naming the row and column of any defect"""
    path = Path(path)
    if not path.exists():
        raise DataError(f"File not found: {path}")
    try:
        frame = pd.read_csv(path, dtype={"station_id": str}, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as exc:
        raise SchemaError(f"{path}: cannot parse CSV: {exc}")

    for column in TABLE_COLUMNS:
        if column not in frame.columns:
            raise SchemaError(f"{path}: missing column", column=column)
    extra = [c for c in frame.columns if c not in TABLE_COLUMNS]
    if extra:
        raise SchemaError(f"{path}: unexpected column", column=str(extra[0]))
    frame = frame.loc[:, list(TABLE_COLUMNS)]

    for column in FEATURE_COLUMNS + ("time_unix",):
        try:
            values = pd.to_numeric(frame[column], errors="raise").to_numpy(dtype=np.float64)
        except (ValueError, TypeError):
            bad = pd.to_numeric(frame[column], errors="coerce").isna().to_numpy()
            raise SchemaError(f"{path}: not a number", row=int(np.argmax(bad)), column=column)
        if not np.all(np.isfinite(values)):
            raise SchemaError(f"{path}: non-finite value", row=int(np.argmax(~np.isfinite(values))), column=column)

    target = pd.to_numeric(frame["target"], errors="coerce").to_numpy(dtype=np.float64)
    if np.any(np.isinf(target)) or np.any(target < 0):
        bad = np.isinf(target) | (target < 0)
        raise SchemaError(f"{path}: target must be finite and >= 0", row=int(np.argmax(bad)), column="target")
    if frame["station_id"].isna().any():
        raise SchemaError(f"{path}: empty station_id", row=int(np.argmax(frame["station_id"].isna().to_numpy())),
                          column="station_id")

    frame[list(FEATURE_COLUMNS)] = frame[list(FEATURE_COLUMNS)].astype(np.float64)
    frame["time_unix"] = frame["time_unix"].astype(np.int64)
    frame["target"] = target
    try:
        return FeatureTable(frame=frame, pollutant=pollutant)
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}")
