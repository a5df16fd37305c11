from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from datetime import datetime
from typing import Any, Dict, List, Optional, Tuple
from enum import Enum, IntEnum
import math

import numpy as np

# Enums
class StationType(IntEnum):
    industrial = 1
    traffic = 2
    background = 3


class PollutantKind(str, Enum):
    NO2 = "NO2"
    O3 = "O3"
    SO2 = "SO2"
    PM10 = "PM10"
    PM25 = "PM25"

    @property
    def satellite_variable(self) -> str:
        return SATELLITE_VARIABLES[self]

    @property
    def default_qa_threshold(self) -> float:
        # Aerosol index products need the stricter minimum
        if self.satellite_variable == "absorbing_aerosol_index":
            return 0.8
        return 0.75

    @property
    def default_max_features(self) -> "MaxFeaturesMode":
        # Ozone scored best considering every feature at each split
        if self is PollutantKind.O3:
            return MaxFeaturesMode.all
        return MaxFeaturesMode.sqrt


SATELLITE_VARIABLES = {
    PollutantKind.NO2: "tropospheric_no2_column",
    PollutantKind.O3: "o3_total_column",
    PollutantKind.SO2: "so2_total_column",
    PollutantKind.PM10: "absorbing_aerosol_index",
    PollutantKind.PM25: "absorbing_aerosol_index",
}


class MaxFeaturesMode(str, Enum):
    all = "all"
    sqrt = "sqrt"
    log2 = "log2"

    @classmethod
    def parse(cls, value: Any) -> "MaxFeaturesMode":
        """Accept 'auto' as an alias of 'all'"""
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        if text == "auto":
            return cls.all
        return cls(text)

    def subset_size(self, n_features: int) -> int:
        if self is MaxFeaturesMode.all:
            return n_features
        if self is MaxFeaturesMode.sqrt:
            size = math.ceil(math.sqrt(n_features))
        else:
            size = math.ceil(math.log2(n_features)) if n_features > 1 else 1
        return max(1, min(n_features, size))


# Spatial schemas
class GeoPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    latitude: float = Field(..., ge=-90, le=90)
    longitude: float = Field(..., ge=-180, le=180)
    altitude: float = 0.0


class StationMeta(BaseModel):
    model_config = ConfigDict(frozen=True)

    station_id: str = Field(..., min_length=1)
    location: GeoPoint
    station_type: StationType


class GridSpec(BaseModel):
    """Regular lat/lon grid; rows grow northward, columns eastward"""
    model_config = ConfigDict(frozen=True)

    lat_min: float = Field(..., ge=-90, le=90)
    lon_min: float = Field(..., ge=-180, le=180)
    cell_size: float = Field(0.03, gt=0)
    n_rows: int = Field(..., ge=1)
    n_cols: int = Field(..., ge=1)

    @model_validator(mode="after")
    def check_extent(self):
        if self.lat_min + self.n_rows * self.cell_size > 90 + 1e-9:
            raise ValueError("grid extends north of 90 degrees")
        if self.lon_min + self.n_cols * self.cell_size > 180 + 1e-9:
            raise ValueError("grid extends east of 180 degrees")
        return self

    @property
    def lat_max(self) -> float:
        return self.lat_min + self.n_rows * self.cell_size

    @property
    def lon_max(self) -> float:
        return self.lon_min + self.n_cols * self.cell_size

    @property
    def n_cells(self) -> int:
        return self.n_rows * self.n_cols

    def cell_bounds(self, row: int, col: int) -> Tuple[float, float, float, float]:
        """(lat_lo, lat_hi, lon_lo, lon_hi) of a half-open cell"""
        lat_lo = self.lat_min + row * self.cell_size
        lon_lo = self.lon_min + col * self.cell_size
        return lat_lo, lat_lo + self.cell_size, lon_lo, lon_lo + self.cell_size

    def centroid(self, row: int, col: int) -> GeoPoint:
        return GeoPoint(
            latitude=self.lat_min + (row + 0.5) * self.cell_size,
            longitude=self.lon_min + (col + 0.5) * self.cell_size,
        )

    def centroid_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Row-major flattened centroid latitudes and longitudes"""
        rows, cols = np.divmod(np.arange(self.n_cells), self.n_cols)
        lats = self.lat_min + (rows + 0.5) * self.cell_size
        lons = self.lon_min + (cols + 0.5) * self.cell_size
        return lats, lons

    def with_cell_size(self, cell_size: float) -> "GridSpec":
        """Same extent re-tiled with another cell size"""
        n_rows = max(1, int(math.ceil(round((self.lat_max - self.lat_min) / cell_size, 9))))
        n_cols = max(1, int(math.ceil(round((self.lon_max - self.lon_min) / cell_size, 9))))
        return GridSpec(lat_min=self.lat_min, lon_min=self.lon_min, cell_size=cell_size,
                        n_rows=n_rows, n_cols=n_cols)


# Model schemas
class ForestConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_estimators: int = Field(300, ge=1)
    max_features_mode: MaxFeaturesMode = MaxFeaturesMode.sqrt
    min_samples_split: int = Field(2, ge=2)
    min_samples_leaf: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    # Test hook; the forest always bootstraps in production runs
    bootstrap: bool = True

    @field_validator("max_features_mode", mode="before")
    @classmethod
    def accept_auto(cls, value):
        return MaxFeaturesMode.parse(value)


class FeatureImportance(BaseModel):
    feature: str
    gini: float = Field(..., ge=0)
    permutation_mean: Optional[float] = None
    permutation_std: Optional[float] = Field(None, ge=0)


class ImportanceReport(BaseModel):
    features: List[FeatureImportance]

    @model_validator(mode="after")
    def check_normalized(self):
        total = sum(f.gini for f in self.features)
        if total > 0 and abs(total - 1.0) > 1e-9:
            raise ValueError(f"gini importances sum to {total}, expected 1")
        return self

    def ranked(self, by: str = "gini") -> List[FeatureImportance]:
        return sorted(self.features, key=lambda f: (-(getattr(f, by) or 0.0), f.feature))


# Evaluation schemas
class MetricsInput(BaseModel):
    """Observations o_i and predictions p_i of one evaluation"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    observations: np.ndarray
    predictions: np.ndarray

    @field_validator("observations", "predictions", mode="before")
    @classmethod
    def as_float_array(cls, value):
        array = np.asarray(value, dtype=np.float64).ravel()
        if not np.all(np.isfinite(array)):
            raise ValueError("values must be finite")
        return array

    @model_validator(mode="after")
    def check_lengths(self):
        if self.observations.shape != self.predictions.shape:
            raise ValueError(
                f"observations ({self.observations.size}) and predictions "
                f"({self.predictions.size}) differ in length"
            )
        if self.observations.size < 1:
            raise ValueError("at least one observation is required")
        return self

    @property
    def n(self) -> int:
        return int(self.observations.size)

    @property
    def mean_observation(self) -> float:
        return float(np.mean(self.observations))


class MetricsReport(BaseModel):
    r2: Optional[float] = Field(None, le=1.0 + 1e-12)
    rmse: float = Field(..., ge=0)
    bias: float
    n: int = Field(..., ge=1)


class FoldReport(BaseModel):
    fold: int = Field(..., ge=0)
    n_train: int = Field(..., ge=0)
    n_test: int = Field(..., ge=0)
    metrics: MetricsReport
    # Zero target variance in the test fold: r2 is excluded from the mean
    flagged: bool = False


class MethodReport(BaseModel):
    method: str
    folds: List[FoldReport]
    mean_r2: Optional[float] = None
    mean_rmse: float
    mean_bias: float


class FoldAssignment(BaseModel):
    """Disjoint test sets; sizes differ by at most one"""
    folds: List[List[Any]]

    @model_validator(mode="after")
    def check_partition(self):
        seen = set()
        for members in self.folds:
            for item in members:
                if item in seen:
                    raise ValueError(f"{item!r} appears in more than one fold")
                seen.add(item)
        sizes = [len(members) for members in self.folds]
        if sizes and max(sizes) - min(sizes) > 1:
            raise ValueError(f"fold sizes {sizes} differ by more than one")
        return self

    @property
    def k(self) -> int:
        return len(self.folds)

    def universe(self) -> List[Any]:
        return [item for members in self.folds for item in members]


class SweepEntry(BaseModel):
    n_estimators: int = Field(..., ge=1)
    max_features: MaxFeaturesMode
    mean_mse: float = Field(..., ge=0)
    seconds: float = Field(..., gt=0)


class SweepResult(BaseModel):
    entries: List[SweepEntry]

    def best(self) -> SweepEntry:
        return min(self.entries, key=lambda e: (e.mean_mse, e.seconds))

    def lookup(self, n_estimators: int, mode: MaxFeaturesMode) -> SweepEntry:
        for entry in self.entries:
            if entry.n_estimators == n_estimators and entry.max_features == mode:
                return entry
        raise KeyError((n_estimators, mode))


# Mapping schemas
class MonthlyStats(BaseModel):
    month: int = Field(..., ge=1, le=12)
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float
    whisker_lo: float
    whisker_hi: float
    n: int = Field(..., ge=1)

    @model_validator(mode="after")
    def check_order(self):
        if not (self.min <= self.q1 <= self.median <= self.q3 <= self.max):
            raise ValueError("order statistics are not monotone")
        return self


# Run bookkeeping
class RunManifest(BaseModel):
    subcommand: str
    inputs: Dict[str, List[str]] = {}
    outputs: List[str] = []
    seed: Optional[int] = None
    config: Dict[str, Any] = {}
    tool_version: str
    started_at: datetime
    finished_at: Optional[datetime] = None
