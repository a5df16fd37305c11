from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from typing import Dict, Optional

import numpy as np

from schemas import GridSpec, StationMeta

# ERA5 single-level variables carried by a meteo field set
METEO_VARIABLES = (
    "dewpoint_2m",
    "temp_2m",
    "wind_u10",
    "wind_v10",
    "ssrd",
    "evaporation",
    "precip_total",
    "blh",
    "surface_pressure",
)

# Corine Land Cover 44-class nomenclature
CORINE_CLASSES = frozenset({
    111, 112, 121, 122, 123, 124, 131, 132, 133, 141, 142,
    211, 212, 213, 221, 222, 223, 231, 241, 242, 243, 244,
    311, 312, 313, 321, 322, 323, 324, 331, 332, 333, 334, 335,
    411, 412, 421, 422, 423, 511, 512, 521, 522, 523,
})

# Selected classes, in feature order
SELECTED_CLASSES = {
    111: "lc_continuous_urban",
    112: "lc_discontinuous_urban",
    121: "lc_industrial",
    122: "lc_road_rail",
    123: "lc_port",
    124: "lc_airport",
    311: "lc_broadleaf",
}

SECONDS_PER_HOUR = 3600


class ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)


class GridField(ArrayModel):
    """One regridded overpass: per-cell mean and accepted-sample count"""

    spec: GridSpec
    mean: np.ndarray
    count: np.ndarray
    overpass_time: Optional[int] = None
    variable: str = ""

    @model_validator(mode="after")
    def check_cells(self):
        shape = (self.spec.n_rows, self.spec.n_cols)
        if self.mean.shape != shape or self.count.shape != shape:
            raise ValueError(f"field arrays must have shape {shape}")
        empty = self.count == 0
        # Empty cells are no-data, never zero-valued
        if np.any(np.isfinite(self.mean[empty])) or np.any(~np.isfinite(self.mean[~empty])):
            raise ValueError("mean must be NaN exactly where count is 0")
        return self

    @property
    def n_filled(self) -> int:
        return int(np.count_nonzero(self.count))

    def value_at(self, row: int, col: int) -> Optional[float]:
        if self.count[row, col] == 0:
            return None
        return float(self.mean[row, col])


class StationSeries(ArrayModel):
    """Hourly observations of one station, interval-start labelled"""

    meta: StationMeta
    times: np.ndarray
    values: np.ndarray

    @field_validator("times", "values", mode="before")
    @classmethod
    def as_array(cls, value):
        return np.asarray(value)

    @model_validator(mode="after")
    def check_samples(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError(f"station {self.meta.station_id}: timestamps must be strictly increasing")
        if np.any(~np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError(f"station {self.meta.station_id}: concentrations must be finite and >= 0")
        return self


class MeteoFieldSet(ArrayModel):
    """Hourly reanalysis grids; values indexed [hour, row, col] on grid nodes"""

    spec: GridSpec
    times: np.ndarray
    variables: Dict[str, np.ndarray]

    @field_validator("times", mode="before")
    @classmethod
    def as_array(cls, value):
        return np.asarray(value, dtype=np.int64)

    @model_validator(mode="after")
    def check_grids(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        missing = [name for name in METEO_VARIABLES if name not in self.variables]
        if missing:
            raise ValueError(f"missing meteo variables: {', '.join(missing)}")
        if self.times.size < 1:
            raise ValueError("meteo field set has no hours")
        if self.times.size > 1 and np.any(np.diff(self.times) != SECONDS_PER_HOUR):
            raise ValueError("meteo hours must be contiguous")
        shape = (self.times.size, self.spec.n_rows, self.spec.n_cols)
        for name, grid in self.variables.items():
            if grid.shape != shape:
                raise ValueError(f"meteo variable {name} has shape {grid.shape}, expected {shape}")
        return self


class LandCoverRaster(ArrayModel):
    """Class-code raster; spec.cell_size is the pixel size in degrees"""

    spec: GridSpec
    codes: np.ndarray

    @model_validator(mode="after")
    def check_codes(self):
        if self.codes.shape != (self.spec.n_rows, self.spec.n_cols):
            raise ValueError("land cover codes do not match the raster spec")
        unknown = set(np.unique(self.codes).tolist()) - CORINE_CLASSES
        if unknown:
            raise ValueError(f"unknown land cover class codes: {sorted(unknown)[:5]}")
        return self


class ElevationRaster(ArrayModel):
    spec: GridSpec
    altitude: np.ndarray

    @model_validator(mode="after")
    def check_shape(self):
        if self.altitude.shape != (self.spec.n_rows, self.spec.n_cols):
            raise ValueError("elevation values do not match the raster spec")
        return self


class Raster(ArrayModel):
    """Cell values on a grid; NaN marks no-data"""

    spec: GridSpec
    values: np.ndarray

    @model_validator(mode="after")
    def check_shape(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.spec.n_rows, self.spec.n_cols):
            raise ValueError("raster values do not match the raster spec")
        return self
