"""Synthetic data suites for tests and demos.

`smooth`, `station-effects`, `importance` and `noise` produce feature tables
directly. `pipeline` writes the raw interchange files of a small study area so
every subcommand can run end to end without external data.
"""
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Union
import logging

import numpy as np
import pandas as pd

from core import temporal_features, to_unix
from dataset import FEATURE_COLUMNS, FeatureTable, table_from_records
from errors import DataError
from interchange import (
    write_elevation,
    write_landcover,
    write_meteo,
    write_spec,
    write_station_series,
    write_stations,
    write_swath,
)
from models import ElevationRaster, LandCoverRaster, MeteoFieldSet, METEO_VARIABLES, SECONDS_PER_HOUR, StationSeries
from schemas import GeoPoint, GridSpec, PollutantKind, StationMeta, StationType

logger = logging.getLogger(__name__)

SUITES = ("smooth", "station-effects", "importance", "noise", "pipeline")

# Constant values for features a suite does not vary
BASE_FEATURES = {
    "lc_continuous_urban": 0.1,
    "lc_discontinuous_urban": 0.2,
    "lc_industrial": 0.05,
    "lc_road_rail": 0.02,
    "lc_port": 0.0,
    "lc_airport": 0.0,
    "lc_broadleaf": 0.3,
    "wind_speed": 3.0,
    "wind_direction": 180.0,
    "dewpoint_2m": 280.0,
    "evaporation": -1e-4,
    "temp_2m": 290.0,
    "precip_total": 0.0,
    "surface_pressure": 101325.0,
    "blh": 800.0,
    "ssrd": 1.0e6,
    "satellite_value": 0.0,
}

NOISE_COLUMNS = ("wind_speed", "dewpoint_2m", "temp_2m", "blh", "ssrd")


class SyntheticSuite(NamedTuple):
    table: FeatureTable
    stations: List[StationMeta]


def make_stations(n: int, rng: np.random.Generator, same_place: bool = False) -> List[StationMeta]:
    """Stations scattered over Iberia"""
    lats = np.full(n, 40.0) if same_place else rng.uniform(36.5, 43.5, n)
    lons = np.full(n, -3.7) if same_place else rng.uniform(-9.0, 3.0, n)
    alts = np.full(n, 650.0) if same_place else rng.uniform(0.0, 1500.0, n)
    types = rng.integers(1, 4, n)
    return [
        StationMeta(
            station_id=f"ST{i:03d}",
            location=GeoPoint(latitude=float(lats[i]), longitude=float(lons[i]), altitude=float(alts[i])),
            station_type=StationType(int(types[i])),
        )
        for i in range(n)
    ]


def _suite_table(stations: List[StationMeta], per_station: int, year: int,
                 columns: Dict[str, np.ndarray], target: np.ndarray) -> FeatureTable:
    """Rows ordered station-major; timestamps one second apart share calendar features"""
    start = to_unix(datetime(year, 6, 1, 12, 0, tzinfo=timezone.utc))
    calendars = {}
    records = []
    for i in range(len(stations) * per_station):
        station = stations[i // per_station]
        t = start + i % per_station
        if t not in calendars:
            calendars[t] = temporal_features(t)._asdict()
        record = dict(BASE_FEATURES)
        record.update(calendars[t])
        record.update({
            "station_type_code": int(station.station_type),
            "latitude": station.location.latitude,
            "longitude": station.location.longitude,
            "altitude_m": station.location.altitude,
            "station_id": station.station_id,
            "time_unix": t,
            "target": float(target[i]),
        })
        for name, values in columns.items():
            record[name] = float(values[i])
        records.append(record)
    return table_from_records(records, PollutantKind.NO2)


def _shape(n_rows: int, n_stations: int):
    if n_stations < 1 or n_rows < n_stations:
        raise DataError(f"need at least one row per station, got {n_rows} rows for {n_stations} stations")
    return n_rows // n_stations


def smooth_suite(n_rows: int = 5000, n_stations: int = 50, noise: float = 0.5, seed: int = 0,
                 year: int = 2019, station_sd: float = 0.0) -> SyntheticSuite:
    """y = 10 sin(x0) + x1^2 + eps (+ a per-station offset), shifted to stay positive.

    x0 is the satellite value and x1 the 2 m temperature.
    """
    per_station = _shape(n_rows, n_stations)
    rng = np.random.default_rng(seed)
    stations = make_stations(n_stations, rng)
    n = per_station * n_stations
    x0 = rng.uniform(-3.0, 3.0, n)
    x1 = rng.uniform(-2.0, 2.0, n)
    offsets = np.repeat(rng.normal(0.0, station_sd, n_stations), per_station) if station_sd > 0 else 0.0
    y = 10.0 * np.sin(x0) + x1 ** 2 + rng.normal(0.0, noise, n) + offsets + 15.0
    table = _suite_table(stations, per_station, year, {"satellite_value": x0, "temp_2m": x1}, np.maximum(y, 0.0))
    return SyntheticSuite(table, stations)


def station_effects_suite(n_rows: int = 5000, n_stations: int = 50, noise: float = 0.5, seed: int = 0,
                          year: int = 2019, station_sd: float = 3.0) -> SyntheticSuite:
    return smooth_suite(n_rows, n_stations, noise, seed, year, station_sd=station_sd)


def importance_suite(n_rows: int = 2000, n_stations: int = 10, seed: int = 0, year: int = 2019) -> SyntheticSuite:
    """y = x0 with five pure-noise meteo columns; everything else constant"""
    per_station = _shape(n_rows, n_stations)
    rng = np.random.default_rng(seed)
    stations = make_stations(n_stations, rng, same_place=True)
    n = per_station * n_stations
    x0 = rng.uniform(0.0, 10.0, n)
    columns = {"satellite_value": x0}
    for name in NOISE_COLUMNS:
        columns[name] = rng.uniform(0.0, 10.0, n)
    return SyntheticSuite(_suite_table(stations, per_station, year, columns, x0), stations)


def noise_suite(n_rows: int = 1000, n_stations: int = 10, seed: int = 0, year: int = 2019) -> SyntheticSuite:
    """Target independent of every feature"""
    per_station = _shape(n_rows, n_stations)
    rng = np.random.default_rng(seed)
    stations = make_stations(n_stations, rng)
    n = per_station * n_stations
    columns = {name: rng.uniform(0.0, 10.0, n) for name in ("satellite_value",) + NOISE_COLUMNS}
    return SyntheticSuite(_suite_table(stations, per_station, year, columns, rng.uniform(10.0, 30.0, n)), stations)


# Raw pipeline files
PIPELINE_SPEC = GridSpec(lat_min=40.0, lon_min=-4.0, cell_size=0.03, n_rows=20, n_cols=20)
METEO_SPEC = GridSpec(lat_min=39.5, lon_min=-4.5, cell_size=0.5, n_rows=4, n_cols=4)
LANDCOVER_SPEC = GridSpec(lat_min=40.0, lon_min=-4.0, cell_size=0.005, n_rows=120, n_cols=120)
ELEVATION_SPEC = GridSpec(lat_min=40.0, lon_min=-4.0, cell_size=0.01, n_rows=60, n_cols=60)
LANDCOVER_PALETTE = np.array([111, 112, 121, 122, 211, 311, 312])


def _concentration(lats, lons, t, start: int) -> np.ndarray:
    """Latent ground-level field shared by the swaths and the stations"""
    day = (np.asarray(t, dtype=np.float64) - start) / 86400.0
    urban = np.exp(-(((lats - 40.3) / 0.15) ** 2 + ((lons + 3.7) / 0.15) ** 2))
    return 15.0 + 25.0 * urban + 5.0 * np.sin(2 * np.pi * day / 14.0) + 3.0 * np.cos(6.0 * lons)


def _meteo(start: int, hours: int, rng: np.random.Generator) -> MeteoFieldSet:
    times = start + SECONDS_PER_HOUR * np.arange(hours)
    shape = (hours, METEO_SPEC.n_rows, METEO_SPEC.n_cols)
    daily = np.sin(2 * np.pi * np.arange(hours) / 24.0)[:, None, None]
    base = {
        "dewpoint_2m": 275.0 + 3.0 * daily,
        "temp_2m": 282.0 + 6.0 * daily,
        "wind_u10": 2.0 * daily,
        "wind_v10": 1.0 - daily,
        "ssrd": 4.0e5 * np.maximum(daily, 0.0),
        "evaporation": -1e-4 * (1.0 + daily),
        "precip_total": 1e-4 * np.maximum(-daily, 0.0),
        "blh": 700.0 + 400.0 * daily,
        "surface_pressure": 95000.0 + 50.0 * daily,
    }
    variables = {name: base[name] + 0.1 * rng.standard_normal(shape) for name in METEO_VARIABLES}
    return MeteoFieldSet(spec=METEO_SPEC, times=times, variables=variables)


def write_pipeline(out_dir: Union[str, Path], seed: int = 0, n_stations: int = 12, n_overpasses: int = 30,
                   spacing_days: int = 2, year: int = 2019, samples_per_swath: int = 1200) -> Dict[str, Path]:
    """Write a complete raw input set for a 20 x 20 cell study area"""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    start = to_unix(datetime(year, 1, 1, tzinfo=timezone.utc))
    hours = n_overpasses * spacing_days * 24 + 24

    spec_path = write_spec(PIPELINE_SPEC, out / "grid.spec")

    # Overpasses near 13:30 UTC
    swath_dir = out / "swaths"
    for k in range(n_overpasses):
        t0 = start + k * spacing_days * 86400 + 13 * SECONDS_PER_HOUR + 1800
        lats = rng.uniform(PIPELINE_SPEC.lat_min - 0.05, PIPELINE_SPEC.lat_max + 0.05, samples_per_swath)
        lons = rng.uniform(PIPELINE_SPEC.lon_min - 0.05, PIPELINE_SPEC.lon_max + 0.05, samples_per_swath)
        times = t0 + rng.integers(-60, 61, samples_per_swath)
        values = 1e-6 * _concentration(lats, lons, times, start) + 2e-7 * rng.standard_normal(samples_per_swath)
        qa = rng.choice([0.5, 0.75, 0.8, 1.0], size=samples_per_swath, p=[0.15, 0.15, 0.2, 0.5])
        write_swath(pd.DataFrame({"lat": lats, "lon": lons, "value": values, "qa": qa, "time_unix": times}),
                    swath_dir / f"swath_{k:03d}.csv")

    stations = []
    for i in range(n_stations):
        stations.append(StationMeta(
            station_id=f"ES{i:04d}",
            location=GeoPoint(
                latitude=float(rng.uniform(PIPELINE_SPEC.lat_min + 0.02, PIPELINE_SPEC.lat_max - 0.02)),
                longitude=float(rng.uniform(PIPELINE_SPEC.lon_min + 0.02, PIPELINE_SPEC.lon_max - 0.02)),
                altitude=float(rng.uniform(500.0, 900.0)),
            ),
            station_type=StationType(int(rng.integers(1, 4))),
        ))
    stations_path = write_stations(stations, out / "stations.csv")

    series = []
    hour_times = start + SECONDS_PER_HOUR * np.arange(hours)
    for station in stations:
        keep = rng.random(hours) > 0.1
        t = hour_times[keep]
        level = _concentration(station.location.latitude, station.location.longitude, t, start)
        values = np.maximum(level + 2.0 * rng.standard_normal(t.size), 0.0)
        series.append(StationSeries(meta=station, times=t, values=values))
    series_path = write_station_series(series, out / "series.csv")

    meteo_dir = write_meteo(_meteo(start, hours, rng), out / "meteo")

    blocks = rng.integers(0, LANDCOVER_PALETTE.size, (12, 12))
    codes = LANDCOVER_PALETTE[np.kron(blocks, np.ones((10, 10), dtype=np.int64))]
    landcover_path = write_landcover(LandCoverRaster(spec=LANDCOVER_SPEC, codes=codes), out / "landcover.csv")

    rows, cols = np.indices((ELEVATION_SPEC.n_rows, ELEVATION_SPEC.n_cols))
    altitude = 600.0 + 150.0 * np.sin(rows / 9.0) + 80.0 * np.cos(cols / 7.0)
    elevation_path = write_elevation(ElevationRaster(spec=ELEVATION_SPEC, altitude=altitude), out / "elevation.csv")

    logger.info("Wrote pipeline inputs to %s: %d swaths, %d stations, %d meteo hours",
                out, n_overpasses, n_stations, hours)
    return {
        "spec": spec_path,
        "swaths": swath_dir,
        "stations": stations_path,
        "series": series_path,
        "meteo": meteo_dir,
        "landcover": landcover_path,
        "elevation": elevation_path,
    }


def make_suite(name: str, n_rows: Optional[int] = None, n_stations: Optional[int] = None,
               seed: int = 0, year: int = 2019, noise: float = 0.5) -> SyntheticSuite:
    """Table suites by name, with each suite's default sizes"""
    sizes = {}
    if n_rows is not None:
        sizes["n_rows"] = n_rows
    if n_stations is not None:
        sizes["n_stations"] = n_stations
    if name == "smooth":
        return smooth_suite(noise=noise, seed=seed, year=year, **sizes)
    if name == "station-effects":
        return station_effects_suite(noise=noise, seed=seed, year=year, **sizes)
    if name == "importance":
        return importance_suite(seed=seed, year=year, **sizes)
    if name == "noise":
        return noise_suite(seed=seed, year=year, **sizes)
    raise DataError(f"unknown table suite {name!r}")


def feature_index(name: str) -> int:
    return list(FEATURE_COLUMNS).index(name)
