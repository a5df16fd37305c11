"""
Tests for grid prediction rows, aggregation and ESRI ASCII rasters.
"""
import numpy as np
import pandas as pd
import pytest

from dataset import FEATURE_COLUMNS
from errors import GridMismatchError, SchemaError
from forest import fit
from join import landcover_fractions
from mapping import (
    NODATA,
    annual_mean,
    build_grid_rows,
    build_prediction_grid,
    monthly_stats,
    predict_grid,
    read_ascii_grid,
    write_ascii_grid,
    write_monthly_stats,
)
from models import ElevationRaster, GridField, LandCoverRaster, Raster
from schemas import ForestConfig, GridSpec, StationType

from conftest import T0

OVERPASS = T0 + 1800


@pytest.fixture
def elevation():
    spec = GridSpec(lat_min=40.0, lon_min=-4.0, cell_size=0.01, n_rows=6, n_cols=6)
    rows, cols = np.indices((6, 6))
    return ElevationRaster(spec=spec, altitude=100.0 * rows + cols)


def field(spec, t=OVERPASS, empty=((0, 1),)):
    mean = np.full((spec.n_rows, spec.n_cols), 5e-5)
    count = np.full((spec.n_rows, spec.n_cols), 2, dtype=np.int64)
    for row, col in empty:
        mean[row, col] = np.nan
        count[row, col] = 0
    return GridField(spec=spec, mean=mean, count=count, overpass_time=t)


class TestGridRows:
    """Prediction rows for every usable cell."""

    def test_rows_for_cells_with_data(self, grid_spec, meteo, landcover, elevation):
        table = build_grid_rows(grid_spec, field(grid_spec), meteo, landcover, elevation)
        assert len(table) == 3
        assert sorted(table.station_ids) == ["cell:00000:00000", "cell:00001:00000", "cell:00001:00001"]
        assert np.isnan(table.targets).all()
        assert set(table.frame["station_type_code"]) == {3.0}
        assert set(table.frame["time_unix"]) == {OVERPASS}

    def test_centroid_attributes(self, grid_spec, meteo, landcover, elevation):
        table = build_grid_rows(grid_spec, field(grid_spec), meteo, landcover, elevation, StationType.traffic)
        row = table.frame.set_index("station_id").loc["cell:00001:00001"]
        assert row["latitude"] == pytest.approx(40.045)
        assert row["longitude"] == pytest.approx(-3.955)
        # centroid falls in elevation pixel (4, 4)
        assert row["altitude_m"] == 404.0
        assert row["station_type_code"] == 2.0
        assert row["satellite_value"] == 5e-5

    def test_landcover_matches_per_cell_fractions(self, grid_spec, meteo, elevation):
        rng = np.random.default_rng(0)
        codes = rng.choice([111, 112, 121, 311, 211], size=(12, 12))
        lc = LandCoverRaster(spec=GridSpec(lat_min=40.0, lon_min=-4.0, cell_size=0.005, n_rows=12, n_cols=12),
                             codes=codes)
        grid = build_prediction_grid(grid_spec, lc, elevation)
        for r in range(2):
            for c in range(2):
                expected = landcover_fractions(lc, grid_spec.cell_bounds(r, c))
                for name, value in expected.items():
                    assert grid.landcover[name][r, c] == value

    def test_overpass_outside_meteo_period(self, grid_spec, meteo, landcover, elevation):
        table = build_grid_rows(grid_spec, field(grid_spec, t=T0 + 86400), meteo, landcover, elevation)
        assert len(table) == 0
        assert list(table.frame.columns[:len(FEATURE_COLUMNS)]) == list(FEATURE_COLUMNS)

    def test_cells_without_landcover_are_skipped(self, grid_spec, meteo, elevation):
        lc = LandCoverRaster(spec=GridSpec(lat_min=40.0, lon_min=-4.0, cell_size=0.005, n_rows=6, n_cols=12),
                             codes=np.full((6, 12), 111))
        table = build_grid_rows(grid_spec, field(grid_spec, empty=()), meteo, lc, elevation)
        assert sorted(table.station_ids) == ["cell:00000:00000", "cell:00000:00001"]

    def test_elevation_must_cover_the_grid(self, grid_spec, landcover):
        small = ElevationRaster(spec=GridSpec(lat_min=40.0, lon_min=-4.0, cell_size=0.01, n_rows=2, n_cols=2),
                                altitude=np.zeros((2, 2)))
        with pytest.raises(GridMismatchError):
            build_prediction_grid(grid_spec, landcover, small)

    def test_field_on_another_grid(self, grid_spec, meteo, landcover, elevation):
        other = GridSpec(lat_min=40.0, lon_min=-4.0, cell_size=0.03, n_rows=1, n_cols=2)
        with pytest.raises(GridMismatchError):
            build_grid_rows(grid_spec, field(other, empty=()), meteo, landcover, elevation)


class TestPredictGrid:
    """Model predictions over every overpass."""

    def test_predictions_in_time_order(self, grid_spec, meteo, landcover, elevation, small_smooth):
        model = fit(small_smooth.table, ForestConfig(n_estimators=3, seed=0))
        grid = build_prediction_grid(grid_spec, landcover, elevation)
        fields = [field(grid_spec, OVERPASS + 600), field(grid_spec, OVERPASS)]
        frame = predict_grid(model, grid, fields, meteo)
        assert list(frame.columns) == ["time_unix", "row", "col", "prediction"]
        assert len(frame) == 6
        assert frame["time_unix"].is_monotonic_increasing
        lo, hi = model.target_range
        assert frame["prediction"].between(lo, hi).all()


class TestAggregation:
    """Annual mean raster and monthly statistics."""

    def test_annual_mean(self, grid_spec):
        predictions = pd.DataFrame({
            "time_unix": [T0, T0, T0 + 86400],
            "row": [0, 1, 0],
            "col": [0, 1, 0],
            "prediction": [10.0, 7.0, 20.0],
        })
        raster = annual_mean(predictions, grid_spec)
        assert raster.values[0, 0] == 15.0
        assert raster.values[1, 1] == 7.0
        assert np.isnan(raster.values[0, 1])

    def test_annual_mean_outside_grid(self, grid_spec):
        predictions = pd.DataFrame({"time_unix": [T0], "row": [2], "col": [0], "prediction": [1.0]})
        with pytest.raises(GridMismatchError):
            annual_mean(predictions, grid_spec)

    def test_monthly_box_statistics(self, tmp_path):
        values = list(range(1, 10)) + [100]
        predictions = pd.DataFrame({
            "time_unix": [1546300800 + 3600 * i for i in range(10)] + [T0],
            "row": 0, "col": 0,
            "prediction": [float(v) for v in values] + [42.0],
        })
        stats = monthly_stats(predictions)
        assert [s.month for s in stats] == [1, 6]
        january = stats[0]
        assert (january.min, january.max, january.n) == (1.0, 100.0, 10)
        assert january.q1 == pytest.approx(3.25)
        assert january.median == pytest.approx(5.5)
        assert january.q3 == pytest.approx(7.75)
        assert january.whisker_lo == 1.0
        assert january.whisker_hi == 9.0
        assert january.mean == pytest.approx(14.5)

        lines = write_monthly_stats(stats, tmp_path / "monthly.csv").read_text().splitlines()
        assert lines[0] == "month,min,q1,median,q3,max,mean,whisker_lo,whisker_hi,n"
        assert len(lines) == 3


class TestAsciiGrid:
    """ESRI ASCII raster files."""

    def test_write_read_identity(self, tmp_path):
        spec = GridSpec(lat_min=36.0, lon_min=-9.5, cell_size=0.03, n_rows=4, n_cols=5)
        rng = np.random.default_rng(0)
        values = rng.uniform(0, 80, (4, 5))
        values[1, 2] = np.nan
        path = write_ascii_grid(Raster(spec=spec, values=values), tmp_path / "annual.asc")
        again = read_ascii_grid(path)
        assert again.spec == spec
        np.testing.assert_array_equal(again.values, values)

    def test_layout(self, tmp_path):
        spec = GridSpec(lat_min=40.0, lon_min=-4.0, cell_size=0.5, n_rows=2, n_cols=2)
        values = np.array([[1.0, 2.0], [3.0, np.nan]])
        lines = write_ascii_grid(Raster(spec=spec, values=values), tmp_path / "a.asc").read_text().splitlines()
        assert lines[:6] == ["ncols 2", "nrows 2", "xllcorner -4", "yllcorner 40", "cellsize 0.5",
                             f"NODATA_value {NODATA}"]
        # northern row first
        assert lines[6] == "3 -9999"
        assert lines[7] == "1 2"

    def test_bad_body(self, tmp_path):
        path = tmp_path / "bad.asc"
        path.write_text("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 2\n")
        with pytest.raises(SchemaError):
            read_ascii_grid(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.asc"
        path.write_text("ncols 2\nrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 2\n3 4\n")
        with pytest.raises(SchemaError):
            read_ascii_grid(path)
