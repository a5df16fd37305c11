"""
Tests for feature table assembly and the table CSV format.
"""
import numpy as np
import pytest

from dataset import FEATURE_COLUMNS, TABLE_COLUMNS, build_table, read_table, table_from_records, write_table
from errors import DataError, GridMismatchError, SchemaError
from models import GridField, StationSeries
from schemas import GeoPoint, GridSpec, PollutantKind, StationMeta, StationType

from conftest import T0

OVERPASS = T0 + 1800


def station(station_id, lat, lon):
    return StationMeta(station_id=station_id, location=GeoPoint(latitude=lat, longitude=lon, altitude=600.0),
                       station_type=StationType.background)


def field(spec, t, filled=((0, 0, 4e-5), (1, 1, 6e-5)), variable="tropospheric_no2_column"):
    mean = np.full((spec.n_rows, spec.n_cols), np.nan)
    count = np.zeros((spec.n_rows, spec.n_cols), dtype=np.int64)
    for row, col, value in filled:
        mean[row, col] = value
        count[row, col] = 3
    return GridField(spec=spec, mean=mean, count=count, overpass_time=t, variable=variable)


@pytest.fixture
def stations():
    return [
        StationSeries(meta=station("B", 40.01, -3.99), times=[T0, T0 + 3600], values=[10.0, 20.0]),
        StationSeries(meta=station("A", 40.04, -3.95), times=[T0, T0 + 3600], values=[30.0, 30.0]),
        # empty cell (0, 1)
        StationSeries(meta=station("C", 40.01, -3.95), times=[T0, T0 + 3600], values=[5.0, 5.0]),
        # outside the grid
        StationSeries(meta=station("D", 40.5, -3.5), times=[T0, T0 + 3600], values=[5.0, 5.0]),
    ]


class TestBuildTable:
    """Joining stations, grid fields, meteo and land cover."""

    def test_rows_where_every_source_has_data(self, grid_spec, stations, meteo, landcover):
        table = build_table(stations, [field(grid_spec, OVERPASS)], meteo, landcover, PollutantKind.NO2)
        assert list(table.frame.columns) == list(TABLE_COLUMNS)
        assert table.frame["station_id"].tolist() == ["A", "B"]

        b = table.row(1)
        assert b.target == pytest.approx(15.0)
        assert b.satellite_value == 4e-5
        assert b.lc_continuous_urban == 1.0
        assert (b.day_of_week, b.hour, b.month, b.year) == (1, 12, 6, 2019)
        assert b.wind_speed == pytest.approx(5.0)
        assert b.station_type_code == 3

    def test_landcover_is_taken_over_the_station_cell(self, grid_spec, stations, meteo, landcover):
        table = build_table(stations, [field(grid_spec, OVERPASS)], meteo, landcover, PollutantKind.NO2)
        a = table.row(0)
        # cell (1, 1) spans lon [-3.97, -3.94): broadleaf only
        assert a.lc_broadleaf == 1.0
        assert a.lc_continuous_urban == 0.0

    def test_sorted_by_time_then_station(self, grid_spec, stations, meteo, landcover):
        fields = [field(grid_spec, OVERPASS + 600), field(grid_spec, OVERPASS)]
        table = build_table(stations, fields, meteo, landcover, PollutantKind.NO2)
        keys = list(zip(table.frame["time_unix"], table.frame["station_id"]))
        assert keys == sorted(keys)
        assert len(table) == 4

    def test_overpass_outside_observations_is_skipped(self, grid_spec, stations, meteo, landcover):
        table = build_table(stations, [field(grid_spec, T0 + 3000), field(grid_spec, T0 - 60)],
                            meteo, landcover, PollutantKind.NO2)
        assert set(table.frame["time_unix"]) == {T0 + 3000}

    def test_no_fields_gives_empty_table(self, stations, meteo, landcover):
        table = build_table(stations, [], meteo, landcover, PollutantKind.NO2)
        assert len(table) == 0
        assert list(table.frame.columns) == list(TABLE_COLUMNS)

    def test_wrong_satellite_variable(self, grid_spec, stations, meteo, landcover):
        with pytest.raises(DataError, match="o3_total_column"):
            build_table(stations, [field(grid_spec, OVERPASS)], meteo, landcover, PollutantKind.O3)

    def test_fields_on_different_grids(self, grid_spec, stations, meteo, landcover):
        other = GridSpec(lat_min=40.0, lon_min=-4.0, cell_size=0.03, n_rows=2, n_cols=3)
        with pytest.raises(GridMismatchError):
            build_table(stations, [field(grid_spec, OVERPASS), field(other, OVERPASS + 60)],
                        meteo, landcover, PollutantKind.NO2)

    def test_duplicate_station_ids(self, grid_spec, stations, meteo, landcover):
        with pytest.raises(DataError):
            build_table(stations + stations[:1], [field(grid_spec, OVERPASS)], meteo, landcover, PollutantKind.NO2)


class TestTableFile:
    """CSV serialization of feature tables."""

    def test_write_read_identity(self, small_smooth, tmp_path):
        table = small_smooth.table
        path = write_table(table, tmp_path / "table.csv")
        again = read_table(path)
        assert again.frame.equals(table.frame)
        assert path.read_text(encoding="utf-8").splitlines()[0] == ",".join(TABLE_COLUMNS)

    def test_prediction_rows_keep_empty_targets(self, small_smooth, tmp_path):
        frame = small_smooth.table.frame.head(5).copy()
        frame["target"] = np.nan
        table = table_from_records(frame.to_dict("records"))
        again = read_table(write_table(table, tmp_path / "grid.csv"))
        assert np.isnan(again.targets).all()
        assert not again.has_targets

    def test_non_numeric_cell_names_row_and_column(self, small_smooth, tmp_path):
        path = write_table(small_smooth.table, tmp_path / "table.csv")
        lines = path.read_text(encoding="utf-8").splitlines()
        cells = lines[3].split(",")
        cells[FEATURE_COLUMNS.index("blh")] = "high"
        lines[3] = ",".join(cells)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(SchemaError) as excinfo:
            read_table(path)
        assert excinfo.value.row == 2
        assert excinfo.value.column == "blh"

    def test_missing_column(self, small_smooth, tmp_path):
        path = tmp_path / "table.csv"
        small_smooth.table.frame.drop(columns=["ssrd"]).to_csv(path, index=False)
        with pytest.raises(SchemaError) as excinfo:
            read_table(path)
        assert excinfo.value.column == "ssrd"

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            read_table(tmp_path / "nope.csv")

    def test_take_keeps_order(self, small_smooth):
        sub = small_smooth.table.take([5, 1, 3])
        assert sub.frame["station_id"].tolist() == small_smooth.table.frame["station_id"].iloc[[5, 1, 3]].tolist()
        assert sub.pollutant is PollutantKind.NO2
