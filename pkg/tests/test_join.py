"""
Tests for station interpolation, meteo sampling and land cover fractions.
"""
import numpy as np
import pytest

from errors import DataError, OutOfBoundsError
from join import (
    METEO_FEATURES,
    interp_observation,
    landcover_fractions,
    meteo_at,
    meteo_at_points,
    meteo_covers,
)
from models import METEO_VARIABLES, StationSeries
from schemas import GeoPoint, StationMeta, StationType

from conftest import T0

META = StationMeta(station_id="ES0001", location=GeoPoint(latitude=40.01, longitude=-3.99, altitude=650.0),
                   station_type=StationType.traffic)


def series(times, values):
    return StationSeries(meta=META, times=times, values=values)


class TestInterpObservation:
    """Linear interpolation of hourly station series."""

    def test_exact_hit(self):
        s = series([T0, T0 + 3600], [10.0, 20.0])
        assert interp_observation(s, T0 + 3600) == 20.0

    def test_midpoint(self):
        s = series([T0, T0 + 3600], [10.0, 20.0])
        assert interp_observation(s, T0 + 1800) == pytest.approx(15.0)

    def test_outside_the_series(self):
        s = series([T0, T0 + 3600], [10.0, 20.0])
        assert interp_observation(s, T0 - 1) is None
        assert interp_observation(s, T0 + 3601) is None

    def test_gap_longer_than_max_gap(self):
        s = series([T0, T0 + 3 * 3600], [10.0, 20.0])
        assert interp_observation(s, T0 + 3600) is None
        assert interp_observation(s, T0 + 3600, max_gap=3 * 3600) == pytest.approx(10.0 + 10.0 / 3)

    def test_empty_series(self):
        assert interp_observation(series([], []), T0) is None

    def test_invalid_max_gap(self):
        with pytest.raises(DataError):
            interp_observation(series([T0], [1.0]), T0, max_gap=0)

    def test_negative_concentration_rejected(self):
        with pytest.raises(ValueError):
            series([T0], [-1.0])


class TestMeteo:
    """Bilinear-in-space, linear-in-time meteo sampling."""

    def test_node_values_reproduced(self, meteo):
        values = meteo_at(meteo, GeoPoint(latitude=40.0, longitude=-4.0), T0)
        k = METEO_VARIABLES.index("temp_2m")
        # node (1, 1): 10k + 1 + 2
        assert values["temp_2m"] == pytest.approx(10.0 * k + 3.0)

    def test_bilinear_between_nodes(self, meteo):
        values = meteo_at(meteo, GeoPoint(latitude=40.05, longitude=-3.95), T0)
        k = METEO_VARIABLES.index("blh")
        assert values["blh"] == pytest.approx(10.0 * k + 1.5 + 3.0)

    def test_linear_in_time(self, meteo):
        values = meteo_at(meteo, GeoPoint(latitude=40.0, longitude=-4.0), T0 + 900)
        k = METEO_VARIABLES.index("ssrd")
        assert values["ssrd"] == pytest.approx(10.0 * k + 3.0 + 0.25)

    def test_wind_replaces_components(self, meteo):
        values = meteo_at(meteo, GeoPoint(latitude=40.0, longitude=-4.0), T0)
        assert tuple(values) == METEO_FEATURES
        assert values["wind_speed"] == pytest.approx(5.0)
        assert 0.0 <= values["wind_direction"] < 360.0

    def test_outside_space(self, meteo):
        with pytest.raises(OutOfBoundsError):
            meteo_at(meteo, GeoPoint(latitude=41.0, longitude=-4.0), T0)

    def test_outside_time(self, meteo):
        with pytest.raises(OutOfBoundsError):
            meteo_at(meteo, GeoPoint(latitude=40.0, longitude=-4.0), T0 + 7200)

    def test_coverage_mask(self, meteo):
        mask = meteo_covers(meteo, [40.0, 40.1, 40.2], [-4.0, -3.9, -3.9])
        assert mask.tolist() == [True, True, False]

    def test_points_match_single_lookups(self, meteo):
        lats, lons = np.array([39.95, 40.07]), np.array([-4.02, -3.93])
        batch = meteo_at_points(meteo, lats, lons, T0 + 1200)
        for i in range(2):
            one = meteo_at(meteo, GeoPoint(latitude=lats[i], longitude=lons[i]), T0 + 1200)
            for name in METEO_FEATURES:
                assert batch[name][i] == pytest.approx(one[name])


class TestLandcoverFractions:
    """Share of pixel centres per selected class."""

    def test_single_class_cell(self, landcover):
        fractions = landcover_fractions(landcover, (40.0, 40.03, -4.0, -3.97))
        assert fractions["lc_continuous_urban"] == 1.0
        assert fractions["lc_broadleaf"] == 0.0

    def test_mixed_cell(self, landcover):
        fractions = landcover_fractions(landcover, (40.0, 40.03, -3.985, -3.955))
        assert fractions["lc_continuous_urban"] == pytest.approx(0.5)
        assert fractions["lc_broadleaf"] == pytest.approx(0.5)
        assert sum(fractions.values()) == pytest.approx(1.0)

    def test_unselected_classes_count_in_the_total(self, landcover):
        codes = landcover.codes.copy()
        codes[:6, :6] = 211
        raster = landcover.model_copy(update={"codes": codes})
        fractions = landcover_fractions(raster, (40.0, 40.06, -4.0, -3.97))
        assert fractions["lc_continuous_urban"] == pytest.approx(0.5)

    def test_cell_without_pixels(self, landcover):
        with pytest.raises(DataError):
            landcover_fractions(landcover, (41.0, 41.03, -4.0, -3.97))
