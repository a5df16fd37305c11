"""
Tests for the synthetic suites.
"""
import numpy as np
import pytest

from errors import DataError
from seed_data import NOISE_COLUMNS, feature_index, importance_suite, make_suite, smooth_suite


class TestSuites:
    """Shapes and generating functions."""

    def test_smooth_targets_follow_the_formula(self):
        suite = smooth_suite(n_rows=200, n_stations=10, noise=0.0, seed=1)
        X = suite.table.features
        x0, x1 = X[:, feature_index("satellite_value")], X[:, feature_index("temp_2m")]
        np.testing.assert_allclose(suite.table.targets, 10 * np.sin(x0) + x1 ** 2 + 15.0)
        assert len(suite.stations) == 10
        assert len(suite.table) == 200

    def test_station_offsets(self):
        suite = make_suite("station-effects", n_rows=300, n_stations=10, seed=2, noise=0.0)
        X = suite.table.features
        base = 10 * np.sin(X[:, feature_index("satellite_value")]) + X[:, feature_index("temp_2m")] ** 2 + 15.0
        frame = suite.table.frame.assign(offset=suite.table.targets - base)
        # targets are clipped at zero
        offsets = frame[frame["target"] > 0].groupby("station_id")["offset"]
        assert (offsets.max() - offsets.min()).max() < 1e-9
        assert offsets.mean().std() > 0.5

    def test_importance_suite(self):
        suite = importance_suite(n_rows=100, n_stations=5, seed=0)
        X = suite.table.features
        np.testing.assert_array_equal(suite.table.targets, X[:, feature_index("satellite_value")])
        for name in NOISE_COLUMNS:
            assert X[:, feature_index(name)].std() > 1.0

    def test_seeded(self):
        a = make_suite("noise", n_rows=50, n_stations=5, seed=3)
        b = make_suite("noise", n_rows=50, n_stations=5, seed=3)
        assert a.table.frame.equals(b.table.frame)

    def test_unknown_suite(self):
        with pytest.raises(DataError):
            make_suite("pipeline")

    def test_too_few_rows(self):
        with pytest.raises(DataError):
            smooth_suite(n_rows=5, n_stations=10)
