import logging
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from models import LandCoverRaster, METEO_VARIABLES, MeteoFieldSet, SECONDS_PER_HOUR  # noqa: E402
from schemas import GridSpec  # noqa: E402
from seed_data import smooth_suite  # noqa: E402

T0 = 1559563200  # 2019-06-03 12:00 UTC, a Monday


@pytest.fixture(autouse=True)
def restore_logging():
    """The CLI reconfigures the root logger; put it back after every test"""
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def grid_spec():
    return GridSpec(lat_min=40.0, lon_min=-4.0, cell_size=0.03, n_rows=2, n_cols=2)


@pytest.fixture
def meteo():
    """Two hours of linear-in-space fields on a 3x3 node grid around the test area"""
    spec = GridSpec(lat_min=39.9, lon_min=-4.1, cell_size=0.1, n_rows=3, n_cols=3)
    rows, cols = np.indices((3, 3))
    variables = {}
    for k, name in enumerate(METEO_VARIABLES):
        layer = 10.0 * k + rows + 2.0 * cols
        variables[name] = np.stack([layer, layer + 1.0])
    variables["wind_u10"] = np.full((2, 3, 3), 3.0)
    variables["wind_v10"] = np.full((2, 3, 3), 4.0)
    return MeteoFieldSet(spec=spec, times=[T0, T0 + SECONDS_PER_HOUR], variables=variables)


@pytest.fixture
def landcover():
    """0.005 degree pixels over the 2x2 test grid; left half urban, right half broadleaf"""
    spec = GridSpec(lat_min=40.0, lon_min=-4.0, cell_size=0.005, n_rows=12, n_cols=12)
    codes = np.full((12, 12), 311, dtype=np.int64)
    codes[:, :6] = 111
    return LandCoverRaster(spec=spec, codes=codes)


@pytest.fixture(scope="session")
def small_smooth():
    return smooth_suite(n_rows=600, n_stations=30, seed=3)
