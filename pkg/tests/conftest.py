import math
from pathlib import Path

import numpy as np
import pytest

from clutterprop.geodesy import EARTH_RADIUS_M
from clutterprop.raster import Raster, RasterKind

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures():
    return FIXTURES


def make_raster(values, xll=-75.0, yll=45.0, cell=0.001, kind=RasterKind.ELEVATION,
                nodata=-9999.0):
    values = np.asarray(values, dtype=float)
    nrows, ncols = values.shape
    return Raster(ncols, nrows, xll, yll, cell, values, nodata, kind)


METER_DEG = 180.0 / (math.pi * EARTH_RADIUS_M)


def spike_scene(size=500, spikes=((250, 250),), height=20.0, lat0=45.0, lon0=-75.0):
    """Flat 1 m HAG grid of ``size`` x ``size`` cells with isolated one-cell spikes.

    Spikes are given as (row, col). Returns (hag raster, terrain raster).
    """
    values = np.zeros((size, size))
    for i, j in spikes:
        values[i, j] = height
    hag = make_raster(values, xll=lon0, yll=lat0, cell=METER_DEG, kind=RasterKind.HEIGHT)
    terrain = make_raster(np.full((size, size), 50.0), xll=lon0, yll=lat0, cell=METER_DEG)
    return hag, terrain


# --- acceptance reporting ------------------------------------------------------

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.failed):
        status = "PASS" if report.passed else "FAIL"
        if _ACCEPTANCE.get(number, ("", "PASS"))[1] == "PASS":
            _ACCEPTANCE[number] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status = _ACCEPTANCE[number]
        terminalreporter.write_line(f"{status}  {number:>2}. {title}")
