import numpy as np
import pytest

from geoseg.raster import GeoTransform
from geoseg.synthetic import synthetic_scene
from geoseg.tiling import Dataset, plan_grid, split_raster


@pytest.fixture
def geo():
    return GeoTransform(120.5, 16.4, 0.08, -0.08, crs_id="EPSG:32651")


@pytest.fixture
def scene(geo):
    return synthetic_scene(1024, 1024, 3, seed=11, geo=geo)


@pytest.fixture
def dataset(tmp_path, scene):
    image, labels = scene
    grid = plan_grid(1024, 1024, 512, 512, 0.5)
    split_raster(image, labels, grid, tmp_path / "ds", class_count=3)
    return Dataset(tmp_path / "ds")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria report: one line per criterion, printed after the run
ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record a criterion verdict: ``criterion(n, ok, detail)`` then assert."""
    def record(number, ok, detail=""):
        ACCEPTANCE[number] = (bool(ok), detail)
        assert ok, f"criterion {number}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
