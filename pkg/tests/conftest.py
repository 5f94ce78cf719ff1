import numpy as np
import pytest

from geoseg.raster import Raster



@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_raster(h=40, w=50, seed=0, labels=True):
    r = np.random.default_rng(seed)
    lab = r.integers(0, 6, (h, w)).astype(np.uint8) if labels else None
    return Raster(r.random((h, w)), r.random((h, w, 3)), lab, (2.0, 12.0))


@pytest.fixture
def small_raster():
    return make_raster()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
