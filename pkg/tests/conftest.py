import warnings

import numpy as np
import pytest

from helpers import ACCEPTANCE_LINES
from shiftrom.bench import build_offline, load_case
from shiftrom.grid import CartesianGrid


def pytest_addoption(parser):
    parser.addoption("--longrun", action="store_true", help="also run the optional full-size runs")


def pytest_configure(config):
    # calibrations on coarse grids may fall back to zero shifts; that is tested explicitly
    warnings.filterwarnings("ignore", category=UserWarning, module="shiftrom")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--longrun"):
        return
    skip = pytest.mark.skip(reason="full-size run; pass --longrun")
    for item in items:
        if "longrun" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def grid2d():
    """4 x 4 cells of width 0.25 on the unit square."""
    return CartesianGrid(2, 4, (0.0, 0.0), 1.0)


@pytest.fixture
def grid1d():
    return CartesianGrid(1, 10, (0.0,), 1.0)


@pytest.fixture(scope="session")
def tiny_test1():
    """Test-1 on 100 cells with its offline phase (shared, read-only)."""
    case = load_case("test1-small", n_x=100, target_mu=4, repeats=1, sweep_n=(10, 20))
    return build_offline(case)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
