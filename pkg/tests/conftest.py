import numpy as np
import pytest

from percomp.grid import PeriodicGrid
from percomp.model import FourierSeries, ReactionSpec, SystemParams
from percomp.stationary import extinction_states


def heterogeneous_spec(period=1.0):
    return ReactionSpec(FourierSeries(1.0, sin=(0.3,)), FourierSeries(1.0),
                        FourierSeries(1.0, cos=(0.2,)), FourierSeries(1.0), period=period)


@pytest.fixture
def hetero():
    spec = heterogeneous_spec()
    params = SystemParams(d=2.0, k=100.0, alpha=1.0, L=1.0)
    grid = PeriodicGrid(1.0, 256)
    return spec, params, grid


@pytest.fixture(scope="session")
def hetero_ext():
    spec = heterogeneous_spec()
    params = SystemParams(d=2.0, k=100.0, alpha=1.0, L=1.0)
    grid = PeriodicGrid(1.0, 64)
    return spec, params, grid, extinction_states(spec, params, grid)


def sup(a):
    return float(np.max(np.abs(a)))


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
