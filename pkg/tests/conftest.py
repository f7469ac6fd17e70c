import logging

import pytest

from sttrace import SpaceTimeTraceFEM
from sttrace.scenes import get_scene
from sttrace.verify import _slab


@pytest.fixture(autouse=True)
def _quiet_logs(caplog):
    caplog.set_level(logging.ERROR, logger="sttrace")


@pytest.fixture(scope="session")
def moving_circle():
    return get_scene("moving_circle")


@pytest.fixture(scope="session")
def slab_l1(moving_circle):
    """(mesh, grid, ls, topo, deform) of slab 1 at level 1, k_g = 1."""
    return _slab(moving_circle, 1)


@pytest.fixture(scope="session")
def slab_l1_kg2(moving_circle):
    return _slab(moving_circle, 1, n=2, k_g=2)


@pytest.fixture(scope="session")
def fitted_l1():
    return SpaceTimeTraceFEM(k=1, level_s=1, level_q=1).fit("moving_circle")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
