import numpy as np
import pytest

from app.radar_model import DEFAULT_RADAR, RadarConfig, build_dictionary, build_grid


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run the long acceptance reproductions")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def radar():
    return DEFAULT_RADAR


@pytest.fixture(scope="session")
def dictionary(radar):
    """Default radar on the 5 x 5 x 3 x 2 grid: D = 64, M = 150."""
    return build_dictionary(radar, build_grid(radar, (5, 5, 3, 2)))


@pytest.fixture(scope="session")
def tiny_config():
    return RadarConfig(n_freq=2, n_sweeps=2, n_tx=1, n_rx=2)


@pytest.fixture(scope="session")
def tiny_dictionary(tiny_config):
    """D = 8, M = 12."""
    return build_dictionary(tiny_config, build_grid(tiny_config, (3, 2, 2, 1)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


