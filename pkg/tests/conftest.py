import os
import sys
import pytest
from pathlib import Path

# Get the absolute path to the project root directory
project_root = Path(__file__).parent.parent.absolute()

# Add the project root to the Python path
sys.path.insert(0, str(project_root))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run the heavy Monte Carlo acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def setup_test_env(monkeypatch):
    """Keep worker-count resolution independent of the machine running the tests."""
    monkeypatch.delenv("LEO_COVERAGE_WORKERS", raising=False)
    yield
    from src import worker_manager
    worker_manager.shutdown_worker_pool()


@pytest.fixture
def geom():
    from src.geometry import GeometryParams
    return GeometryParams(earth_radius=6371.0e3, altitude=1200.0e3)


@pytest.fixture
def net():
    from src.visibility import NetworkParams
    return NetworkParams(n_sats=720, n_channels=20)
