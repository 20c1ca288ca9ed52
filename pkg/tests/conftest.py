import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_addoption(parser):
    parser.addoption("--runslow-only", action="store_true", default=False,
                     help="run only tests marked slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow-only"):
        skip = pytest.mark.skip(reason="running slow tests only")
        for item in items:
            if "slow" not in item.keywords:
                item.add_marker(skip)
