import numpy as np
import pytest

from voltref.feeder import build_feeder, load_ieee33


@pytest.fixture(scope="session")
def ieee33():
    return load_ieee33()


@pytest.fixture
def single_line():
    return build_feeder([(0, 1, 0.05, 0.10)], slack=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
