import numpy as np
import pytest

from afnet import _settings


@pytest.fixture(autouse=True)
def checked_ops():
    """Every test runs with the non-finite scan on."""
    with _settings.checked_mode(True):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
