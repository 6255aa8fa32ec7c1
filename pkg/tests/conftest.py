import numpy as np
import pytest

from helpers import ACCEPTANCE_LINES, make_annotation


@pytest.fixture
def annotation():
    return make_annotation()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
