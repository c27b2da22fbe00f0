from pathlib import Path

import numpy as np
import pytest

from tubelab.flow_fields import Box3
from tubelab.tube_levelset import GridSpec

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="session")
def configs_dir():
    return CONFIGS


@pytest.fixture
def box():
    return Box3((-1.0, 1.0), (-1.0, 1.0), (0.0, 1.0))


@pytest.fixture
def grid96():
    return GridSpec(96, 96, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the test session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
