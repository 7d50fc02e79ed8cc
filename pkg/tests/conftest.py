import numpy as np
import pytest

from hypertorus import field as F
from hypertorus.gluing import build_gluing

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def cat():
    return build_gluing([[2, 1], [1, 1]])


@pytest.fixture(scope="session")
def grid16(cat):
    return F.make_grid(cat, 16, 16)


@pytest.fixture(scope="session")
def grid32(cat):
    return F.make_grid(cat, 32, 32)


@pytest.fixture(scope="session")
def grid64(cat):
    return F.make_grid(cat, 64, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
