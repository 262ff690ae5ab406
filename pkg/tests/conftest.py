import numpy as np
import pytest

from nonlocal_euler.grid import Grid1D
from nonlocal_euler.kernel import KernelSpec

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def gauss():
    return KernelSpec("gaussian", 0.5)


@pytest.fixture
def grid():
    return Grid1D(-10.0, 10.0, 256)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
