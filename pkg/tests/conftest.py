import numpy as np
import pytest

from pathtomo.geometry import grid_2x3, plan_measurements
from pathtomo.optics import OpticalConfig


@pytest.fixture(scope="session")
def cfg():
    return OpticalConfig()


@pytest.fixture(scope="session")
def grid():
    return grid_2x3()


@pytest.fixture(scope="session")
def grid_plan(grid):
    return plan_measurements(grid)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion; printed at the end of the run."""

    def record(number: int, ok: bool, detail: str) -> bool:
        _VERDICTS.append(f"{'PASS' if ok else 'FAIL'}  criterion {number:2d}: {detail}")
        print(_VERDICTS[-1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
