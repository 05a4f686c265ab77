import numpy as np
import pytest

from levyregen.levy_core import LevyModel

STEP = 2.0**-8


@pytest.fixture
def bm():
    return LevyModel.brownian(0.3, 1.0)


@pytest.fixture
def bm_cp():
    return LevyModel.from_parts(0.3, 1.0, [(1.0, 1.0), (-1.0, 1.0)])


@pytest.fixture
def bm_cp_killed():
    return LevyModel.from_parts(0.3, 1.0, [(1.0, 1.0), (-1.0, 1.0)], kill_rate=0.7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


CRITERIA: dict[int, str] = {}


@pytest.fixture
def record():
    """Store a one-line acceptance verdict, printed in the terminal summary."""
    def _record(number: int, ok: bool, text: str):
        CRITERIA[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {text}"
    return _record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
