import numpy as np
import pytest

from funcindex.functions import make_grid

# Lines recorded by the acceptance suite, printed at the end of the session.
CRITERIA: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[number])


@pytest.fixture
def grid512():
    return make_grid(512)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
