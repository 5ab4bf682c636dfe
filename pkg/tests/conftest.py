import numpy as np
import pytest

from _synth import smooth_gradient


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def gradient():
    return smooth_gradient(96, 128)


_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one acceptance result; the lines are printed in the terminal summary."""

    def record(number, ok, detail):
        _CRITERIA[number] = (bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
