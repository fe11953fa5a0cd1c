import numpy as np
import pytest

from ditreg.geometry import make_pair, sample_shape


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def clean_pair(rng):
    return make_pair(sample_shape("cube", 64, rng), "clean", rng)


ACCEPTANCE_LINES = []


@pytest.fixture
def record():
    """Store a one-line acceptance verdict; printed in the terminal summary."""

    def _record(number, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
