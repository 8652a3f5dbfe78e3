from pathlib import Path

import numpy as np
import pytest

DATA_DIR = Path(__file__).parent / "data"

# lines collected by tests/test_acceptance.py, echoed once at the end of the run
ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def sphere_points(rng, n, d):
    P = rng.standard_normal((n, d))
    return P / np.linalg.norm(P, axis=1, keepdims=True)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
