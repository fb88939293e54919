import numpy as np
import pytest

from designcover import kernels
from designcover.cover import ParamPoint

ACCEPTANCE_LINES = []


def make_points(coords, start=0):
    return [ParamPoint(start + i, tuple(np.atleast_1d(c))) for i, c in enumerate(coords)]


def random_points(rng, n, d, low=0.0, high=1.0):
    return make_points(rng.uniform(low, high, size=(n, d)))


def in_box(p, center, sides):
    """Closed-box membership written out per coordinate."""
    for x, c, s in zip(p, center, sides):
        h = s / 2.0
        if abs(x - c) > h + kernels.MEMBERSHIP_REL_SLACK * (abs(c) + h):
            return False
    return True


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=sorted(kernels.backends()))
def backend(request):
    return kernels.backends()[request.param]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
