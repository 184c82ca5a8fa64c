import numpy as np
import pytest

from repen.histmodels import Partition, fit
from repen.synthdata import DataSet

ACCEPTANCE_LINES = []


def random_fixture(rng, n=None, D=None, spread=1.0):
    """Random data and a random partition whose cells all hold >= 2 points."""
    n = int(rng.integers(8, 60)) if n is None else n
    D = int(rng.integers(1, max(2, n // 6))) if D is None else D
    while True:
        x = rng.random(n)
        inner = np.sort(rng.uniform(0.05, 0.95, D - 1))
        b = np.concatenate([[0.0], inner, [1.0]])
        if np.all(np.diff(b) > 0):
            part = Partition(b, f"rand{D}")
            data = DataSet(x, rng.normal(np.sin(3 * x), spread))
            f = fit(part, data)
            if f.min_count >= 2:
                return part, data, f


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
