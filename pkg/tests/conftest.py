import numpy as np
import pytest

from shiftrec import SparseTensor


@pytest.fixture
def three_known():
    """2x2 with (1,1) missing; additive completion of [[1,2],[3,4]]."""
    return SparseTensor((2, 2), [(1, 2), (2, 1), (2, 2)], [2.0, 3.0, 4.0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_sparse(rng, shape, frac=0.6):
    mask = rng.random(shape) < frac
    return SparseTensor.from_dense(rng.normal(size=shape), mask)


# One line per acceptance criterion, printed at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
