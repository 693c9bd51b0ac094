import math
import sys

import numpy as np
import pytest

from curveflow import corpus
from curveflow.grid import ChartGrid

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="session")
def conformal2():
    return corpus.conformal(ChartGrid.cube(2, 16, TWO_PI), 0.1)


@pytest.fixture(scope="session")
def perturbed3():
    return corpus.perturbed(ChartGrid.cube(3, 12, TWO_PI), 0.1, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
