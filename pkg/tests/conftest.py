import numpy as np
import pytest

from polyboltz.cross_section import CrossSectionModel, GasSpec
from polyboltz.quadrature import QuadratureSpec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def gas_half():
    return GasSpec(0.5, 0.0)


@pytest.fixture
def total_form():
    return CrossSectionModel("TotalEnergyForm")


@pytest.fixture
def quad():
    return QuadratureSpec(samples=100_000, seed=2024)


def random_unit(rng, m):
    u = rng.standard_normal((m, 3))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


# PASS/FAIL lines from the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
