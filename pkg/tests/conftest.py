import numpy as np
import pytest

from mefem.material import MaterialLaw

# Coupling whose six half-sums are all positive but which, unlike the all-ones
# matrix, couples every gradient direction (M = 0.5).
BALANCED_COUPLING = np.array([
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.5, 0.5],
    [0.5, 0.0, 0.5],
    [0.5, 0.5, 0.0],
])

CRITERIA: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
    CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[number])


@pytest.fixture
def unit_law():
    return MaterialLaw.unit()


@pytest.fixture
def balanced_law():
    return MaterialLaw.unit(BALANCED_COUPLING)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def random_tet(rng, scale=1.0):
    """A well-shaped, positively oriented random tetrahedron."""
    while True:
        x = scale * (np.eye(4, 3, k=-1) + 0.25 * rng.standard_normal((4, 3)))
        d = np.linalg.det(x[1:] - x[0])
        if d > 0.05 * scale**3:
            return x
