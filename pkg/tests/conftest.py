import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import settings

settings.register_profile("amgr", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("amgr")

ACCEPTANCE_LINES = []


def lap1d(n):
    return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")


def lap2d(n):
    I = sp.identity(n)
    A = sp.csr_matrix(sp.kron(I, lap1d(n)) + sp.kron(lap1d(n), I))
    A.eliminate_zeros()
    return A


def random_spd(n, density, rng):
    """Sparse SPD matrix: symmetric random pattern made diagonally dominant."""
    M = sp.random(n, n, density=density, random_state=rng, format="csr")
    M = -(M + M.T)
    d = np.asarray(abs(M).sum(axis=1)).ravel() + rng.uniform(0.1, 1.0, n)
    return sp.csr_matrix(M + sp.diags(d))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance_line():
    def record(criterion, passed, detail):
        line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
