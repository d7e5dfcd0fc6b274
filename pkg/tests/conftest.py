import math
from pathlib import Path

import numpy as np
import pytest

from gvswap.contracts import Measure, SwapContract
from gvswap.regime_covariance import RegimeCovariance
from gvswap.regime_inference import STATES, TransitionModel

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

REF_COUNTS = np.array([[26, 23, 31], [28, 26, 23], [26, 28, 39]])
REF_MEANS = np.array([0.000664, 0.000873, 0.000725])
REF_K = 0.0007
MATURITY = 63
RATE = 0.0004


def load_matrix(name):
    return np.loadtxt(FIXTURES / name)


def regime_fixture(model, table, perturb=0.0):
    """Per-state covariances whose stationary, discounted mix is ``table``.

    States scale the table by ``c_s`` with ``p . c = 1``.  ``perturb`` adds
    a rank-one term along the middle eigenvector of ``table`` whose
    stationary mean is zero, so the per-state optima stop being collinear.
    """
    p = model.stationary
    c = np.array([1.25, 0.95, 0.0])
    c[2] = (1.0 - p[:2] @ c[:2]) / p[2]
    _, vecs = np.linalg.eigh(table)
    v = vecs[:, 1]
    alpha = np.array([perturb, 0.0, -perturb * p[0] / p[2]])
    scale = math.exp(-RATE * MATURITY) * 1e6
    return RegimeCovariance(
        {s: (c[i] * table + alpha[i] * np.outer(v, v)) / scale for i, s in enumerate(STATES)}
    )


@pytest.fixture(scope="session")
def ref_model():
    return TransitionModel.from_counts(REF_COUNTS)


@pytest.fixture(scope="session")
def ref_table():
    return load_matrix("expected_covariance.txt")


@pytest.fixture
def trace_contract():
    return SwapContract(MATURITY, RATE, 90.0, Measure.TRACE)


@pytest.fixture
def eigen_contract():
    return SwapContract(MATURITY, RATE, 30.0, Measure.MAX_EIGEN)


def random_generator(rng, m):
    q = rng.uniform(0.05, 1.0, size=(m, m))
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q


def random_stochastic(rng, m):
    pi = rng.uniform(0.1, 1.0, size=(m, m))
    return pi / pi.sum(axis=1, keepdims=True)


def random_spd(rng, n, floor=0.1):
    a = rng.normal(size=(n, n))
    return a @ a.T + floor * np.eye(n)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
