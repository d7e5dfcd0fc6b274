import math

import numpy as np
import pytest

from conftest import random_spd, random_stochastic
from gvswap.contracts import Measure, SwapContract
from gvswap.errors import ConsistencyError, DimensionError, DomainError
from gvswap.regime_covariance import ExpectedCovariance, RegimeCovariance, assemble_expected_covariance
from gvswap.regime_inference import STATES, TransitionModel
from gvswap.trace_swap import price_trace, trace_of


def test_trace_identity():
    assert trace_of(np.eye(3)) == 3.0


def test_trace_table_diagonal(ref_table):
    assert trace_of(ref_table) == pytest.approx(126.493, abs=1e-12)


def test_trace_equals_eigen_sum():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(6, 6))
    a = a + a.T
    assert trace_of(a) == pytest.approx(np.linalg.eigvalsh(a).sum(), abs=1e-9)


def test_trace_non_square():
    with pytest.raises(DimensionError):
        trace_of(np.ones((2, 3)))


def test_reference_price(ref_table, trace_contract):
    res = price_trace(ExpectedCovariance.from_matrix(ref_table, trace_contract), trace_contract)
    assert res.discounted_strike == pytest.approx(87.760, abs=5e-4)
    assert res.price == pytest.approx(38.733, abs=1e-3)
    assert res.price == pytest.approx(res.gross_leg - res.discounted_strike, abs=1e-12)


def test_zero_strike(ref_table):
    c = SwapContract(63, 0.0004, 0.0)
    res = price_trace(ExpectedCovariance.from_matrix(ref_table, c), c)
    assert res.price == res.gross_leg


def test_strike_affinity(ref_table):
    prices = {}
    for k in (0.0, 30.0, 90.0, 250.0):
        c = SwapContract(63, 0.0004, k)
        prices[k] = price_trace(ExpectedCovariance.from_matrix(ref_table, c), c).price
    df = math.exp(-0.0252)
    for k in prices:
        assert prices[k] - prices[0.0] == pytest.approx(-df * k, abs=1e-12)


def test_notional_scaling(ref_table):
    c = SwapContract(63, 0.0004, 90.0, notional_units=2e6)
    res = price_trace(ExpectedCovariance.from_matrix(ref_table, c), c)
    assert res.price == pytest.approx(2 * (res.gross_leg - res.discounted_strike), abs=1e-12)


def test_additivity_and_discount():
    rng = np.random.default_rng(1)
    pi = random_stochastic(rng, 3)
    model = TransitionModel.from_counts(np.rint(pi * 10**12).astype(np.int64))
    cov = RegimeCovariance({s: random_spd(rng, 3) * 1e-4 for s in STATES})
    c = SwapContract(40, 0.001, 0.0)
    c0 = SwapContract(40, 0.0, 0.0)
    gross = price_trace(assemble_expected_covariance(cov, model, None, c), c).gross_leg
    gross0 = price_trace(assemble_expected_covariance(cov, model, None, c0), c0).gross_leg
    assert gross == pytest.approx(gross0 * math.exp(-0.04), abs=1e-12)
    single = 0.0
    for i in range(3):
        one = RegimeCovariance({s: cov.per_state[s][i : i + 1, i : i + 1] for s in STATES})
        single += price_trace(assemble_expected_covariance(one, model, None, c), c).gross_leg
    assert gross == pytest.approx(single, abs=1e-12)


def test_consistency_errors(ref_table, trace_contract):
    other = SwapContract(21, 0.0004, 90.0)
    exp = ExpectedCovariance.from_matrix(ref_table, other)
    with pytest.raises(ConsistencyError):
        price_trace(exp, trace_contract)
    eig = SwapContract(63, 0.0004, 30.0, Measure.MAX_EIGEN)
    with pytest.raises(ConsistencyError):
        price_trace(ExpectedCovariance.from_matrix(ref_table, eig), eig)


def test_contract_validation():
    with pytest.raises(DomainError):
        SwapContract(0, 0.0004, 90.0)
    with pytest.raises(DomainError):
        SwapContract(63, 0.0004, -1.0)
    with pytest.raises(DomainError):
        SwapContract(63, 0.0004, 1.0, notional_units=0.0)
