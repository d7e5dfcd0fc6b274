"""Swap on the trace of the expected return covariance."""

from __future__ import annotations

import math

import numpy as np

from .contracts import VARIANCE_SCALE, Measure, PricingResult, SwapContract
from .errors import ConsistencyError, DimensionError
from .regime_covariance import ExpectedCovariance

__all__ = ["SwapContract", "PricingResult", "trace_of", "price_trace", "check_consistency"]


def trace_of(matrix) -> float:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionError(f"trace of a non-square array of shape {matrix.shape}")
    return float(np.trace(matrix))


def check_consistency(expected: ExpectedCovariance, contract: SwapContract) -> None:
    if expected.maturity_days != contract.maturity_days or not math.isclose(
        expected.daily_rate, contract.daily_rate, rel_tol=0.0, abs_tol=1e-15
    ):
        raise ConsistencyError(
            f"expected covariance built for T={expected.maturity_days}, r={expected.daily_rate} "
            f"but contract has T={contract.maturity_days}, r={contract.daily_rate}"
        )


def price_trace(expected: ExpectedCovariance, contract: SwapContract) -> PricingResult:
    if contract.measure is not Measure.TRACE:
        raise ConsistencyError(f"contract measure is {contract.measure.value}, not trace")
    check_consistency(expected, contract)
    gross = trace_of(expected.matrix)
    strike = contract.discounted_strike
    price = (gross - strike) * (contract.notional_units / VARIANCE_SCALE)
    return PricingResult(
        price,
        gross,
        strike,
        {
            "measure": contract.measure.value,
            "mode": expected.mode.value,
            "initial": expected.initial.tolist(),
            "discount_factor": contract.discount_factor,
        },
    )
