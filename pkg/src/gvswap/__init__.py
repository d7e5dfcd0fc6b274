"""Generalised-variance swap pricing under Markov-modulated volatility."""

from .contracts import VARIANCE_SCALE, Measure, PricingResult, SwapContract
from .eigen_swap import Sense, constrained_max_variance, price_eigen
from .markov_engine import (
    ExpectationMode,
    GeneratorModel,
    derive_generator,
    matrix_exponential,
    propagate_expectation,
    time_averaged_discounted_expectation,
)
from .regime_covariance import (
    ExpectedCovariance,
    RegimeCovariance,
    assemble_expected_covariance,
    estimate_regime_covariance,
)
from .regime_inference import (
    Regime,
    TransitionModel,
    classify_states,
    compute_returns,
    estimate_transition,
    load_price_csv,
    stationary_distribution,
)
from .trace_swap import price_trace

__version__ = "0.1.0"

__all__ = [
    "VARIANCE_SCALE",
    "Measure",
    "PricingResult",
    "SwapContract",
    "Sense",
    "constrained_max_variance",
    "price_eigen",
    "ExpectationMode",
    "GeneratorModel",
    "derive_generator",
    "matrix_exponential",
    "propagate_expectation",
    "time_averaged_discounted_expectation",
    "ExpectedCovariance",
    "RegimeCovariance",
    "assemble_expected_covariance",
    "estimate_regime_covariance",
    "Regime",
    "TransitionModel",
    "classify_states",
    "compute_returns",
    "estimate_transition",
    "load_price_csv",
    "stationary_distribution",
    "price_trace",
]
