"""Per-regime return covariances and their discounted expected value."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contracts import VARIANCE_SCALE, SwapContract
from .errors import DimensionError, DomainError, EstimationError
from .markov_engine import (
    ExpectationMode,
    GeneratorModel,
    resolve_initial,
    time_averaged_discounted_expectation,
)
from .regime_inference import Regime, RegimeLabeling, ReturnSeries, TransitionModel

__all__ = [
    "RegimeCovariance",
    "ExpectedCovariance",
    "estimate_regime_covariance",
    "assemble_expected_covariance",
]


@dataclass(frozen=True)
class RegimeCovariance:
    """Map from regime to its n x n return covariance (raw return units)."""

    per_state: dict[Regime, np.ndarray]

    def __post_init__(self):
        fixed = {}
        n = None
        for state, mat in self.per_state.items():
            mat = np.array(mat, dtype=float)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise DimensionError(f"{Regime.parse(state).label}: covariance must be square")
            if n is not None and mat.shape[0] != n:
                raise DimensionError("per-state covariances differ in size")
            n = mat.shape[0]
            if not np.all(np.isfinite(mat)):
                raise DomainError(f"{Regime.parse(state).label}: non-finite covariance")
            if np.max(np.abs(mat - mat.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(mat))):
                raise DomainError(f"{Regime.parse(state).label}: covariance is not symmetric")
            if np.any(np.diag(mat) < 0):
                raise DomainError(f"{Regime.parse(state).label}: negative variance")
            mat = 0.5 * (mat + mat.T)
            mat.setflags(write=False)
            fixed[Regime.parse(state)] = mat
        object.__setattr__(self, "per_state", fixed)

    @property
    def n(self) -> int:
        return next(iter(self.per_state.values())).shape[0]

    def stack(self, states) -> np.ndarray:
        """Per-state matrices as an (m, n, n) array in the order of ``states``."""
        missing = [s.label for s in states if s not in self.per_state]
        if missing:
            raise DimensionError(f"no covariance for state(s) {', '.join(missing)}")
        return np.stack([self.per_state[s] for s in states])

    def correlation(self, state) -> np.ndarray:
        mat = self.per_state[Regime.parse(state)]
        sd = np.sqrt(np.diag(mat))
        with np.errstate(invalid="ignore", divide="ignore"):
            return mat / np.outer(sd, sd)


@dataclass(frozen=True)
class ExpectedCovariance:
    """Discounted, time-averaged expected covariance, in points of 1e-6."""

    matrix: np.ndarray
    mode: ExpectationMode
    discount: float
    initial: np.ndarray
    maturity_days: int
    daily_rate: float

    @classmethod
    def from_matrix(cls, matrix, contract: SwapContract, mode=ExpectationMode.ONE_STEP, initial=None):
        """Wrap an externally supplied matrix (already in points of 1e-6)."""
        matrix = np.array(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionError(f"expected covariance must be square, got {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise DomainError("expected covariance has non-finite entries")
        if np.max(np.abs(matrix - matrix.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(matrix))):
            raise DomainError("expected covariance is not symmetric")
        matrix.setflags(write=False)
        init = np.asarray(initial, dtype=float) if initial is not None else np.array([])
        return cls(
            matrix,
            ExpectationMode.parse(mode),
            contract.discount_factor,
            init,
            contract.maturity_days,
            contract.daily_rate,
        )

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def estimate_regime_covariance(
    series: ReturnSeries, labeling: RegimeLabeling, center: str = "state"
) -> RegimeCovariance:
    """Sample covariance of the return rows carrying each combined label.

    ``center="state"`` demeans with the state-conditional mean; ``"grand"``
    uses the full-sample mean.  The divisor is ``count - 1`` either way.
    """
    returns = series.returns
    labels = np.asarray(labeling.combined_states)
    if labels.shape[0] != returns.shape[0]:
        raise DimensionError(f"{labels.shape[0]} labels for {returns.shape[0]} return rows")
    if center not in ("state", "grand"):
        raise DomainError(f"unknown centering {center!r}")
    out = {}
    for state in Regime:
        rows = returns[labels == state]
        if rows.shape[0] == 0:
            continue
        if rows.shape[0] < 2:
            raise EstimationError(f"state {state.label} has fewer than 2 observations")
        mu = rows.mean(axis=0) if center == "state" else series.means
        dev = rows - mu
        out[state] = dev.T @ dev / (rows.shape[0] - 1)
    return RegimeCovariance(out)


def assemble_expected_covariance(
    cov: RegimeCovariance,
    model: TransitionModel,
    gen: GeneratorModel | None,
    contract: SwapContract,
    mode: ExpectationMode | str = ExpectationMode.ONE_STEP,
    initial=None,
) -> ExpectedCovariance:
    mode = ExpectationMode.parse(mode)
    stacked = cov.stack(model.states)
    n = stacked.shape[1]
    iu = np.triu_indices(n)
    # one value per unordered pair, mirrored afterwards
    entries = stacked[:, iu[0], iu[1]]
    values = time_averaged_discounted_expectation(
        model, gen, entries, contract.maturity_days, contract.daily_rate, mode, initial
    )
    values = np.atleast_1d(values) * VARIANCE_SCALE
    matrix = np.zeros((n, n))
    matrix[iu] = values
    matrix[(iu[1], iu[0])] = values
    matrix.setflags(write=False)
    return ExpectedCovariance(
        matrix,
        mode,
        contract.discount_factor,
        resolve_initial(model, initial),
        contract.maturity_days,
        contract.daily_rate,
    )
