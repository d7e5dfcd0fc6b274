"""
Monte Carlo simulation of the regime-switching market.

Every path draws from its own random stream, keyed by ``(base_seed, path,
stream)`` through :class:`numpy.random.SeedSequence`.  Day ``t`` of a path
always consumes the same positions of that stream, so results do not depend
on chunking or on the number of worker threads.

Regime paths hold ``T + 1`` states: ``s_0`` is the initial draw and the
return of trading day ``t`` (``1 <= t <= T``) is generated under ``s_t``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .contracts import VARIANCE_SCALE, Measure, SwapContract
from .eigen_swap import Sense, constrained_max_variance
from .errors import DimensionError, DomainError
from .markov_engine import GeneratorModel, resolve_initial
from .regime_covariance import RegimeCovariance
from .regime_inference import Regime, TransitionModel

__all__ = [
    "SimulationMode",
    "SimulationConfig",
    "RegimePaths",
    "MCCovarianceEstimate",
    "MCPriceEstimate",
    "path_rng",
    "simulate_regime_paths",
    "simulate_return_paths",
    "simulate_ctmc",
    "mc_expected_covariance",
    "mc_swap_price",
]

_CHAIN_STREAM = 0
_NOISE_STREAM = 1
_CTMC_STREAM = 2


class SimulationMode(Enum):
    CHAIN_ONLY = "chain-only"
    FULL_RETURNS = "full-returns"


@dataclass(frozen=True)
class SimulationConfig:
    n_paths: int
    horizon_days: int
    base_seed: int = 0
    mode: SimulationMode = SimulationMode.CHAIN_ONLY
    initial: object = None
    n_workers: int = 1
    chunk_size: int = 4096

    def __post_init__(self):
        if self.n_paths < 1:
            raise DomainError("n_paths must be at least 1")
        if self.horizon_days < 1:
            raise DomainError("horizon_days must be at least 1")
        if self.n_workers < 1 or self.chunk_size < 1:
            raise DomainError("n_workers and chunk_size must be positive")


@dataclass(frozen=True)
class RegimePaths:
    states: tuple[Regime, ...]
    indices: np.ndarray  # (n_paths, T + 1) positions in ``states``

    @property
    def n_paths(self) -> int:
        return self.indices.shape[0]

    @property
    def horizon(self) -> int:
        return self.indices.shape[1] - 1


@dataclass(frozen=True)
class MCCovarianceEstimate:
    mean: np.ndarray
    std_err: np.ndarray
    n_paths: int
    per_path: np.ndarray  # (n_paths, n, n), discounted and scaled
    fractions: np.ndarray  # (n_paths, m) share of the horizon spent in each state


@dataclass(frozen=True)
class MCPriceEstimate:
    price: float
    std_err: float
    gross_leg: float
    discounted_strike: float
    expected: MCCovarianceEstimate
    weights: np.ndarray | None = None
    jensen_gap: float | None = None
    jensen_gap_std_err: float | None = None


def path_rng(base_seed: int, path: int, stream: int = _CHAIN_STREAM) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(base_seed), spawn_key=(int(path), int(stream))))


def _chunks(n_paths: int, size: int):
    return [(lo, min(lo + size, n_paths)) for lo in range(0, n_paths, size)]


def _run_chunks(func, config: SimulationConfig, n_paths: int | None = None):
    chunks = _chunks(config.n_paths if n_paths is None else n_paths, config.chunk_size)
    if config.n_workers == 1 or len(chunks) == 1:
        return [func(lo, hi) for lo, hi in chunks]
    with ThreadPoolExecutor(max_workers=config.n_workers) as pool:
        return list(pool.map(lambda c: func(*c), chunks))


def _inverse_cdf(cum_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    # smallest j with u < cum[j]
    idx = (cum_rows <= u[:, None]).sum(axis=1)
    return np.minimum(idx, cum_rows.shape[1] - 1)


def _cumulative(probs: np.ndarray) -> np.ndarray:
    cum = np.cumsum(probs, axis=-1)
    cum[..., -1] = 1.0
    return cum


def simulate_regime_paths(model: TransitionModel, config: SimulationConfig) -> RegimePaths:
    """Discrete daily chain driven by the one-step transition matrix."""
    T = config.horizon_days
    cum_init = _cumulative(resolve_initial(model, config.initial))
    cum_pi = _cumulative(np.asarray(model.pi, dtype=float))

    def chunk(lo, hi):
        u = np.stack([path_rng(config.base_seed, p, _CHAIN_STREAM).random(T + 1) for p in range(lo, hi)])
        out = np.empty((hi - lo, T + 1), dtype=np.int64)
        out[:, 0] = _inverse_cdf(np.broadcast_to(cum_init, (hi - lo, cum_init.size)), u[:, 0])
        for t in range(1, T + 1):
            out[:, t] = _inverse_cdf(cum_pi[out[:, t - 1]], u[:, t])
        return out

    return RegimePaths(model.states, np.concatenate(_run_chunks(chunk, config)))


def _sqrt_factor(mat: np.ndarray, label: str) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    if vals[0] < -1e-10 * max(1e-300, abs(vals[-1])):
        raise DomainError(f"{label}: covariance is not positive semidefinite (min eigenvalue {vals[0]:.3e})")
    # eigenvalues at rounding level are zero; their square roots would inject spurious noise
    floor = mat.shape[0] * np.finfo(float).eps * max(abs(vals[-1]), 0.0)
    return (vecs * np.sqrt(np.where(vals > floor, vals, 0.0))) @ vecs.T


def simulate_return_paths(cov: RegimeCovariance, means, paths: RegimePaths, config: SimulationConfig) -> np.ndarray:
    """Daily arithmetic returns ``mu + S(s_t) z_t``, shape ``(n_paths, T, n)``.

    ``S(s)`` is the symmetric square root of the regime covariance.
    """
    means = np.asarray(means, dtype=float)
    if means.shape != (cov.n,):
        raise DimensionError(f"means has shape {means.shape}, expected ({cov.n},)")
    factors = np.stack([_sqrt_factor(cov.per_state[s], s.label) for s in paths.states])
    T, n = paths.horizon, cov.n

    def chunk(lo, hi):
        z = np.stack([path_rng(config.base_seed, p, _NOISE_STREAM).standard_normal((T, n)) for p in range(lo, hi)])
        f = factors[paths.indices[lo:hi, 1:]]  # (paths, T, n, n)
        return means + np.einsum("ptij,ptj->pti", f, z)

    return np.concatenate(_run_chunks(chunk, config, paths.n_paths))


def simulate_ctmc(gen: GeneratorModel, initial, horizon: float, config: SimulationConfig, model: TransitionModel | None = None):
    """Exact continuous-time chain on ``[0, horizon]``.

    Returns ``(occupation, final)``: time spent in each state per path and
    the state at ``horizon``.  ``initial`` is resolved against ``model`` when
    given, otherwise it must be an index or a distribution.
    """
    q = np.asarray(gen.q, dtype=float)
    m = q.shape[0]
    if model is not None:
        init = resolve_initial(model, initial)
    elif np.ndim(initial) == 0:
        init = np.zeros(m)
        init[int(initial)] = 1.0
    else:
        init = np.asarray(initial, dtype=float)
    cum_init = _cumulative(init)
    rates = -np.diag(q)
    with np.errstate(divide="ignore", invalid="ignore"):
        jump = np.where(rates[:, None] > 0, q / rates[:, None], 0.0)
    np.fill_diagonal(jump, 0.0)
    cum_jump = _cumulative(jump)
    budget = int(np.max(rates, initial=0.0) * horizon + 6 * math.sqrt(np.max(rates, initial=0.0) * horizon) + 16)

    def chunk(lo, hi):
        rngs = [path_rng(config.base_seed, p, _CTMC_STREAM) for p in range(lo, hi)]
        first = np.array([g.random() for g in rngs])

        def draw():
            return (
                np.stack([g.standard_exponential(budget) for g in rngs]),
                np.stack([g.random(budget) for g in rngs]),
            )

        expo, unif = draw()
        size = hi - lo
        state = _inverse_cdf(np.broadcast_to(cum_init, (size, m)), first)
        clock = np.zeros(size)
        occupation = np.zeros((size, m))
        active = np.ones(size, dtype=bool)
        k = 0
        rows = np.arange(size)
        while np.any(active):
            if k == expo.shape[1]:
                more_e, more_u = draw()
                expo = np.hstack([expo, more_e])
                unif = np.hstack([unif, more_u])
            with np.errstate(divide="ignore"):
                hold = np.where(rates[state] > 0, expo[:, k] / rates[state], np.inf)
            stop = np.minimum(clock + hold, horizon)
            spent = np.where(active, stop - clock, 0.0)
            np.add.at(occupation, (rows, state), spent)
            jumps = active & (clock + hold < horizon)
            nxt = _inverse_cdf(cum_jump[state], unif[:, k])
            state = np.where(jumps, nxt, state)
            clock = np.where(active, stop, clock)
            active = jumps
            k += 1
        return occupation, state

    parts = _run_chunks(chunk, config)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _occupation_fractions(model: TransitionModel, contract: SwapContract, config: SimulationConfig, gen):
    T = contract.maturity_days
    if gen is None:
        paths = simulate_regime_paths(model, replace(config, horizon_days=T))
        m = model.n_states
        days = paths.indices[:, 1:]
        return np.stack([(days == j).sum(axis=1) for j in range(m)], axis=1) / T
    occupation, _ = simulate_ctmc(gen, config.initial, float(T), config, model)
    return occupation / T


def mc_expected_covariance(
    cov: RegimeCovariance,
    model: TransitionModel,
    contract: SwapContract,
    config: SimulationConfig,
    gen: GeneratorModel | None = None,
) -> MCCovarianceEstimate:
    """Path average of ``exp(-rT) (1/T) sum_t Omega(s_t)``, in points of 1e-6.

    Without ``gen`` the daily chain is used and the average runs over
    trading days ``1..T``.  With ``gen`` the chain is simulated in
    continuous time and the average is the exact time integral.  The
    contract maturity overrides ``config.horizon_days``.
    """
    stacked = cov.stack(model.states)
    fractions = _occupation_fractions(model, contract, config, gen)
    scale = contract.discount_factor * VARIANCE_SCALE
    per_path = np.einsum("ps,sij->pij", fractions, stacked) * scale
    n = per_path.shape[0]
    mean = per_path.mean(axis=0)
    std_err = per_path.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return MCCovarianceEstimate(mean, std_err, n, per_path, fractions)


def mc_swap_price(
    measure: Measure | str,
    cov: RegimeCovariance,
    model: TransitionModel,
    contract: SwapContract,
    config: SimulationConfig,
    means=None,
    k: float | None = None,
    gen: GeneratorModel | None = None,
    sense: Sense | str = Sense.MAXIMIZE,
) -> MCPriceEstimate:
    """Swap price with the expected covariance replaced by its MC estimate.

    For the trace swap the standard error is exact (the leg is linear in
    the covariance).  For the max-eigen swap it is the delta-method error
    of ``w' Omega w`` at the optimal ``w``; ``jensen_gap`` is the path
    average of the per-regime optimal variance minus the leg computed from
    the averaged matrix.
    """
    measure = Measure.parse(measure)
    est = mc_expected_covariance(cov, model, contract, config, gen)
    n = est.n_paths
    notional = contract.notional_units / VARIANCE_SCALE
    strike = contract.discounted_strike

    def _se(samples):
        return float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    if measure is Measure.TRACE:
        samples = np.trace(est.per_path, axis1=1, axis2=2)
        gross = float(samples.mean())
        return MCPriceEstimate((gross - strike) * notional, _se(samples) * notional, gross, strike, est)

    if means is None or k is None:
        raise DomainError("max-eigen pricing needs mean returns and a target return")
    weights = constrained_max_variance(est.mean, means, k, sense)
    w = weights.w
    samples = np.einsum("i,pij,j->p", w, est.per_path, w)
    gross = float(w @ est.mean @ w)
    scale = contract.discount_factor * VARIANCE_SCALE
    per_state = np.array(
        [constrained_max_variance(cov.per_state[s] * scale, means, k, sense).objective for s in model.states]
    )
    state_optimum = est.fractions @ per_state
    return MCPriceEstimate(
        (gross - strike) * notional,
        _se(samples) * notional,
        gross,
        strike,
        est,
        w,
        float(state_optimum.mean() - gross),
        _se(state_optimum),
    )
