"""
Generator, transition semigroup and discounted time-averaged expectations.

Two expectation rules are offered.  ``ONE_STEP`` applies the one-period
transition matrix once and holds the result constant over the life of the
contract.  ``GENERATOR`` integrates ``exp(tQ) f`` over ``[0, T]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, DimensionError, DomainError, EstimationError
from .regime_inference import TransitionModel

__all__ = [
    "GeneratorSource",
    "GeneratorModel",
    "ExpectationMode",
    "derive_generator",
    "matrix_exponential",
    "propagate_expectation",
    "time_averaged_discounted_expectation",
    "resolve_initial",
    "adaptive_simpson",
]


class GeneratorSource(Enum):
    MATRIX_LOG = "matrix-log"
    LINEAR_APPROX = "linear-approx"
    USER_SUPPLIED = "user-supplied"


class ExpectationMode(Enum):
    ONE_STEP = "one-step"
    GENERATOR = "generator"

    @classmethod
    def parse(cls, value: "str | ExpectationMode") -> "ExpectationMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower().replace("_", "-"))
        except ValueError:
            raise ConfigurationError(f"unknown expectation mode {value!r}") from None


@dataclass(frozen=True)
class GeneratorModel:
    q: np.ndarray
    source: GeneratorSource = GeneratorSource.USER_SUPPLIED
    dt: float = 1.0

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise DimensionError(f"generator must be square, got {q.shape}")
        if not np.all(np.isfinite(q)):
            raise DomainError("generator has non-finite entries")
        off = ~np.eye(q.shape[0], dtype=bool)
        if np.any(q[off] < -1e-12):
            raise DomainError("generator has negative off-diagonal rates")
        q[off] = np.clip(q[off], 0.0, None)
        if np.max(np.abs(q.sum(axis=1)), initial=0.0) > 1e-10:
            raise DomainError("generator rows must sum to 0")
        if self.dt <= 0:
            raise DomainError("dt must be positive")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def n_states(self) -> int:
        return self.q.shape[0]


def _as_generator_rows(q: np.ndarray) -> np.ndarray:
    q = q.copy()
    off = ~np.eye(q.shape[0], dtype=bool)
    q[off] = np.clip(q[off], 0.0, None)
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q


def derive_generator(model: TransitionModel | np.ndarray, dt: float = 1.0) -> GeneratorModel:
    """Estimate ``Q`` with ``exp(Q dt) ~ Pi``.

    Uses the principal matrix logarithm when it is real with off-diagonals
    no more negative than -1e-8 (those are clamped); otherwise falls back to
    ``(Pi - I) / dt``.  The chosen route is recorded in ``source``.
    """
    pi = np.asarray(model.pi if isinstance(model, TransitionModel) else model, dtype=float)
    if dt <= 0:
        raise DomainError("dt must be positive")
    m = pi.shape[0]
    if abs(np.linalg.det(pi)) < 1e-14:
        raise EstimationError("transition matrix is singular; no generator exists")
    try:
        log_pi = scipy.linalg.logm(pi, disp=False)[0]
    except (ValueError, np.linalg.LinAlgError):
        log_pi = None
    if log_pi is not None and np.all(np.isfinite(log_pi)):
        log_pi = np.asarray(log_pi)
        imag_ok = np.max(np.abs(log_pi.imag), initial=0.0) <= 1e-10 if np.iscomplexobj(log_pi) else True
        q = np.real(log_pi) / dt
        off = ~np.eye(m, dtype=bool)
        if imag_ok and np.all(q[off] >= -1e-8):
            return GeneratorModel(_as_generator_rows(q), GeneratorSource.MATRIX_LOG, dt)
    q = (pi - np.eye(m)) / dt
    return GeneratorModel(_as_generator_rows(q), GeneratorSource.LINEAR_APPROX, dt)


def matrix_exponential(q, t: float = 1.0) -> np.ndarray:
    """``exp(t Q)`` by scaling and squaring around a truncated Taylor series.

    The argument is halved until its 1-norm is at most 1/2, the series is
    summed until terms fall below machine precision, then the result is
    squared back up.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise DimensionError(f"matrix must be square, got {q.shape}")
    if t < 0:
        raise DomainError("t must be nonnegative")
    if not np.all(np.isfinite(q)) or not math.isfinite(t):
        raise DomainError("matrix exponential of non-finite input")
    a = q * t
    norm = np.max(np.abs(a).sum(axis=0), initial=0.0)
    if norm == 0.0:
        return np.eye(q.shape[0])
    squarings = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    a = a / (2.0**squarings)
    result = np.eye(q.shape[0])
    term = np.eye(q.shape[0])
    for k in range(1, 40):
        term = term @ a / k
        result = result + term
        if np.max(np.abs(term)) <= 1e-18 * np.max(np.abs(result)):
            break
    for _ in range(squarings):
        result = result @ result
    return result


def propagate_expectation(gen: GeneratorModel, f, t: float) -> np.ndarray:
    """Vector whose entry ``i`` is ``E[f(x_t) | x_0 = i]``."""
    f = np.asarray(f, dtype=float)
    if f.shape[0] != gen.n_states:
        raise DimensionError(f"f has {f.shape[0]} entries for a {gen.n_states}-state generator")
    return matrix_exponential(gen.q, t) @ f


def resolve_initial(model: TransitionModel, initial) -> np.ndarray:
    """Turn ``None`` (stationary), a state name/index, or a vector into a distribution."""
    m = model.n_states
    if initial is None or (isinstance(initial, str) and initial.lower() == "stationary"):
        return np.asarray(model.stationary, dtype=float).copy()
    if isinstance(initial, str):
        name = initial.split(":", 1)[1] if initial.lower().startswith("state:") else initial
        vec = np.zeros(m)
        vec[model.index(name)] = 1.0
        return vec
    if np.ndim(initial) == 0:
        idx = int(initial)
        if not 0 <= idx < m:
            raise DomainError(f"initial state index {idx} out of range for {m} states")
        vec = np.zeros(m)
        vec[idx] = 1.0
        return vec
    vec = np.asarray(initial, dtype=float)
    if vec.shape != (m,):
        raise DimensionError(f"initial distribution has shape {vec.shape}, expected ({m},)")
    if np.any(vec < 0) or abs(vec.sum() - 1.0) > 1e-9:
        raise DomainError("initial distribution must be nonnegative and sum to 1")
    return vec


def adaptive_simpson(func, a: float, b: float, tol: float = 1e-12, max_depth: int = 40):
    """Adaptive Simpson quadrature of a scalar- or vector-valued function.

    Vector integrands are refined until every component meets ``tol``.
    """
    cache: dict[float, np.ndarray] = {}

    def f(x):
        if x not in cache:
            cache[x] = np.asarray(func(x), dtype=float)
        return cache[x]

    def simpson(lo, flo, hi, fhi):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        return mid, fmid, (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    fa, fb = f(a), f(b)
    m, fm, whole = simpson(a, fa, b, fb)
    total = np.zeros_like(whole)
    stack = [(a, fa, b, fb, m, fm, whole, tol, 0)]
    while stack:
        lo, flo, hi, fhi, mid, fmid, est, eps, depth = stack.pop()
        lm, flm, left = simpson(lo, flo, mid, fmid)
        rm, frm, right = simpson(mid, fmid, hi, fhi)
        delta = left + right - est
        if depth >= max_depth or np.max(np.abs(delta)) <= 15.0 * eps:
            total = total + left + right + delta / 15.0
        else:
            stack.append((mid, fmid, hi, fhi, rm, frm, right, eps / 2.0, depth + 1))
            stack.append((lo, flo, mid, fmid, lm, flm, left, eps / 2.0, depth + 1))
    return total


def _time_average(q: np.ndarray, weights: np.ndarray, f: np.ndarray, maturity: float) -> np.ndarray:
    # tolerance on the time average; relative floor keeps large-magnitude f out of round-off
    scale = float(np.max(np.abs(f), initial=0.0))
    tol = max(1e-12, 1e-13 * scale) * maturity
    integral = adaptive_simpson(lambda t: weights @ matrix_exponential(q, t) @ f, 0.0, float(maturity), tol)
    return integral / maturity


def time_averaged_discounted_expectation(
    model: TransitionModel,
    gen: GeneratorModel | None,
    f,
    maturity: float,
    rate: float,
    mode: ExpectationMode | str = ExpectationMode.ONE_STEP,
    initial=None,
):
    """Discounted expected average of a per-state quantity over ``[0, T]``.

    Parameters
    ----------
    model : TransitionModel
        Supplies the one-step matrix and the stationary distribution.
    gen : GeneratorModel or None
        Required for ``GENERATOR`` mode.
    f : array_like, shape (m,) or (m, k)
        Per-state values; a 2-D array is treated column by column.
    maturity : float
        Contract length ``T`` in trading days.
    rate : float
        Daily continuously-compounded rate ``r``.
    mode : ExpectationMode
    initial : None, state, index or distribution
        Initial-state law; ``None`` means the stationary distribution.

    Returns
    -------
    float or ndarray
        ``exp(-rT) * E[(1/T) int_0^T f(x_t) dt]`` under the selected rule.
    """
    mode = ExpectationMode.parse(mode)
    if maturity <= 0:
        raise DomainError("maturity must be positive")
    f = np.asarray(f, dtype=float)
    if f.shape[0] != model.n_states:
        raise DimensionError(f"f has {f.shape[0]} entries for a {model.n_states}-state model")
    weights = resolve_initial(model, initial)
    discount = math.exp(-rate * maturity)
    if mode is ExpectationMode.ONE_STEP:
        value = weights @ (model.pi @ f)
    else:
        if gen is None:
            raise ConfigurationError("generator mode requires a GeneratorModel")
        if gen.n_states != model.n_states:
            raise DimensionError("generator and transition model disagree on the state count")
        value = _time_average(gen.q, weights, f, maturity)
    value = discount * value
    return float(value) if np.ndim(value) == 0 else value
