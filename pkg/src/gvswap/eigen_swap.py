"""
Constrained maximum-variance ("largest eigenvalue") swap.

The portfolio problem is::

    maximise  w' W w   subject to  w'w = 1,  1'w = 1,  mu'w = k

With ``A = [mu, 1]`` and a full QR factorisation ``A = P [R; 0]`` the
linear constraints fix the first two rotated coordinates ``q`` through
``R' q = b``.  The remaining coordinates ``r`` live on a sphere of radius
``s = sqrt(1 - q'q)`` and the problem becomes a quadratic over that sphere,
solved through the eigendecomposition of the trailing block of ``P' W P``
and a scalar secular equation for the Lagrange multiplier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .contracts import VARIANCE_SCALE, Measure, PricingResult, SwapContract
from .errors import (
    ConditioningError,
    ConsistencyError,
    DimensionError,
    DomainError,
    InfeasibleTargetError,
    RankError,
    SolverError,
)
from .regime_covariance import ExpectedCovariance
from .trace_swap import check_consistency

__all__ = [
    "Sense",
    "ConstraintSystem",
    "QRReduction",
    "ReducedProblem",
    "SecularSolution",
    "EfficientWeights",
    "build_constraints",
    "qr_reduce",
    "reduce_problem",
    "solve_secular",
    "recover_weights",
    "constrained_max_variance",
    "price_eigen",
]


class Sense(Enum):
    MAXIMIZE = "max"
    MINIMIZE = "min"

    @classmethod
    def parse(cls, value: "str | Sense") -> "Sense":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()[:3]
        if key not in ("max", "min"):
            raise DomainError(f"unknown optimisation sense {value!r}")
        return cls(key)


@dataclass(frozen=True)
class ConstraintSystem:
    a: np.ndarray
    b: np.ndarray
    k: float

    @property
    def n(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True)
class QRReduction:
    p: np.ndarray
    r_mat: np.ndarray

    @property
    def p1(self) -> np.ndarray:
        return self.p[:, :2]

    @property
    def p2(self) -> np.ndarray:
        return self.p[:, 2:]


@dataclass(frozen=True)
class ReducedProblem:
    b_mat: np.ndarray
    gamma: np.ndarray
    c: np.ndarray
    q: np.ndarray
    s2: float
    g: np.ndarray
    eigvecs: np.ndarray
    eigvals: np.ndarray
    d: np.ndarray


@dataclass(frozen=True)
class SecularSolution:
    u: np.ndarray
    r_vec: np.ndarray
    lambda_multiplier: float | None
    branch: str


@dataclass(frozen=True)
class EfficientWeights:
    w: np.ndarray
    q: np.ndarray
    r_vec: np.ndarray
    u: np.ndarray
    lambda_multiplier: float | None
    objective: float
    branch: str
    qr: QRReduction = field(repr=False, default=None)
    reduced: ReducedProblem = field(repr=False, default=None)


def build_constraints(means, k: float) -> ConstraintSystem:
    means = np.asarray(means, dtype=float).ravel()
    if means.size < 3:
        raise DimensionError(f"need at least 3 assets, got {means.size}")
    if not np.all(np.isfinite(means)) or not math.isfinite(k):
        raise DomainError("means and target return must be finite")
    a = np.column_stack([means, np.ones_like(means)])
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise RankError("target-return constraint degenerate: all mean returns are equal")
    return ConstraintSystem(a, np.array([k, 1.0]), float(k))


def qr_reduce(system: ConstraintSystem) -> QRReduction:
    """Full Householder QR of ``A`` with ``R`` normalised to a positive diagonal.

    The sign of the last column of ``P`` is fixed so that ``det(P) = +1``;
    for three assets this makes the null-space column the normalised cross
    product of the two constraint columns.
    """
    a = system.a
    p, r = np.linalg.qr(a, mode="complete")
    r2 = r[:2, :].copy()
    diag = np.diag(r2)
    if np.min(np.abs(diag)) <= 1e-12 * np.max(np.abs(a)):
        raise RankError("constraint matrix is rank deficient")
    signs = np.sign(diag)
    p[:, :2] *= signs
    r2 *= signs[:, None]
    if np.linalg.det(p) < 0:
        p[:, -1] *= -1.0
    return QRReduction(p, r2)


def reduce_problem(qr: QRReduction, omega, system: ConstraintSystem) -> ReducedProblem:
    omega = np.asarray(omega, dtype=float)
    n = system.n
    if omega.shape != (n, n):
        raise DimensionError(f"covariance shape {omega.shape} does not match {n} assets")
    if np.max(np.abs(omega - omega.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(omega))):
        raise DomainError("covariance matrix must be symmetric")
    r_mat = qr.r_mat
    if abs(r_mat[0, 0] * r_mat[1, 1]) < 1e-14:
        raise ConditioningError(f"|det R| = {abs(r_mat[0, 0] * r_mat[1, 1]):.3e} is too small")
    # R' q = b, forward substitution on the lower-triangular R'
    b = system.b
    q0 = b[0] / r_mat[0, 0]
    q1 = (b[1] - r_mat[0, 1] * q0) / r_mat[1, 1]
    q = np.array([q0, q1])
    s2 = 1.0 - float(q @ q)
    if s2 < -1e-12:
        raise InfeasibleTargetError(
            f"target return unreachable on the unit sphere (1 - q'q = {s2:.3e})"
        )
    s2 = max(s2, 0.0)
    rotated = qr.p.T @ omega @ qr.p
    rotated = 0.5 * (rotated + rotated.T)
    b_mat = rotated[:2, :2]
    gamma = rotated[2:, :2]
    c = rotated[2:, 2:]
    g = -gamma @ q
    eigvals, eigvecs = np.linalg.eigh(c)
    d = eigvecs.T @ g
    return ReducedProblem(b_mat, gamma, c, q, s2, g, eigvecs, eigvals, d)


def _bisect(func, lo: float, hi: float, positive_at_lo: bool, iters: int = 200) -> float:
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        val = func(mid)
        if val == 0.0:
            return mid
        if (val > 0) == positive_at_lo:
            lo = mid
        else:
            hi = mid
    flo, fhi = abs(func(lo)), abs(func(hi))
    return lo if flo < fhi else hi


def _secular_candidates(delta: np.ndarray, d: np.ndarray, s2: float, zero_tol: float):
    """All stationary points ``(lambda, u, branch)`` of the sphere problem."""
    s = math.sqrt(s2)
    active = np.abs(d) > zero_tol
    candidates = []

    def phi(lam):
        with np.errstate(divide="ignore", invalid="ignore"):
            return float(np.sum(d[active] ** 2 / (delta[active] - lam) ** 2) - s2)

    def dphi(lam):
        with np.errstate(divide="ignore", invalid="ignore"):
            return float(np.sum(d[active] ** 2 / (delta[active] - lam) ** 3))

    def u_at(lam):
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(active, d / (delta - lam), 0.0)
        norm = np.linalg.norm(u)
        return u * (s / norm) if norm > 0 else u

    if np.any(active):
        poles = np.unique(delta[active])
        radius = np.linalg.norm(d[active]) / s
        hi = poles[-1] + radius * (1 + 1e-12)
        lam = _bisect(phi, poles[-1], hi, positive_at_lo=True)
        candidates.append((lam, u_at(lam), "outer-upper"))
        lo = poles[0] - radius * (1 + 1e-12)
        lam = _bisect(phi, lo, poles[0], positive_at_lo=False)
        candidates.append((lam, u_at(lam), "outer-lower"))
        for j, (a, b) in enumerate(zip(poles[:-1], poles[1:])):
            turn = _bisect(dphi, a, b, positive_at_lo=False)
            if phi(turn) > 0:
                continue
            for side, (x, y, pos) in enumerate(((a, turn, True), (turn, b, False))):
                lam = _bisect(phi, x, y, positive_at_lo=pos)
                candidates.append((lam, u_at(lam), f"interior-{j}-{side}"))

    # hard case: multiplier equal to an eigenvalue whose eigenspace is orthogonal to d
    for value in np.unique(delta):
        group = np.abs(delta - value) <= 1e-12 * max(1.0, abs(value))
        if np.any(active & group):
            continue
        u = np.zeros_like(d)
        others = active & ~group
        u[others] = d[others] / (delta[others] - value)
        rem = s2 - float(u @ u)
        if rem < -1e-12 * max(1.0, s2):
            continue
        lead = int(np.flatnonzero(group)[0])
        for sign, tag in ((1.0, "+"), (-1.0, "-")):
            v = u.copy()
            v[lead] = sign * math.sqrt(max(rem, 0.0))
            candidates.append((float(value), v, f"eigen{tag}"))
    return candidates


def solve_secular(reduced: ReducedProblem, sense: Sense | str = Sense.MAXIMIZE) -> SecularSolution:
    """Pick the extremal solution of ``(D - lambda I) u = d``, ``|u|^2 = s^2``.

    The reduced objective is ``u'Du - 2 d'u`` (equivalently
    ``-2 g'r + r'Cr``).  Every real stationary point is enumerated: the two
    outer secular roots, roots inside each interval between poles, and the
    eigenvector solutions when ``d`` has no weight on an eigenspace.  Exact
    ties keep the earliest candidate, so a symmetric pair resolves to the
    positive direction.
    """
    sense = Sense.parse(sense)
    delta, d, s2 = reduced.eigvals, reduced.d, reduced.s2
    if delta.size == 0 or s2 == 0.0:
        u = np.zeros_like(d)
        return SecularSolution(u, reduced.eigvecs @ u, None, "boundary")
    s = math.sqrt(s2)
    scale = float(np.max(np.abs(delta), initial=0.0) * s + np.linalg.norm(d))
    zero_tol = 1e-13 * max(scale, 1e-300)
    candidates = _secular_candidates(delta, d, s2, zero_tol)
    if not candidates:
        raise SolverError("no real solution of the secular equation found")
    sign = 1.0 if sense is Sense.MAXIMIZE else -1.0
    tie = 1e-14 * max(scale * s, 1e-300)
    best = None
    for lam, u, branch in candidates:
        val = sign * float(u @ (delta * u) - 2.0 * d @ u)
        if best is None or val > best[0] + tie:
            best = (val, lam, u, branch)
    _, lam, u, branch = best
    return SecularSolution(u, reduced.eigvecs @ u, float(lam), branch)


def recover_weights(qr: QRReduction, reduced: ReducedProblem, solution: SecularSolution, omega) -> EfficientWeights:
    w = qr.p @ np.concatenate([reduced.q, solution.r_vec])
    objective = float(w @ np.asarray(omega, dtype=float) @ w)
    return EfficientWeights(
        w,
        reduced.q,
        solution.r_vec,
        solution.u,
        solution.lambda_multiplier,
        objective,
        solution.branch,
        qr,
        reduced,
    )


def constrained_max_variance(omega, means, k: float, sense: Sense | str = Sense.MAXIMIZE) -> EfficientWeights:
    """Extremal portfolio variance on the unit sphere at a target mean return."""
    system = build_constraints(means, k)
    qr = qr_reduce(system)
    reduced = reduce_problem(qr, omega, system)
    solution = solve_secular(reduced, sense)
    return recover_weights(qr, reduced, solution, omega)


def price_eigen(
    expected: ExpectedCovariance,
    means,
    k: float,
    contract: SwapContract,
    sense: Sense | str = Sense.MAXIMIZE,
) -> PricingResult:
    if contract.measure is not Measure.MAX_EIGEN:
        raise ConsistencyError(f"contract measure is {contract.measure.value}, not max-eigen")
    check_consistency(expected, contract)
    weights = constrained_max_variance(expected.matrix, means, k, sense)
    omega_w = expected.matrix @ weights.w
    gross = float(weights.w @ omega_w)
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
            "weights": weights.w.tolist(),
            "omega_w": omega_w.tolist(),
            "q": weights.q.tolist(),
            "r": weights.r_vec.tolist(),
            "lambda_multiplier": weights.lambda_multiplier,
            "branch": weights.branch,
            "sense": Sense.parse(sense).value,
            "efficient_weights": weights,
        },
    )
