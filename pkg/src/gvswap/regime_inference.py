"""
Price ingestion, regime labelling and Markov transition estimation.

Daily closes are turned into per-period returns; each asset is labelled Up
when its return is strictly above its own mean return and Down otherwise.
The combined regime is Up when every asset is Up, Down when every asset is
Down and Middle otherwise.  Transition probabilities are the row-normalised
tallies of consecutive combined labels.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionError,
    DomainError,
    EstimationError,
    ParseError,
    ReducibleChainError,
)

__all__ = [
    "Regime",
    "STATES",
    "IngestConfig",
    "PricePanel",
    "ReturnSeries",
    "RegimeLabeling",
    "TransitionModel",
    "load_price_csv",
    "compute_returns",
    "classify_states",
    "estimate_transition",
    "stationary_distribution",
]


class Regime(IntEnum):
    DOWN = 0
    MIDDLE = 1
    UP = 2

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, name: str | int | "Regime") -> "Regime":
        if isinstance(name, (int, np.integer)):
            return cls(int(name))
        try:
            return cls[str(name).strip().upper()]
        except KeyError:
            raise DomainError(f"unknown regime {name!r}; expected one of Down, Middle, Up") from None


#: Canonical state order used by every matrix in the package.
STATES: tuple[Regime, ...] = (Regime.DOWN, Regime.MIDDLE, Regime.UP)


@dataclass(frozen=True)
class IngestConfig:
    """Options for :func:`load_price_csv`.

    ``assets`` restricts (and orders) the asset columns; ``None`` keeps all.
    """

    date_column: str = "date"
    assets: tuple[str, ...] | None = None
    delimiter: str = ","


@dataclass(frozen=True)
class PricePanel:
    dates: tuple[dt.date, ...]
    prices: np.ndarray
    asset_names: tuple[str, ...]

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        if prices.ndim != 2 or prices.shape != (len(self.dates), len(self.asset_names)):
            raise DimensionError(
                f"prices shape {prices.shape} does not match "
                f"{len(self.dates)} dates x {len(self.asset_names)} assets"
            )
        if not np.all(np.isfinite(prices)):
            raise DomainError("prices contain missing or non-finite cells")
        if np.any(prices <= 0):
            row = int(np.argwhere(prices <= 0)[0, 0]) + 1
            raise DomainError(f"nonpositive price in data row {row}")
        for a, b in zip(self.dates, self.dates[1:]):
            if not a < b:
                raise DomainError(f"dates must be strictly increasing ({a} then {b})")
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)

    @property
    def n_assets(self) -> int:
        return len(self.asset_names)

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class ReturnSeries:
    returns: np.ndarray
    means: np.ndarray
    asset_names: tuple[str, ...] = ()
    kind: str = "simple"

    @classmethod
    def from_returns(cls, returns, asset_names: Sequence[str] = (), kind: str = "simple"):
        returns = np.atleast_2d(np.asarray(returns, dtype=float))
        if not asset_names:
            asset_names = tuple(f"asset{i + 1}" for i in range(returns.shape[1]))
        return cls(returns, returns.mean(axis=0), tuple(asset_names), kind)

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]


@dataclass(frozen=True)
class RegimeLabeling:
    """Per-asset and combined regime labels.

    ``per_asset_states`` holds :class:`Regime` codes (only DOWN or UP);
    ``combined_states`` holds codes in canonical order DOWN, MIDDLE, UP.
    """

    per_asset_states: np.ndarray
    combined_states: np.ndarray
    state_counts: dict[Regime, int] = field(default_factory=dict)

    @classmethod
    def from_sequence(cls, labels: Iterable[str | int | Regime]) -> "RegimeLabeling":
        codes = np.array([int(Regime.parse(x)) for x in labels], dtype=np.int64)
        return cls(np.empty((len(codes), 0), dtype=np.int64), codes, _occupancy(codes))

    def names(self) -> list[str]:
        return [Regime(c).label for c in self.combined_states]


@dataclass(frozen=True)
class TransitionModel:
    """Estimated finite-state Markov chain.

    ``states`` lists the regimes actually represented, in canonical order;
    every matrix is indexed in that order.
    """

    states: tuple[Regime, ...]
    counts: np.ndarray
    pi: np.ndarray
    std_err: np.ndarray
    stationary: np.ndarray

    @classmethod
    def from_counts(cls, counts, states: Sequence[Regime | str] | None = None) -> "TransitionModel":
        """Build a model from an m x m matrix of transition tallies."""
        counts = np.asarray(counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise DimensionError(f"counts must be square, got shape {counts.shape}")
        if np.any(counts < 0) or not np.allclose(counts, np.round(counts)):
            raise DomainError("transition counts must be nonnegative integers")
        counts = np.round(counts).astype(np.int64)
        m = counts.shape[0]
        if states is None:
            if m > len(STATES):
                raise DimensionError(f"{m} states given without labels")
            states = STATES if m == len(STATES) else STATES[:m]
        states = tuple(Regime.parse(s) for s in states)
        if len(states) != m:
            raise DimensionError(f"{len(states)} state labels for a {m}x{m} count matrix")
        outgoing = counts.sum(axis=1)
        for s, n_out in zip(states, outgoing):
            if n_out == 0:
                raise EstimationError(f"state {s.label} has no outgoing transitions")
        pi = counts / outgoing[:, None]
        std_err = np.sqrt(pi / outgoing[:, None])
        return cls(states, counts, pi, std_err, stationary_distribution(pi))

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def outgoing(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def index(self, state: Regime | str | int) -> int:
        s = Regime.parse(state)
        try:
            return self.states.index(s)
        except ValueError:
            raise DomainError(f"state {s.label} is not part of this model") from None


def _occupancy(codes: np.ndarray) -> dict[Regime, int]:
    return {s: int(np.sum(codes == s)) for s in STATES}


def load_price_csv(path: str | Path, config: IngestConfig | None = None) -> PricePanel:
    """Read a ``date,<asset1>,<asset2>,...`` CSV of daily closing prices.

    Rows are sorted by date after parsing.  Errors carry the offending file
    line (header is line 1) and data row (first data row is row 1).
    """
    config = config or IngestConfig()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=config.delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        if config.date_column not in header:
            raise ParseError(f"no {config.date_column!r} column in header", line=1)
        date_idx = header.index(config.date_column)
        available = [h for i, h in enumerate(header) if i != date_idx]
        assets = tuple(config.assets) if config.assets else tuple(available)
        missing = [a for a in assets if a not in available]
        if missing:
            raise ParseError(f"asset columns not found: {', '.join(missing)}", line=1)
        if len(assets) < 2:
            raise ParseError("need a date column plus at least 2 asset columns", line=1)
        cols = [header.index(a) for a in assets]

        dates: list[dt.date] = []
        rows: list[list[float]] = []
        for row_no, record in enumerate(reader, start=1):
            line = reader.line_num
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, found {len(record)} (data row {row_no})", line=line
                )
            try:
                day = dt.date.fromisoformat(record[date_idx].strip())
            except ValueError:
                raise ParseError(f"bad ISO date {record[date_idx]!r} (data row {row_no})", line=line) from None
            values = []
            for c in cols:
                cell = record[c].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"bad price {cell!r} (data row {row_no})", line=line) from None
                if not math.isfinite(v):
                    raise DomainError(f"non-finite price {cell!r} in data row {row_no} (line {line})")
                if v <= 0:
                    raise DomainError(f"nonpositive price {cell} in data row {row_no} (line {line})")
                values.append(v)
            dates.append(day)
            rows.append(values)

    if len(rows) < 3:
        raise ParseError(f"need at least 3 data rows, found {len(rows)}")
    order = sorted(range(len(dates)), key=dates.__getitem__)
    sorted_dates = [dates[i] for i in order]
    for a, b in zip(sorted_dates, sorted_dates[1:]):
        if a == b:
            raise DomainError(f"duplicate date {a.isoformat()}")
    prices = np.array([rows[i] for i in order], dtype=float)
    return PricePanel(tuple(sorted_dates), prices, assets)


def compute_returns(panel: PricePanel, kind: str = "simple") -> ReturnSeries:
    """Per-period returns, ``P[t+1]/P[t] - 1`` (or ``log(P[t+1]/P[t])`` for ``kind="log"``)."""
    prices = panel.prices
    if prices.shape[0] < 2:
        raise DimensionError("need at least two price rows")
    ratio = prices[1:] / prices[:-1]
    if kind == "simple":
        returns = ratio - 1.0
    elif kind == "log":
        returns = np.log(ratio)
    else:
        raise DomainError(f"unknown return kind {kind!r}")
    return ReturnSeries(returns, returns.mean(axis=0), panel.asset_names, kind)


def classify_states(series: ReturnSeries) -> RegimeLabeling:
    returns = series.returns
    up = returns > series.means[None, :]
    per_asset = np.where(up, int(Regime.UP), int(Regime.DOWN)).astype(np.int64)
    combined = np.full(returns.shape[0], int(Regime.MIDDLE), dtype=np.int64)
    combined[up.all(axis=1)] = int(Regime.UP)
    combined[(~up).all(axis=1)] = int(Regime.DOWN)
    return RegimeLabeling(per_asset, combined, _occupancy(combined))


def estimate_transition(labeling: RegimeLabeling | Sequence[str | int | Regime]) -> TransitionModel:
    """Tally consecutive label pairs and normalise each row.

    The state space is restricted to regimes that occur in the sequence.
    A regime that only appears as the final label has no outgoing
    transitions and is rejected.
    """
    if not isinstance(labeling, RegimeLabeling):
        labeling = RegimeLabeling.from_sequence(labeling)
    codes = np.asarray(labeling.combined_states, dtype=np.int64)
    if codes.size < 2:
        raise EstimationError("need at least two labels to estimate transitions")
    present = tuple(s for s in STATES if np.any(codes == s))
    pos = {s: i for i, s in enumerate(present)}
    idx = np.array([pos[Regime(c)] for c in codes])
    m = len(present)
    counts = np.zeros((m, m), dtype=np.int64)
    np.add.at(counts, (idx[:-1], idx[1:]), 1)
    return TransitionModel.from_counts(counts, present)


def stationary_distribution(pi) -> np.ndarray:
    """Solve ``p Pi = p`` with ``sum(p) = 1`` as an augmented linear system."""
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 2 or pi.shape[0] != pi.shape[1]:
        raise DimensionError(f"transition matrix must be square, got {pi.shape}")
    if not np.all(np.isfinite(pi)) or np.any(pi < -1e-12):
        raise DomainError("transition matrix has negative or non-finite entries")
    if np.max(np.abs(pi.sum(axis=1) - 1.0)) > 1e-9:
        raise DomainError("transition matrix rows must sum to 1")
    m = pi.shape[0]
    if m == 1:
        return np.ones(1)
    lhs = pi.T - np.eye(m)
    sv = np.linalg.svd(lhs, compute_uv=False)
    if sv[-2] <= 1e-12 * max(1.0, sv[0]):
        raise ReducibleChainError("reducible chain: stationary distribution is not unique")
    system = np.vstack([lhs, np.ones((1, m))])
    rhs = np.zeros(m + 1)
    rhs[-1] = 1.0
    p, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    if np.any(p < -1e-10):
        raise ReducibleChainError("reducible chain: stationary solve produced negative mass")
    p = np.clip(p, 0.0, None)
    return p / p.sum()
