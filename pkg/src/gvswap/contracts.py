from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .errors import ConfigurationError, DomainError

__all__ = ["Measure", "SwapContract", "PricingResult", "VARIANCE_SCALE"]

#: Variances are quoted in points of 1e-6.
VARIANCE_SCALE = 1e6


class Measure(Enum):
    TRACE = "trace"
    MAX_EIGEN = "max-eigen"

    @classmethod
    def parse(cls, value: "str | Measure") -> "Measure":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"eigen": cls.MAX_EIGEN, "maxeigen": cls.MAX_EIGEN, "max-eigen": cls.MAX_EIGEN, "trace": cls.TRACE}
        if key not in aliases:
            raise ConfigurationError(f"unknown measure {value!r}")
        return aliases[key]


@dataclass(frozen=True)
class SwapContract:
    """Generalised-variance swap terms.

    ``strike`` is in variance points of 1e-6; ``daily_rate`` is the
    continuously-compounded rate per trading day.
    """

    maturity_days: int
    daily_rate: float
    strike: float
    measure: Measure = Measure.TRACE
    notional_units: float = VARIANCE_SCALE

    def __post_init__(self):
        object.__setattr__(self, "measure", Measure.parse(self.measure))
        if int(self.maturity_days) != self.maturity_days or self.maturity_days < 1:
            raise DomainError("maturity_days must be a positive integer")
        object.__setattr__(self, "maturity_days", int(self.maturity_days))
        if self.notional_units <= 0:
            raise DomainError("notional_units must be positive")
        if self.strike < 0:
            raise DomainError("strike must be nonnegative")
        if not math.isfinite(self.daily_rate):
            raise DomainError("daily_rate must be finite")

    @property
    def discount_factor(self) -> float:
        return math.exp(-self.daily_rate * self.maturity_days)

    @property
    def discounted_strike(self) -> float:
        return self.discount_factor * self.strike


@dataclass(frozen=True)
class PricingResult:
    price: float
    gross_leg: float
    discounted_strike: float
    diagnostics: dict = field(default_factory=dict)
