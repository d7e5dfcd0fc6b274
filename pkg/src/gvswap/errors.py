"""Exception hierarchy shared by every pricing-engine module."""

from __future__ import annotations


class GVSwapError(Exception):
    """Base class for all errors raised by :mod:`gvswap`."""


class ParseError(GVSwapError):
    """Malformed input file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainError(GVSwapError, ValueError):
    """A value lies outside the admissible domain (nonpositive price, NaN, non-PSD matrix)."""


class DimensionError(GVSwapError, ValueError):
    pass


class EstimationError(GVSwapError):
    """The data cannot support the requested estimate."""


class ReducibleChainError(EstimationError):
    pass


class ConfigurationError(GVSwapError):
    pass


class ConsistencyError(GVSwapError):
    """Two inputs that must agree (e.g. contract and expected covariance) do not."""


class RankError(GVSwapError):
    pass


class InfeasibleTargetError(GVSwapError):
    pass


class ConditioningError(GVSwapError):
    pass


class SolverError(GVSwapError):
    pass
