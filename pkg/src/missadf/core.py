"""Data model for partially observed univariate time series."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np


class MissadfError(Exception):
    """Base class for errors raised by this package."""


class EstimationError(MissadfError):
    """Raised when there is not enough observed data to estimate anything."""


class DegenerateInputError(MissadfError):
    """Raised for zero-variance or otherwise degenerate inputs."""


class CalibrationError(MissadfError):
    """Raised when a missingness mechanism cannot hit the requested rate."""


class ConvergenceError(MissadfError):
    """Raised when an iterative fit fails; ``best`` carries the best-so-far value."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MissingSeries:
    """Equally spaced series of length T with an explicit observation mask.

    ``observed[t]`` is the authority on whether index t carries a value.
    Entries of ``values`` at missing positions are NaN and never read.
    """

    values: np.ndarray
    observed: np.ndarray

    def __init__(self, values: Iterable, observed: Optional[Iterable] = None):
        vals = np.array(values, dtype=float, copy=True).ravel()
        if observed is None:
            mask = np.isfinite(vals)
        else:
            mask = np.array(observed, dtype=bool, copy=True).ravel()
            if mask.shape != vals.shape:
                raise ValueError("values and observed must have the same length")
            if not np.all(np.isfinite(vals[mask])):
                raise ValueError("observed positions must hold finite values")
        if vals.size < 2:
            raise ValueError("a series needs length T >= 2")
        vals[~mask] = np.nan
        object.__setattr__(self, "values", _readonly(vals))
        object.__setattr__(self, "observed", _readonly(mask))

    @classmethod
    def from_list(cls, items: Sequence[Optional[float]]) -> "MissingSeries":
        """Build from a list where ``None`` (or NaN) marks a missing value."""
        vals = [np.nan if v is None else float(v) for v in items]
        return cls(vals)

    @property
    def T(self) -> int:
        return int(self.values.size)

    @property
    def n_observed(self) -> int:
        return int(self.observed.sum())

    @property
    def missing_rate(self) -> float:
        return 1.0 - self.n_observed / self.T

    @property
    def is_complete(self) -> bool:
        return bool(self.observed.all())

    def to_list(self) -> list:
        return [float(v) if o else None for v, o in zip(self.values, self.observed)]

    def filled(self, fill: np.ndarray) -> "MissingSeries":
        """Complete series with ``fill`` at missing indices; observed values are kept."""
        fill = np.asarray(fill, dtype=float)
        out = np.where(self.observed, self.values, fill)
        return MissingSeries(out, np.ones(self.T, dtype=bool))

    def with_mask(self, observed: np.ndarray) -> "MissingSeries":
        """Same underlying values, new missing pattern (only hides, never reveals)."""
        observed = np.asarray(observed, dtype=bool)
        return MissingSeries(self.values, observed & self.observed)

    def __len__(self) -> int:
        return self.T

    def __eq__(self, other) -> bool:
        if not isinstance(other, MissingSeries):
            return NotImplemented
        return (np.array_equal(self.observed, other.observed)
                and np.array_equal(self.values[self.observed], other.values[other.observed]))

    def __repr__(self) -> str:
        return f"MissingSeries(T={self.T}, n_observed={self.n_observed})"


@dataclass(frozen=True, eq=False)
class ObservedPoints:
    index: np.ndarray
    value: np.ndarray
    T: int

    @property
    def n(self) -> int:
        return int(self.index.size)

    @property
    def gaps(self) -> np.ndarray:
        """Spacing ``t_k - t_{k-1}`` between consecutive observed points."""
        return np.diff(self.index)

    def as_pairs(self) -> list:
        return [(int(i), float(v)) for i, v in zip(self.index, self.value)]

    def to_series(self) -> MissingSeries:
        vals = np.full(self.T, np.nan)
        vals[self.index] = self.value
        return MissingSeries(vals)


@dataclass(frozen=True)
class GapSpan:
    """Maximal run of missing indices ``u..v`` (inclusive)."""

    u: int
    v: int

    def __len__(self) -> int:
        return self.v - self.u + 1

    @property
    def half(self) -> int:
        """Last index of the rising half, ``u + floor((v - u) / 2)``."""
        return self.u + (self.v - self.u) // 2


@dataclass(frozen=True)
class ARParams:
    rho: float
    sigma2: float

    def __post_init__(self):
        if not np.isfinite(self.rho):
            raise ValueError("rho must be finite")
        if not (self.sigma2 > 0 and np.isfinite(self.sigma2)):
            raise ValueError("sigma2 must be finite and strictly positive")

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.sigma2))


@dataclass
class TestResult:
    """Outcome of one unit-root test."""

    __test__ = False  # keep pytest from collecting this class

    statistic: float
    p_value: float
    reject_at: Mapping[float, bool]
    rho_hat: float
    sigma2_hat: float
    method: str
    n_observed: int
    T: int
    flags: list = field(default_factory=list)

    def rejects(self, alpha: float = 0.05) -> bool:
        return bool(self.reject_at[alpha])

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "statistic": float(self.statistic),
            "p_value": float(self.p_value),
            "reject_at": {str(k): bool(v) for k, v in self.reject_at.items()},
            "rho_hat": float(self.rho_hat),
            "sigma2_hat": float(self.sigma2_hat),
            "n_observed": int(self.n_observed),
            "T": int(self.T),
            "flags": list(self.flags),
        }


@dataclass
class PooledTestResult(TestResult):
    """Median-pooled result over several completed datasets."""

    imputations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["imputations"] = [r.to_dict() for r in self.imputations]
        return d


def observed_points(series: MissingSeries) -> ObservedPoints:
    idx = np.flatnonzero(series.observed)
    return ObservedPoints(_readonly(idx), _readonly(series.values[idx].copy()), series.T)


def require_observed(series: MissingSeries, minimum: int = 2) -> ObservedPoints:
    """``observed_points`` that raises when fewer than ``minimum`` points remain."""
    pts = observed_points(series)
    if pts.n < minimum:
        raise EstimationError(
            f"need at least {minimum} observed values, got {pts.n}")
    return pts


def gap_spans(series: MissingSeries) -> list:
    missing = ~series.observed
    if not missing.any():
        return []
    padded = np.concatenate([[False], missing, [False]]).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1) - 1
    return [GapSpan(int(u), int(v)) for u, v in zip(starts, stops)]


def median_statistic(stats: Sequence[float]) -> float:
    """Exact median; the lower of the two middle values for even counts."""
    s = np.sort(np.asarray(stats, dtype=float))
    if s.size == 0:
        raise ValueError("no statistics to pool")
    return float(s[(s.size - 1) // 2])
