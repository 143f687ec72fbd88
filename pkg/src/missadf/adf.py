"""Dickey-Fuller regression, simulated null quantiles and p-values.

The statistic is the usual OLS t-ratio on the lagged level in

    dy_t = gamma * y_{t-1} [+ c] [+ b * t] [+ sum_j phi_j * dy_{t-j}] + e_t

with ``gamma = rho - 1``. Its null distribution has no closed form, so
p-values come from linear interpolation in a table of simulated quantiles.
"""

from __future__ import annotations

import functools
import json
import logging
import os
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from .core import (ARParams, DegenerateInputError, MissingSeries, TestResult)

logger = logging.getLogger(__name__)

DEFAULT_LEVELS: Tuple[float, ...] = (
    0.001, 0.005, 0.01, 0.025, 0.05, 0.075, 0.10, 0.125, 0.15, 0.20, 0.25,
    0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85,
    0.90, 0.95, 0.975, 0.99, 0.995, 0.999,
)
ALPHAS: Tuple[float, ...] = (0.01, 0.05, 0.10)
SHIPPED_SIZES: Tuple[int, ...] = (25, 50, 100, 250, 500, 1000)
TABLE_DIR_ENV = "UNITROOT_TABLE_DIR"
_CHUNK = 2000


@dataclass(frozen=True)
class RegressionSpec:
    include_constant: bool = False
    include_trend: bool = False
    augmentation_lags: int = 0

    def __post_init__(self):
        if self.include_trend and not self.include_constant:
            raise ValueError("a trend term requires a constant")
        if self.augmentation_lags < 0:
            raise ValueError("augmentation_lags must be >= 0")

    @property
    def deterministic(self) -> str:
        if self.include_trend:
            return "ct"
        return "c" if self.include_constant else "n"

    @property
    def label(self) -> str:
        return f"{self.deterministic}{self.augmentation_lags}"

    @classmethod
    def from_label(cls, det: str, lags: int = 0) -> "RegressionSpec":
        det = {"nc": "n"}.get(det, det)
        if det not in ("n", "c", "ct"):
            raise ValueError(f"unknown deterministic terms {det!r}")
        return cls(det in ("c", "ct"), det == "ct", int(lags))

    def to_dict(self) -> dict:
        return {"include_constant": self.include_constant,
                "include_trend": self.include_trend,
                "augmentation_lags": self.augmentation_lags}


# Constant + trend, no augmentation: the variant whose complete-data power
# (0.83 at rho=0.95, T=500) matches the reference simulations.
PAPER_SPEC = RegressionSpec(include_constant=True, include_trend=True, augmentation_lags=0)


@dataclass(frozen=True)
class DFQuantileTable:
    spec: RegressionSpec
    sample_size: int
    replications: int
    seed: int
    levels: Tuple[float, ...]
    quantiles: Tuple[float, ...]
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        q = np.asarray(self.quantiles, dtype=float)
        if lv.shape != q.shape or lv.size < 2:
            raise ValueError("levels and quantiles must be equal-length sequences")
        if np.any(np.diff(lv) <= 0) or np.any(np.diff(q) <= 0):
            raise ValueError("levels and quantiles must be strictly increasing")

    @property
    def low_precision(self) -> bool:
        return self.replications < 10_000

    def quantile(self, level: float) -> float:
        return float(np.interp(level, self.levels, self.quantiles))

    def critical_value(self, alpha: float) -> float:
        return self.quantile(alpha)

    def is_clamped(self, statistic: float) -> bool:
        return statistic < self.quantiles[0] or statistic > self.quantiles[-1]

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "sample_size": self.sample_size,
            "replications": self.replications,
            "seed": self.seed,
            "low_precision": self.low_precision,
            "quantiles": [[lv, q] for lv, q in zip(self.levels, self.quantiles)],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DFQuantileTable":
        pairs = d["quantiles"]
        if isinstance(pairs, dict):
            pairs = sorted((float(k), v) for k, v in pairs.items())
        return cls(
            spec=RegressionSpec(**d["spec"]),
            sample_size=int(d["sample_size"]),
            replications=int(d["replications"]),
            seed=int(d["seed"]),
            levels=tuple(float(p[0]) for p in pairs),
            quantiles=tuple(float(p[1]) for p in pairs),
            metadata=dict(d.get("metadata", {})),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "DFQuantileTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------- statistics

def _complete_values(series) -> np.ndarray:
    if isinstance(series, MissingSeries):
        if not series.is_complete:
            raise ValueError("this operation needs a complete series")
        return np.asarray(series.values)
    return np.asarray(series, dtype=float)


def fit_ar1_ols(series) -> Tuple[ARParams, float]:
    """No-intercept OLS fit of ``y_t = rho * y_{t-1} + e_t``.

    Returns the parameters (``sigma2`` is RSS / (T - 1), the complete-data
    likelihood maximiser) and the usual standard error of ``rho``, which uses
    the degrees-of-freedom corrected RSS / (T - 2).
    """
    y = _complete_values(series)
    if y.size < 3:
        raise ValueError("fit_ar1_ols needs T >= 3")
    x, z = y[:-1], y[1:]
    sxx = float(x @ x)
    if sxx == 0.0:
        raise DegenerateInputError("sum of squared lagged values is zero")
    rho = float(x @ z) / sxx
    resid = z - rho * x
    rss = float(resid @ resid)
    if rss <= 1e-24 * max(float(z @ z), 1.0):
        raise DegenerateInputError("residual variance is zero (deterministic series)")
    n = x.size
    return ARParams(rho, rss / n), float(np.sqrt(rss / (n - 1) / sxx))


def _deterministic_design(n_obs: int, start: int, spec: RegressionSpec) -> Optional[np.ndarray]:
    cols = []
    if spec.include_constant:
        cols.append(np.ones(n_obs))
    if spec.include_trend:
        cols.append(np.arange(start, start + n_obs, dtype=float))
    return np.column_stack(cols) if cols else None


def _batch_df_statistic(Y: np.ndarray, spec: RegressionSpec) -> np.ndarray:
    """DF t-ratios for each row of ``Y`` (shape R x T)."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    R, T = Y.shape
    k = spec.augmentation_lags
    dy = np.diff(Y, axis=1)
    n_obs = T - 1 - k
    D = _deterministic_design(n_obs, k + 1, spec)
    n_det = 0 if D is None else D.shape[1]
    if n_obs - 1 - n_det - k < 1:
        raise ValueError(f"series too short (T={T}) for regression {spec.label}")
    lhs = dy[:, k:]
    lev = Y[:, k:-1]
    if k == 0:
        if D is not None:
            P = np.linalg.pinv(D)
            lhs = lhs - (lhs @ P.T) @ D.T
            lev = lev - (lev @ P.T) @ D.T
        sxx = np.einsum("ij,ij->i", lev, lev)
        gamma = np.einsum("ij,ij->i", lev, lhs) / sxx
        resid = lhs - gamma[:, None] * lev
        rss = np.einsum("ij,ij->i", resid, resid)
        s2 = rss / (n_obs - 1 - n_det)
        return gamma / np.sqrt(s2 / sxx)
    cols = [lev] + [dy[:, k - j:T - 1 - j] for j in range(1, k + 1)]
    X = np.stack(cols, axis=2)
    if D is not None:
        X = np.concatenate([X, np.broadcast_to(D, (R,) + D.shape)], axis=2)
    XtX = np.einsum("rni,rnj->rij", X, X)
    Xty = np.einsum("rni,rn->ri", X, lhs)
    beta = np.linalg.solve(XtX, Xty[..., None])[..., 0]
    resid = lhs - np.einsum("rni,ri->rn", X, beta)
    s2 = np.einsum("rn,rn->r", resid, resid) / (n_obs - X.shape[2])
    inv00 = np.linalg.inv(XtX)[:, 0, 0]
    return beta[:, 0] / np.sqrt(s2 * inv00)


def df_statistic(series, spec: RegressionSpec = RegressionSpec()) -> float:
    """Dickey-Fuller t-ratio ``(rho_hat - 1) / SE(rho_hat)`` of a complete series."""
    y = _complete_values(series)
    if y.size < 3:
        raise ValueError("df_statistic needs T >= 3")
    if not np.any(y):
        raise DegenerateInputError("series is identically zero")
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = float(_batch_df_statistic(y[None, :], spec)[0])
    if not np.isfinite(stat):
        raise DegenerateInputError("zero residual variance in the DF regression")
    return stat


# ------------------------------------------------------------------- tables

def simulate_df_quantiles(spec: RegressionSpec = RegressionSpec(), sample_size: int = 500,
                          replications: int = 100_000, seed: int = 0,
                          levels: Sequence[float] = DEFAULT_LEVELS,
                          allow_small: bool = False) -> DFQuantileTable:
    """Tabulate the null distribution of ``df_statistic`` by simulation.

    Random walks start at zero and use standard normal innovations. Work is
    split in fixed chunks, each seeded from ``(seed, chunk_index)``, so the
    table depends only on the arguments.

    At least 1000 replications are required unless ``allow_small`` is set,
    which lowers the floor to 100 for quick, low-precision tables.
    """
    if sample_size < 25:
        raise ValueError("sample_size must be >= 25")
    floor = 100 if allow_small else 1000
    if replications < floor:
        raise ValueError(f"replications must be >= {floor}")
    stats = np.empty(replications)
    for c, start in enumerate(range(0, replications, _CHUNK)):
        size = min(_CHUNK, replications - start)
        rng = np.random.default_rng(np.random.SeedSequence([seed, c]))
        eps = rng.standard_normal((size, sample_size - 1))
        Y = np.zeros((size, sample_size))
        np.cumsum(eps, axis=1, out=Y[:, 1:])
        stats[start:start + size] = _batch_df_statistic(Y, spec)
    q = np.quantile(stats, levels)
    return DFQuantileTable(spec, sample_size, replications, seed,
                           tuple(float(v) for v in levels), tuple(float(v) for v in q))


def table_filename(spec: RegressionSpec, sample_size: int) -> str:
    return f"df_{spec.deterministic}_T{sample_size}.json"


def _table_dirs() -> list:
    dirs = []
    env = os.environ.get(TABLE_DIR_ENV)
    if env:
        dirs.append(Path(env))
    dirs.append(Path(str(resources.files("missadf") / "tables")))
    return dirs


@functools.lru_cache(maxsize=None)
def _load_anchor(det: str, sample_size: int, dirs: tuple) -> Optional[DFQuantileTable]:
    spec = RegressionSpec.from_label(det)
    for d in dirs:
        path = Path(d) / table_filename(spec, sample_size)
        if path.exists():
            return DFQuantileTable.load(path)
    return None


@functools.lru_cache(maxsize=256)
def _table_for(det: str, T: int, dirs: tuple) -> DFQuantileTable:
    anchors = [t for t in (_load_anchor(det, s, dirs) for s in SHIPPED_SIZES) if t is not None]
    if not anchors:
        raise FileNotFoundError(f"no quantile tables found for deterministic terms {det!r}")
    sizes = np.array([a.sample_size for a in anchors], dtype=float)
    if T <= sizes[0] or T >= sizes[-1] or len(anchors) == 1:
        a = anchors[0] if T <= sizes[0] else anchors[-1]
        return DFQuantileTable(a.spec, int(T), a.replications, a.seed, a.levels, a.quantiles,
                               {"source_sample_size": a.sample_size})
    hi = int(np.searchsorted(sizes, T))
    lo_t, hi_t = anchors[hi - 1], anchors[hi]
    if lo_t.sample_size == T:
        return lo_t
    # linear in 1/T, as the finite-sample corrections are O(1/T)
    w = (1 / lo_t.sample_size - 1 / T) / (1 / lo_t.sample_size - 1 / hi_t.sample_size)
    q = (1 - w) * np.asarray(lo_t.quantiles) + w * np.asarray(hi_t.quantiles)
    return DFQuantileTable(lo_t.spec, int(T), min(lo_t.replications, hi_t.replications),
                           lo_t.seed, lo_t.levels, tuple(float(v) for v in q),
                           {"interpolated_between": [lo_t.sample_size, hi_t.sample_size]})


def table_for(spec: RegressionSpec, T: int) -> DFQuantileTable:
    """Quantile table for ``spec`` at sample size ``T``, interpolated in 1/T.

    Tables are keyed by deterministic terms only; augmentation lags do not
    change the limiting distribution.
    """
    dirs = tuple(str(d) for d in _table_dirs())
    return _table_for(spec.deterministic, int(T), dirs)


def p_value(statistic: float, table: DFQuantileTable) -> float:
    """Left-tail p-value by linear interpolation of the tabulated CDF.

    Outside the tabulated range the value is clamped to the extreme levels;
    use ``table.is_clamped`` to detect this.
    """
    return float(np.interp(statistic, table.quantiles, table.levels))


def make_result(statistic: float, table: DFQuantileTable, *, rho_hat: float, sigma2_hat: float,
                method: str, n_observed: int, T: int, flags=None,
                alphas: Sequence[float] = ALPHAS) -> TestResult:
    flags = list(flags or [])
    if table.is_clamped(statistic):
        flags.append("p_value_clamped")
    if table.low_precision:
        flags.append("low_precision_table")
    return TestResult(
        statistic=float(statistic),
        p_value=p_value(statistic, table),
        reject_at={a: bool(statistic < table.critical_value(a)) for a in alphas},
        rho_hat=float(rho_hat), sigma2_hat=float(sigma2_hat), method=method,
        n_observed=int(n_observed), T=int(T), flags=flags,
    )


def adf_test(series, spec: RegressionSpec = PAPER_SPEC, table: Optional[DFQuantileTable] = None,
             method: str = "ADF", n_observed: Optional[int] = None,
             alphas: Sequence[float] = ALPHAS) -> TestResult:
    """Dickey-Fuller test of a complete series.

    ``rho_hat`` / ``sigma2_hat`` in the result are the no-intercept AR(1)
    estimates, whatever deterministic terms the test regression carries.
    """
    y = _complete_values(series)
    stat = df_statistic(y, spec)
    params, _ = fit_ar1_ols(y)
    flags = []
    if table is None:
        table = table_for(spec, y.size)
    else:
        if table.spec.deterministic != spec.deterministic:
            raise ValueError(f"table was built for {table.spec.label}, test uses {spec.label}")
        if abs(table.sample_size - y.size) > 0.2 * y.size:
            warnings.warn(f"table sample size {table.sample_size} is far from T={y.size}",
                          stacklevel=2)
            flags.append("table_size_mismatch")
    return make_result(stat, table, rho_hat=params.rho, sigma2_hat=params.sigma2,
                       method=method, n_observed=y.size if n_observed is None else n_observed,
                       T=y.size, flags=flags, alphas=alphas)
