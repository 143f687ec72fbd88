"""Comparator methods: single imputations, complete cases and chained equations.

Every single imputation keeps the observed values and is followed by one
DF test. Complete-case analysis drops the gaps and tests the shortened
series; the chained-equations method produces ``m`` completed series whose
DF statistics are pooled by their median.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np
from scipy import interpolate, optimize

from .adf import PAPER_SPEC, DFQuantileTable, RegressionSpec, adf_test, make_result, table_for
from .core import (ConvergenceError, DegenerateInputError, EstimationError, MissingSeries,
                   PooledTestResult, TestResult, median_statistic, require_observed)
from .obslik import initial_estimates, fallback_estimates
from .statespace import Prior, noisy_ar1_posterior

logger = logging.getLogger(__name__)

BASELINE_LABELS = ("M", "LOCF", "IntL", "IntS", "K", "CC", "MICE")


@dataclass(frozen=True)
class BaselineMethod:
    """A comparator by its short label; ``m`` and ``cycles`` apply to MICE only."""

    label: str
    m: int = 5
    cycles: int = 10

    def __post_init__(self):
        if self.label not in BASELINE_LABELS:
            raise ValueError(f"unknown baseline {self.label!r}; expected one of {BASELINE_LABELS}")
        if self.m < 1 or self.cycles < 1:
            raise ValueError("m and cycles must be >= 1")


def _complete(values: np.ndarray) -> MissingSeries:
    return MissingSeries(values, np.ones(values.size, dtype=bool))


def impute_mean(series: MissingSeries) -> MissingSeries:
    require_observed(series, 2)
    y = np.asarray(series.values)
    return _complete(np.where(series.observed, y, y[series.observed].mean()))


def impute_locf(series: MissingSeries) -> MissingSeries:
    """Carry the last observation forward; a leading gap takes the first observation."""
    require_observed(series, 2)
    obs = series.observed
    idx = np.where(obs, np.arange(series.T), -1)
    np.maximum.accumulate(idx, out=idx)
    first = int(np.argmax(obs))
    idx[idx < 0] = first
    return _complete(np.asarray(series.values)[idx])


def impute_linear(series: MissingSeries) -> MissingSeries:
    """Straight lines between observations, flat beyond the first and last."""
    require_observed(series, 2)
    idx = np.flatnonzero(series.observed)
    return _complete(np.interp(np.arange(series.T), idx, np.asarray(series.values)[idx]))


def impute_spline(series: MissingSeries, flags: Optional[list] = None) -> MissingSeries:
    """Natural cubic spline through the observations, flat beyond the ends.

    With fewer than four observations this falls back to linear
    interpolation and appends ``spline_linear_fallback`` to ``flags``.
    """
    pts = require_observed(series, 2)
    if pts.n < 4:
        if flags is not None:
            flags.append("spline_linear_fallback")
        return impute_linear(series)
    t = np.arange(series.T)
    inner = np.clip(t, pts.index[0], pts.index[-1])
    cs = interpolate.CubicSpline(pts.index, pts.value, bc_type="natural")
    out = np.where(series.observed, series.values, cs(inner))
    return _complete(out)


@dataclass
class NoisyAR1Fit:
    rho: float
    sigma2: float
    obs_var: float
    loglik: float


def fit_noisy_ar1(series: MissingSeries) -> NoisyAR1Fit:
    """MLE of an AR(1) latent path observed with N(0, r) noise.

    Optimises (rho, log sigma2, log r) with Nelder-Mead on the exact
    Gaussian likelihood of the observed values.
    """
    require_observed(series, 3)
    y = np.asarray(series.values)
    obs = series.observed
    try:
        start = initial_estimates(series)
    except EstimationError:
        start = fallback_estimates(series)
    prior = Prior.weak(y, obs, start.sigma2)

    def negll(theta):
        rho, ls2, lr = theta
        if abs(rho) > 5 or abs(ls2) > 50 or not -20 < lr - ls2 < 20:
            return np.inf
        try:
            _, ll = noisy_ar1_posterior(y, obs, rho, np.exp(ls2), np.exp(lr), prior)
        except np.linalg.LinAlgError:
            return np.inf
        return -ll if np.isfinite(ll) else np.inf

    x0 = np.array([start.rho, np.log(0.9 * start.sigma2), np.log(0.1 * start.sigma2)])
    res = optimize.minimize(negll, x0, method="Nelder-Mead",
                            options={"xatol": 1e-6, "fatol": 1e-8, "maxiter": 3000})
    if not np.isfinite(res.fun):
        raise ConvergenceError("noisy AR(1) likelihood could not be evaluated")
    rho, ls2, lr = res.x
    return NoisyAR1Fit(float(rho), float(np.exp(ls2)), float(np.exp(lr)), -float(res.fun))


def impute_kalman(series: MissingSeries) -> MissingSeries:
    """Smoothed latent means of a fitted AR(1)-plus-noise model at the missing indices."""
    if series.is_complete:
        return series
    fit = fit_noisy_ar1(series)
    y = np.asarray(series.values)
    x, _ = noisy_ar1_posterior(y, series.observed, fit.rho, fit.sigma2, fit.obs_var)
    return _complete(np.where(series.observed, y, x))


def complete_case_series(series: MissingSeries) -> MissingSeries:
    """Observed values in time order with the gaps collapsed."""
    pts = require_observed(series, 3)
    return _complete(pts.value.copy())


# ------------------------------------------------------------------ MICE

def _norm_draw(X: np.ndarray, z: np.ndarray, target: np.ndarray, rng) -> np.ndarray:
    """Bayesian linear-regression draws for ``target`` rows of ``z`` regressed on X."""
    fit_rows = ~target
    Xo, zo = X[fit_rows], z[fit_rows]
    n, p = Xo.shape
    if n <= p:
        raise EstimationError("too few complete rows for the imputation model")
    XtX = Xo.T @ Xo
    try:
        chol = np.linalg.cholesky(XtX)
    except np.linalg.LinAlgError as exc:
        raise DegenerateInputError("singular design in the imputation model") from exc
    beta = np.linalg.solve(XtX, Xo.T @ zo)
    resid = zo - Xo @ beta
    sigma = np.sqrt(float(resid @ resid) / rng.chisquare(n - p))
    # beta* ~ N(beta, sigma^2 (X'X)^-1) via the Cholesky factor of X'X
    beta_star = beta + sigma * np.linalg.solve(chol.T, rng.standard_normal(p))
    Xm = X[target]
    return Xm @ beta_star + sigma * rng.standard_normal(Xm.shape[0])


def mice_impute(series: MissingSeries, m: int = 5, seed=0, cycles: int = 10) -> List[MissingSeries]:
    """Chained-equations imputation with columns (y, y_lag, t).

    ``y_lag`` is carried as its own incomplete column, as a generic MI
    package would see it. Both columns start from linear interpolation and
    are redrawn ``cycles`` times per dataset, each from a Bayesian linear
    regression on the other two columns.
    """
    pts = require_observed(series, 10)
    if series.is_complete:
        return [series for _ in range(m)]
    y = np.asarray(series.values)
    T = series.T
    t = np.arange(T, dtype=float)
    miss_y = ~series.observed
    lag = np.concatenate([[np.nan], y[:-1]])
    miss_lag = np.isnan(lag)
    start = impute_linear(series).values
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 3]))
    out = []
    for _ in range(m):
        cy = np.array(start)
        cl = np.concatenate([[start[0]], start[:-1]])
        for _ in range(cycles):
            X = np.column_stack([np.ones(T), cl, t])
            cy[miss_y] = _norm_draw(X, cy, miss_y, rng)
            X = np.column_stack([np.ones(T), cy, t])
            cl[miss_lag] = _norm_draw(X, cl, miss_lag, rng)
        out.append(_complete(cy))
    logger.debug("MICE produced %d datasets from %d observed points", m, pts.n)
    return out


# ------------------------------------------------------------------ tests

def impute_single(series: MissingSeries, label: str, flags: Optional[list] = None) -> MissingSeries:
    if label == "M":
        return impute_mean(series)
    if label == "LOCF":
        return impute_locf(series)
    if label == "IntL":
        return impute_linear(series)
    if label == "IntS":
        return impute_spline(series, flags)
    if label == "K":
        return impute_kalman(series)
    raise ValueError(f"{label} is not a single-imputation method")


def baseline_test(series: MissingSeries, method: Union[BaselineMethod, str],
                  spec: RegressionSpec = PAPER_SPEC, table: Optional[DFQuantileTable] = None,
                  seed=0) -> TestResult:
    """DF test after a comparator method.

    CC is referred to the table for the collapsed length; MICE returns a
    :class:`PooledTestResult` with the median statistic.
    """
    if isinstance(method, str):
        method = BaselineMethod(method)
    label = method.label
    flags: list = []
    n_obs = series.n_observed
    if label == "CC":
        cc = complete_case_series(series)
        res = adf_test(cc, spec, table or table_for(spec, cc.T), method="CC", n_observed=n_obs)
        res.T = series.T
        return res
    if table is None:
        table = table_for(spec, series.T)
    if label == "MICE":
        sets = mice_impute(series, method.m, seed, method.cycles)
        results = [adf_test(s, spec, table, method="MICE", n_observed=n_obs) for s in sets]
        pooled = median_statistic([r.statistic for r in results])
        base = make_result(pooled, table, rho_hat=float(np.mean([r.rho_hat for r in results])),
                           sigma2_hat=float(np.median([r.sigma2_hat for r in results])),
                           method="MICE", n_observed=n_obs, T=series.T, flags=flags)
        return PooledTestResult(**vars(base), imputations=results)
    filled = impute_single(series, label, flags)
    res = adf_test(filled, spec, table, method=label, n_observed=n_obs)
    res.flags = flags + res.flags
    return res
