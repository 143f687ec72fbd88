"""Observed-data AR(1) likelihood, numeric MLE, and the MLEN / MLENS tests.

Under MCAR or MAR the missingness terms of the likelihood do not involve
(rho, sigma2) and are dropped. Each observed point is conditioned on its
observed predecessor ``gap`` steps back::

    y_{t_k} | y_{t_{k-1}} ~ N(rho**gap * y_{t_{k-1}}, sigma2 * V(rho, gap))
    V(rho, gap) = sum_{j=1..gap} rho**(2(j-1))
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .adf import PAPER_SPEC, DFQuantileTable, RegressionSpec, make_result, table_for
from .core import (ARParams, ConvergenceError, DegenerateInputError, EstimationError,
                   MissingSeries, ObservedPoints, TestResult, require_observed)

logger = logging.getLogger(__name__)

_LOG2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class LikelihoodContext:
    points: ObservedPoints

    def __post_init__(self):
        if self.points.n < 2:
            raise EstimationError("the observed-data likelihood needs n >= 2")

    @classmethod
    def from_series(cls, series: MissingSeries) -> "LikelihoodContext":
        return cls(require_observed(series, 2))

    @property
    def T(self) -> int:
        return self.points.T

    @property
    def n(self) -> int:
        return self.points.n


@dataclass
class OptimizerSettings:
    initial_step: float = 0.1
    fatol: float = 1e-8
    xatol: float = 1e-8
    max_iter: int = 2000


@dataclass
class MLEFit:
    params: ARParams
    loglik: float
    converged: bool
    iterations: int
    start: ARParams
    flags: list = field(default_factory=list)


def v_k(rho, gap):
    """Variance multiplier ``sum_{j=1..gap} rho**(2(j-1))``; exact ``gap`` when rho = +-1."""
    rho = np.asarray(rho, dtype=float)
    gap = np.asarray(gap)
    if np.any(gap < 1):
        raise ValueError("gap must be >= 1")
    r2 = rho * rho
    with np.errstate(divide="ignore", invalid="ignore"):
        # expm1 ratio keeps full precision as rho**2 -> 1
        lg = np.log(r2)
        out = np.expm1(gap * lg) / np.expm1(lg)
    out = np.where(r2 == 1.0, gap, out)
    out = np.where(r2 == 0.0, 1.0, out)
    return out if out.ndim else float(out)


def _pair_arrays(ctx: LikelihoodContext):
    pts = ctx.points
    return pts.gaps, pts.value[:-1], pts.value[1:]


def obs_loglik(params: ARParams, ctx: LikelihoodContext) -> float:
    """Gaussian log-likelihood of consecutive observed pairs.

    The normalising term counts the n - 1 conditional densities, so on a
    fully observed series this is exactly the complete-data log-likelihood.
    """
    if params.sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    return _loglik(params.rho, params.sigma2, *_pair_arrays(ctx))


def _loglik(rho, sigma2, gaps, prev, curr) -> float:
    V = v_k(rho, gaps)
    mean = np.power(rho, gaps) * prev
    resid = curr - mean
    m = gaps.size
    return float(-0.5 * m * (_LOG2PI + np.log(sigma2))
                 - np.sum(0.5 * np.log(V) + resid * resid / (2.0 * sigma2 * V)))


def initial_estimates(series: MissingSeries) -> ARParams:
    """Moment estimates from adjacent observed pairs only.

    ``sigma2`` is the mean squared first difference over those pairs,
    which is consistent under the unit-root null.
    """
    r = series.observed
    both = r[1:] & r[:-1]
    if not both.any():
        raise EstimationError("no adjacent observed pairs for the initial estimates")
    y = np.where(r, series.values, 0.0)
    prev, curr = y[:-1][both], y[1:][both]
    denom = float(prev @ prev)
    if denom == 0.0:
        raise DegenerateInputError("adjacent observed lagged values are all zero")
    rho0 = float(prev @ curr) / denom
    s2 = float(np.mean((curr - prev) ** 2))
    if s2 <= 0:
        raise DegenerateInputError("adjacent observed values never change")
    return ARParams(rho0, s2)


def fallback_estimates(series: MissingSeries) -> ARParams:
    """Start values when no adjacent pairs exist: rho = 1 and gap-scaled increments."""
    pts = require_observed(series, 2)
    d = np.diff(pts.value)
    s2 = float(np.mean(d * d / pts.gaps))
    if s2 <= 0:
        raise DegenerateInputError("observed values never change")
    return ARParams(1.0, s2)


def mle_numeric(series: MissingSeries, settings: Optional[OptimizerSettings] = None) -> MLEFit:
    """Maximise the observed-data likelihood with Nelder-Mead.

    Optimises over (rho, log sigma2) starting from ``initial_estimates``.
    rho is unconstrained so that rho = 1 stays interior.
    """
    settings = settings or OptimizerSettings()
    ctx = LikelihoodContext.from_series(series)
    flags = []
    if ctx.n < 3:
        flags.append("unreliable_two_points")
    try:
        start = initial_estimates(series)
    except EstimationError:
        start = fallback_estimates(series)
        flags.append("fallback_start")
    gaps, prev, curr = _pair_arrays(ctx)

    def negll(theta):
        rho, ls2 = theta
        if not (np.isfinite(rho) and abs(rho) < 50 and abs(ls2) < 700):
            return np.inf
        val = -_loglik(rho, np.exp(ls2), gaps, prev, curr)
        return val if np.isfinite(val) else np.inf

    x0 = np.array([start.rho, np.log(start.sigma2)])
    step = settings.initial_step
    simplex = np.array([x0, x0 + [step, 0.0], x0 + [0.0, step]])
    res = optimize.minimize(
        negll, x0, method="Nelder-Mead",
        options={"initial_simplex": simplex, "fatol": settings.fatol,
                 "xatol": settings.xatol, "maxiter": settings.max_iter,
                 "maxfev": 4 * settings.max_iter})
    rho, ls2 = (float(v) for v in res.x)
    params = ARParams(rho, float(np.exp(ls2)))
    fit = MLEFit(params, -float(res.fun), bool(res.success), int(res.nit), start, flags)
    if not res.success:
        raise ConvergenceError(f"Nelder-Mead did not converge: {res.message}", best=fit)
    if abs(rho) > 1.5:
        warnings.warn(f"MLE rho={rho:.3f} is far outside [-1.5, 1.5]", stacklevel=2)
        fit.flags.append("rho_out_of_range")
    return fit


def mlen_statistic(params: ARParams, ctx: LikelihoodContext) -> float:
    """Conservative statistic ``(rho - 1) / SE`` using only the n observed points.

    SE = sqrt(n * sigma2 / (n * sum y_k**2 - (sum y_k)**2)), sums over the
    first n - 1 observed values (those that act as predecessors).
    """
    y = ctx.points.value[:-1]
    n = ctx.n
    denom = n * float(y @ y) - float(y.sum()) ** 2
    if denom <= 0:
        raise DegenerateInputError("observed values have no spread for the MLEN standard error")
    se = np.sqrt(n * params.sigma2 / denom)
    return float((params.rho - 1.0) / se)


def mlens_statistic(mlen_stat: float, T: int, n: int) -> float:
    """MLEN statistic rescaled by ``T / n`` to credit the unobserved span."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return float(mlen_stat) * T / n


def _mle_test(series, spec, table, scaled: bool, settings) -> TestResult:
    fit = mle_numeric(series, settings)
    ctx = LikelihoodContext.from_series(series)
    stat = mlen_statistic(fit.params, ctx)
    if scaled:
        stat = mlens_statistic(stat, series.T, ctx.n)
    if table is None:
        table = table_for(spec, series.T)
    return make_result(stat, table, rho_hat=fit.params.rho, sigma2_hat=fit.params.sigma2,
                       method="MLENS" if scaled else "MLEN", n_observed=ctx.n,
                       T=series.T, flags=fit.flags)


def mlen_test(series: MissingSeries, spec: RegressionSpec = PAPER_SPEC,
              table: Optional[DFQuantileTable] = None,
              settings: Optional[OptimizerSettings] = None) -> TestResult:
    return _mle_test(series, spec, table, False, settings)


def mlens_test(series: MissingSeries, spec: RegressionSpec = PAPER_SPEC,
               table: Optional[DFQuantileTable] = None,
               settings: Optional[OptimizerSettings] = None) -> TestResult:
    return _mle_test(series, spec, table, True, settings)
