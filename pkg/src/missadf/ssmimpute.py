"""SSMimpute: state-space multiple imputation followed by median-pooled DF tests.

1. Fit an AR(q) to the observed data and fill gaps with filtered means;
   the fills enter the lagged regressors only.
2. Regress the observed outcomes on the current lagged regressors (MLE).
3. Redraw the missing values from their posterior given the observed data
   and the new coefficients, and substitute them into the lags.
4. Repeat 2-3 until the log-likelihood and the coefficients settle.
5. Draw M coefficient sets from the final posterior and impute from each.
6. Run the DF test on every completed series and pool by the median.

Iterations reuse one set of standard normals for the step-3 draws, so the
update is a deterministic map and can converge to a fixed point; fresh
randomness is used only for the final M imputations.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import optimize, stats

from .adf import PAPER_SPEC, DFQuantileTable, RegressionSpec, adf_test, make_result, table_for
from .core import (ConvergenceError, EstimationError, GapSpan, MissingSeries, PooledTestResult,
                   gap_spans, median_statistic, require_observed)
from .mleem import DeltaSpec, NO_DELTA
from .obslik import mle_numeric
from .statespace import ConditionalPath, Prior, kalman_filter

logger = logging.getLogger(__name__)

DRAW_MODES = ("joint", "marginal", "predictive", "mean")


@dataclass(frozen=True)
class SSMConfig:
    q: int = 1
    M: int = 5
    tol: float = 1e-6
    coef_tol: float = 1e-4
    max_iter: int = 200
    delta: DeltaSpec = NO_DELTA
    seed: int = 0
    substitution: str = "draw"
    draw_mode: str = "joint"
    divergence_bound: float = 10.0

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("lag order q must be >= 1")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.substitution not in ("draw", "mean"):
            raise ValueError("substitution must be 'draw' or 'mean'")
        if self.draw_mode not in DRAW_MODES:
            raise ValueError(f"draw_mode must be one of {DRAW_MODES}")
        if self.delta.kind == "truncation":
            raise ValueError("SSMimpute supports constant (peak or stagnant) delta only")


@dataclass
class SSMPosterior:
    coef_mean: np.ndarray
    coef_cov: np.ndarray
    sigma2: float
    rss: float
    n_rows: int
    missing: np.ndarray
    smoothed_mean: np.ndarray
    smoothed_var: np.ndarray
    lagged: np.ndarray
    rows: np.ndarray
    iterations: int
    converged: bool
    loglik_trace: list
    coef_trace: list
    flags: list = field(default_factory=list)

    @property
    def q(self) -> int:
        return int(self.coef_mean.size)

    @property
    def persistence(self) -> float:
        """Sum of AR coefficients; equals rho for q = 1."""
        return float(self.coef_mean.sum())


def peak_multipliers(gap: GapSpan) -> np.ndarray:
    """Rise ``1, 2, ...`` over the first half of a gap, then fall back to 1 at ``v``."""
    t = np.arange(gap.u, gap.v + 1)
    return np.where(t <= gap.half, t - gap.u + 1, gap.v - t + 1).astype(int)


def _delta_offsets(series: MissingSeries, delta: DeltaSpec) -> np.ndarray:
    out = np.zeros(series.T)
    if not delta.active:
        return out
    for gap in gap_spans(series):
        m = peak_multipliers(gap) if delta.shape == "peak" else np.ones(len(gap))
        out[gap.u:gap.v + 1] = m * delta.delta
    return out


def _linear_fill(series: MissingSeries) -> np.ndarray:
    idx = np.flatnonzero(series.observed)
    return np.interp(np.arange(series.T), idx, series.values[idx])


def _fit_arq_observed(series: MissingSeries, q: int):
    """MLE of AR(q) coefficients on observed data via the exact Gaussian likelihood."""
    y = np.asarray(series.values)
    obs = series.observed
    filled = _linear_fill(series)
    X = np.column_stack([filled[q - j:series.T - j] for j in range(1, q + 1)])
    phi0 = np.linalg.lstsq(X, filled[q:], rcond=None)[0]
    s20 = max(float(np.var(filled[q:] - X @ phi0)), 1e-6)
    prior = Prior.weak(y, obs, s20)

    def negll(theta):
        phi, ls2 = theta[:q], theta[q]
        if abs(ls2) > 700 or np.any(np.abs(phi) > 20):
            return np.inf
        val = -ConditionalPath(y, obs, phi, np.exp(ls2), prior).observed_loglik()
        return val if np.isfinite(val) else np.inf

    res = optimize.minimize(negll, np.concatenate([phi0, [np.log(s20)]]), method="Nelder-Mead",
                            options={"fatol": 1e-8, "xatol": 1e-8, "maxiter": 2000 * q})
    if not res.success:
        raise ConvergenceError(str(res.message))
    return res.x[:q], float(np.exp(res.x[q])), prior


def kalman_initial_impute(series: MissingSeries, q: int = 1):
    """Initial fills for the lagged regressors from filtered (past-only) means.

    Returns ``(filled_values, flags)``. Falls back to linear interpolation if
    the AR(q) likelihood cannot be maximised.
    """
    require_observed(series, q + 2)
    y = np.asarray(series.values)
    obs = series.observed
    if series.is_complete:
        return y.copy(), []
    try:
        if q == 1:
            fit = mle_numeric(series)
            rho = fit.params.rho
            filled = y.copy()
            for gap in gap_spans(series):
                if gap.u == 0:
                    filled[:gap.v + 1] = y[gap.v + 1]
                    continue
                steps = np.arange(1, len(gap) + 1)
                filled[gap.u:gap.v + 1] = y[gap.u - 1] * rho ** steps
            return filled, []
        phi, s2, prior = _fit_arq_observed(series, q)
        means, _, _ = kalman_filter(y, obs, phi, s2, prior)
        filled = np.where(obs, y, means[:, 0])
        for j in range(q - 1):
            if not obs[j]:
                filled[j] = means[q - 1, q - 1 - j]
        return filled, []
    except (ConvergenceError, EstimationError, np.linalg.LinAlgError, ValueError) as exc:
        logger.info("initial MLE failed (%s); using linear interpolation", exc)
        return _linear_fill(series), ["init_linear_fallback"]


def lag_matrix(filled: np.ndarray, q: int) -> np.ndarray:
    """Rows t = q..T-1 with columns ``(y_{t-1}, ..., y_{t-q})``."""
    T = filled.size
    return np.column_stack([filled[q - j:T - j] for j in range(1, q + 1)])


def _regress(series: MissingSeries, filled: np.ndarray, q: int):
    y = np.asarray(series.values)
    rows = np.flatnonzero(series.observed[q:]) + q
    X = lag_matrix(filled, q)[rows - q]
    z = y[rows]
    XtX = X.T @ X
    beta = np.linalg.solve(XtX, X.T @ z)
    resid = z - X @ beta
    rss = float(resid @ resid)
    m = rows.size
    s2 = rss / m
    ll = -0.5 * m * (np.log(2 * np.pi * s2) + 1.0)
    return beta, s2, rss, XtX, rows, float(ll)


def ssm_iterate(series: MissingSeries, cfg: SSMConfig = SSMConfig()) -> SSMPosterior:
    q = cfg.q
    pts = require_observed(series, q + 2)
    filled, flags = kalman_initial_impute(series, q)
    y = np.asarray(series.values)
    obs = series.observed
    missing = np.flatnonzero(~obs)
    offsets = _delta_offsets(series, cfg.delta)[missing]
    crn = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1])).standard_normal(missing.size)
    ll_trace, coef_trace = [], []
    converged = False
    beta_prev, ll_prev = None, None
    it = 0
    for it in range(1, cfg.max_iter + 1):
        beta, s2, rss, XtX, rows, ll = _regress(series, filled, q)
        ll_trace.append(ll)
        coef_trace.append(beta.copy())
        if np.any(np.abs(beta) > cfg.divergence_bound):
            raise ConvergenceError(
                f"coefficients diverged at iteration {it}: {np.round(beta, 3).tolist()}",
                best={"coef": beta, "sigma2": s2, "loglik_trace": ll_trace})
        if missing.size == 0:
            converged = True
            break
        if beta_prev is not None and (abs(ll - ll_prev) < cfg.tol * abs(ll_prev)
                                      and np.max(np.abs(beta - beta_prev)) < cfg.coef_tol):
            converged = True
            break
        path = ConditionalPath(y, obs, beta, s2)
        filled = path.draw(crn) if cfg.substitution == "draw" else path.smoothed()
        filled[missing] += offsets
        beta_prev, ll_prev = beta, ll
    if not converged:
        flags.append("not_converged")
    if len(ll_trace) > 2:
        span = max(ll_trace) - min(ll_trace)
        drops = np.diff(ll_trace)
        if span > 0 and np.min(drops) < -0.01 * span:
            flags.append("loglik_decrease")
    if missing.size:
        final = ConditionalPath(y, obs, beta, s2)
        sm_mean, sm_var = final.mean.copy(), final.variances()
    else:
        sm_mean = sm_var = np.zeros(0)
    return SSMPosterior(
        coef_mean=beta, coef_cov=s2 * np.linalg.inv(XtX), sigma2=s2, rss=rss,
        n_rows=int(rows.size), missing=missing, smoothed_mean=sm_mean, smoothed_var=sm_var,
        lagged=filled, rows=rows, iterations=it, converged=converged,
        loglik_trace=ll_trace, coef_trace=coef_trace, flags=flags)


def _psd_factor(cov: np.ndarray, flags: list) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    if np.any(w < -1e-12 * max(1.0, float(np.abs(w).max()))):
        flags.append("posterior_cov_clipped")
    return V * np.sqrt(np.clip(w, 0.0, None))


def draw_imputations(posterior: SSMPosterior, series: MissingSeries, M: int, seed=0,
                     draw_mode: str = "joint", flags: Optional[list] = None) -> List[MissingSeries]:
    """M completed series, each from its own posterior coefficient draw.

    sigma2 is drawn from its scaled inverse-chi-square posterior, the
    coefficients from N(mean, sigma2 / sigma2_hat * cov). ``draw_mode``
    picks how the missing values are then generated:

    ``joint``
        one joint draw from their conditional distribution given all
        observed values (the default; a proper imputation).
    ``marginal``
        smoothed means plus independent noise with each index's marginal
        posterior variance, ignoring the correlation inside a gap.
    ``predictive``
        smoothed means plus independent N(0, sigma2) regression noise.
    ``mean``
        smoothed means only.

    The last three understate the persistence inside long gaps and are
    kept for comparison studies.
    """
    flags = flags if flags is not None else []
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    q = posterior.q
    y = np.asarray(series.values)
    obs = series.observed
    factor = _psd_factor(posterior.coef_cov, flags)
    degenerate = not np.any(posterior.coef_cov)
    dof = max(posterior.n_rows - q, 1)
    s2_hat = posterior.rss / dof
    out = []
    for _ in range(M):
        if degenerate:
            s2, beta = posterior.sigma2, posterior.coef_mean.copy()
        else:
            s2 = posterior.rss / rng.chisquare(dof)
            beta = posterior.coef_mean + np.sqrt(s2 / s2_hat) * (factor @ rng.standard_normal(q))
        if np.any(np.abs(beta) > 10):
            flags.append("extreme_coefficient_draw")
        path = ConditionalPath(y, obs, beta, s2)
        if draw_mode == "joint":
            values = path.draw(rng.standard_normal(path.missing.size))
        elif draw_mode == "marginal":
            values = path.smoothed()
            values[path.missing] += np.sqrt(path.variances()) * rng.standard_normal(path.missing.size)
        elif draw_mode == "predictive":
            values = path.smoothed()
            values[path.missing] += np.sqrt(s2) * rng.standard_normal(path.missing.size)
        else:
            values = path.smoothed()
        out.append(MissingSeries(values, np.ones(series.T, dtype=bool)))
    return out


def ssm_unit_root_test(series: MissingSeries, cfg: SSMConfig = SSMConfig(),
                       spec: RegressionSpec = PAPER_SPEC,
                       table: Optional[DFQuantileTable] = None) -> PooledTestResult:
    post = ssm_iterate(series, cfg)
    flags = list(post.flags)
    completed = draw_imputations(post, series, cfg.M, cfg.seed, cfg.draw_mode, flags)
    if table is None:
        table = table_for(spec, series.T)
    results = [adf_test(c, spec, table, method="SSM", n_observed=series.n_observed)
               for c in completed]
    pooled = median_statistic([r.statistic for r in results])
    label = "SSM" + (f"[{cfg.delta.label}]" if cfg.delta.active else "")
    base = make_result(pooled, table, rho_hat=post.persistence, sigma2_hat=post.sigma2,
                       method=label, n_observed=series.n_observed, T=series.T, flags=flags)
    return PooledTestResult(**vars(base), imputations=results)
