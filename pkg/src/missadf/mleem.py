"""MLEEM: forward-recursive imputation with OLS refits, then a DF test.

Each iteration fills gaps chronologically with ``y_t = rho * y_{t-1}``
(plus an optional MNAR shift), refits (rho, sigma2) by no-intercept OLS on
the completed series, and repeats until the estimates settle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from .adf import PAPER_SPEC, DFQuantileTable, RegressionSpec, adf_test
from .core import (ARParams, DegenerateInputError, EstimationError, GapSpan, MissingSeries,
                   TestResult, gap_spans)
from .obslik import fallback_estimates, initial_estimates

DELTA_KINDS = ("none", "constant", "truncation")
DELTA_SHAPES = ("peak", "stagnant")


@dataclass(frozen=True)
class DeltaSpec:
    """Hypothesised MNAR shift added to imputations.

    ``constant`` adds +delta over the first half of each gap and -delta over
    the rest (``peak``) or +delta throughout (``stagnant``). ``truncation``
    derives the shift from the belief that missing values exceed ``lam``.
    """

    kind: str = "none"
    delta: float = 0.0
    lam: Optional[float] = None
    shape: str = "peak"

    def __post_init__(self):
        if self.kind not in DELTA_KINDS:
            raise ValueError(f"delta kind must be one of {DELTA_KINDS}")
        if self.shape not in DELTA_SHAPES:
            raise ValueError(f"delta shape must be one of {DELTA_SHAPES}")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.kind == "truncation" and self.lam is None:
            raise ValueError("truncation delta needs lam")

    @classmethod
    def none(cls) -> "DeltaSpec":
        return cls()

    @classmethod
    def constant(cls, delta: float, shape: str = "peak") -> "DeltaSpec":
        return cls("constant", float(delta), None, shape)

    @classmethod
    def truncation(cls, lam: float) -> "DeltaSpec":
        # the truncated-normal mean shift is one-sided, so no fall phase
        return cls("truncation", 0.0, float(lam), "stagnant")

    @property
    def active(self) -> bool:
        return self.kind == "truncation" or (self.kind == "constant" and self.delta > 0)

    @property
    def label(self) -> str:
        if self.kind == "none":
            return ""
        if self.kind == "constant":
            return f"delta={self.delta:g},{self.shape}"
        return f"lambda={self.lam:g}"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "delta": self.delta, "lambda": self.lam, "shape": self.shape}


NO_DELTA = DeltaSpec()


@dataclass
class EMResult:
    params: ARParams
    imputed: MissingSeries
    iterations: int
    converged: bool
    loglik_trace: list
    flags: list = field(default_factory=list)


def peak_signs(gap: GapSpan) -> np.ndarray:
    """+1 over ``u .. u + floor((v-u)/2)``, -1 for the remaining gap indices."""
    signs = -np.ones(len(gap))
    signs[:gap.half - gap.u + 1] = 1.0
    return signs


def truncation_delta(lam: float, rho: float, sigma: float, y_prev: float) -> float:
    """Mean excess ``sigma * phi(z) / (1 - Phi(z))`` with ``z = (lam - rho*y_prev)/sigma``.

    Evaluated in log space, so large z gives ``~ lam - rho*y_prev`` without
    cancellation.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    z = (lam - rho * y_prev) / sigma
    log_pdf = -0.5 * z * z - 0.5 * np.log(2 * np.pi)
    return float(sigma * np.exp(log_pdf - special.log_ndtr(-z)))


def _shift(delta: DeltaSpec, sign: float, rho: float, sigma: float, y_prev: float) -> float:
    if delta.kind == "constant":
        return sign * delta.delta
    if delta.kind == "truncation":
        return sign * truncation_delta(delta.lam, rho, sigma, y_prev)
    return 0.0


def em_impute_step(series: MissingSeries, rho: float, delta: DeltaSpec = NO_DELTA,
                   sigma: float = 1.0) -> MissingSeries:
    """Fill every gap chronologically with ``y_t = rho * y_{t-1} +/- delta_t``.

    A leading gap is filled backwards from the first observation with
    ``y_{t-1} = y_t / rho`` (or flat when |rho| <= 0.1).
    """
    y = np.array(series.values)
    obs = series.observed
    if not obs.any():
        raise EstimationError("no observed values to impute from")
    for gap in gap_spans(series):
        signs = peak_signs(gap) if delta.shape == "peak" else np.ones(len(gap))
        if gap.u == 0:
            first = gap.v + 1
            for i, t in enumerate(range(gap.v, -1, -1)):
                nxt = y[t + 1]
                base = nxt / rho if abs(rho) > 0.1 else y[first]
                y[t] = base + _shift(delta, signs[t - gap.u], rho, sigma, nxt)
            continue
        for t in range(gap.u, gap.v + 1):
            prev = y[t - 1]
            y[t] = rho * prev + _shift(delta, signs[t - gap.u], rho, sigma, prev)
    return MissingSeries(y, np.ones(series.T, dtype=bool))


def _ols(y: np.ndarray):
    x, z = y[:-1], y[1:]
    sxx = float(x @ x)
    if sxx == 0.0:
        raise DegenerateInputError("imputed series is identically zero")
    rho = float(x @ z) / sxx
    resid = z - rho * x
    s2 = float(resid @ resid) / x.size
    if s2 <= 0:
        raise DegenerateInputError("zero residual variance after imputation")
    ll = -0.5 * x.size * (np.log(2 * np.pi * s2) + 1.0)
    return ARParams(rho, s2), float(ll)


def em_fit(series: MissingSeries, delta: DeltaSpec = NO_DELTA, tol: float = 1e-6,
           max_iter: int = 500) -> EMResult:
    flags = []
    if series.is_complete:
        params, ll = _ols(np.asarray(series.values))
        return EMResult(params, series, 1, True, [ll], flags)
    try:
        params = initial_estimates(series)
    except EstimationError:
        params = fallback_estimates(series)
        flags.append("fallback_start")
    trace = []
    imputed = series
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        imputed = em_impute_step(series, params.rho, delta, params.sigma)
        new, ll = _ols(np.asarray(imputed.values))
        trace.append(ll)
        done = (abs(new.rho - params.rho) < tol
                and abs(new.sigma2 - params.sigma2) < tol * params.sigma2)
        params = new
        if done:
            converged = True
            break
    if not converged:
        flags.append("not_converged")
    return EMResult(params, imputed, it, converged, trace, flags)


def mleem_test(series: MissingSeries, delta: DeltaSpec = NO_DELTA,
               spec: RegressionSpec = PAPER_SPEC, table: Optional[DFQuantileTable] = None,
               tol: float = 1e-6, max_iter: int = 500) -> TestResult:
    fit = em_fit(series, delta, tol, max_iter)
    res = adf_test(fit.imputed, spec, table, n_observed=series.n_observed)
    res.method = "MLEEM" + (f"[{delta.label}]" if delta.active else "")
    res.rho_hat = fit.params.rho
    res.sigma2_hat = fit.params.sigma2
    res.flags = fit.flags + res.flags
    return res
