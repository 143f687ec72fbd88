"""Missingness mechanisms used in the simulation study.

All generators return the same values with a new observation mask; ``p``
is always the probability that an index goes missing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, special

from .core import CalibrationError, DegenerateInputError, MissingSeries

MECHANISMS = ("MCAR", "MAR", "MNAR-D", "MNAR-T", "MNAR-P", "MNAR-H")
MNAR_MECHANISMS = ("MNAR-D", "MNAR-T", "MNAR-P", "MNAR-H")
P_RATES = (0.4, 0.1, 0.0)
_MNAR_T_CMAX = 1e4
MNAR_T_FALLBACK_STRENGTH = 1.0


@dataclass
class MissingnessConfig:
    mechanism: str
    target_rate: float
    seed: int = 0
    c: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.mechanism = normalize_mechanism(self.mechanism)
        _check_rate(self.target_rate)


def normalize_mechanism(name: str) -> str:
    key = name.strip().upper().replace("_", "-")
    if key not in MECHANISMS:
        raise ValueError(f"unknown mechanism {name!r}; expected one of "
                         f"{', '.join(m.lower() for m in MECHANISMS)}")
    return key


def _check_rate(rate: float) -> None:
    if not 0.0 < rate < 1.0:
        raise ValueError("missing rate must lie in (0, 1)")


def _mask_from_probs(series: MissingSeries, p: np.ndarray, seed) -> MissingSeries:
    rng = np.random.default_rng(seed)
    missing = rng.random(series.T) < p
    return series.with_mask(~missing)


def apply_mcar(series: MissingSeries, rate: float, seed=None) -> MissingSeries:
    _check_rate(rate)
    return _mask_from_probs(series, np.full(series.T, rate), seed)


def mar_probabilities(T: int, rate: float) -> np.ndarray:
    """Linear-in-time missing probabilities ``c * (t + 1)`` averaging to ``rate``."""
    c = calibrate_mar(T, rate)
    return np.minimum(c * np.arange(1, T + 1), 1.0)


def calibrate_mar(T: int, rate: float) -> float:
    """``c = 2 * rate / (T + 1)``; if that pushes late probabilities past 1,
    ``c`` is re-solved so the clipped profile still averages to ``rate``."""
    _check_rate(rate)
    c = 2.0 * rate / (T + 1)
    t = np.arange(1, T + 1)
    clipped = np.mean(c * t > 1.0)
    if clipped == 0:
        return c
    if clipped > 0.05:
        warnings.warn(f"MAR rate {rate} with T={T} clips {clipped:.0%} of probabilities "
                      "at 1; the linear profile is distorted", stacklevel=3)

    def excess(cc):
        return np.mean(np.minimum(cc * t, 1.0)) - rate

    return float(optimize.brentq(excess, c, 1.0, xtol=1e-14))


def apply_mar(series: MissingSeries, rate: float, seed=None) -> MissingSeries:
    return _mask_from_probs(series, mar_probabilities(series.T, rate), seed)


def apply_mnar_d(series: MissingSeries, rate: float) -> MissingSeries:
    """Hide exactly ``round(rate * T)`` of the largest values (ties by index)."""
    _check_rate(rate)
    y = series.values
    if not series.is_complete:
        raise ValueError("MNAR-D needs a complete series")
    if np.ptp(y) == 0:
        raise DegenerateInputError("quantile cut of a constant series is undefined")
    k = int(round(rate * series.T))
    order = np.lexsort((np.arange(series.T), -y))
    missing = np.zeros(series.T, dtype=bool)
    missing[order[:k]] = True
    return series.with_mask(~missing)


def _mnar_t_weights(series: MissingSeries) -> np.ndarray:
    s = np.arange(1, series.T + 1) / series.T
    return s * s * series.values


def mnar_t_probabilities(series: MissingSeries, c: float) -> np.ndarray:
    return special.expit(c * _mnar_t_weights(series))


def calibrate_mnar_t(series: MissingSeries, rate: float) -> float:
    """Solve for ``c`` so the mean logistic probability equals ``rate``.

    Time is rescaled to (0, 1] before squaring. The attainable rates lie
    between the shares of negative and positive weights.
    """
    _check_rate(rate)
    w = _mnar_t_weights(series)

    def excess(c):
        return float(np.mean(special.expit(c * w))) - rate

    if abs(excess(0.0)) < 1e-12:
        return 0.0
    bound = _MNAR_T_CMAX / max(float(np.max(np.abs(w))), 1e-12)
    lo, hi = (0.0, bound) if excess(0.0) < 0 else (-bound, 0.0)
    if np.sign(excess(lo)) == np.sign(excess(hi)):
        # the other side may still bracket for lopsided series
        lo, hi = (-bound, 0.0) if lo == 0.0 else (0.0, bound)
        if np.sign(excess(lo)) == np.sign(excess(hi)):
            feasible = (float(np.mean(w < 0)), float(np.mean(w > 0)))
            raise CalibrationError(
                f"MNAR-T cannot reach rate {rate}; attainable range is about "
                f"[{min(feasible):.3f}, {max(feasible):.3f}]")
    c = optimize.brentq(excess, lo, hi, xtol=1e-12)
    if abs(excess(c)) > 0.005:
        raise CalibrationError(f"MNAR-T calibration missed target: {excess(c) + rate:.4f}")
    return float(c)


def calibrate_mnar_t_intercept(series: MissingSeries, rate: float,
                               strength: float = MNAR_T_FALLBACK_STRENGTH) -> float:
    """Intercept ``a`` so that ``expit(a + strength * w / sd(w))`` averages ``rate``.

    Used when the pure interaction model cannot reach ``rate``; the
    dependence on ``t^2 * y_t`` is kept at a fixed standardised strength.
    """
    _check_rate(rate)
    w = _mnar_t_weights(series)
    sd = float(np.std(w))
    if sd == 0:
        raise DegenerateInputError("MNAR-T weights are constant")
    z = strength * w / sd

    def excess(a):
        return float(np.mean(special.expit(a + z))) - rate

    return float(optimize.brentq(excess, -50.0, 50.0, xtol=1e-12))


def mnar_t_fallback_probabilities(series: MissingSeries, rate: float,
                                  strength: float = MNAR_T_FALLBACK_STRENGTH) -> np.ndarray:
    a = calibrate_mnar_t_intercept(series, rate, strength)
    w = _mnar_t_weights(series)
    return special.expit(a + strength * w / float(np.std(w)))


def apply_mnar_t(series: MissingSeries, rate: float, seed=None,
                 fallback: bool = True) -> MissingSeries:
    """Logistic-in-``t^2 y_t`` missingness calibrated to ``rate``.

    The pure model ``expit(c t^2 y_t)`` can only reach rates between the
    shares of negative and positive weights (near 0.5 for series centred
    on zero). Outside that range, ``fallback`` switches to the intercept
    model of :func:`calibrate_mnar_t_intercept` with a warning; without it
    a :class:`CalibrationError` is raised.
    """
    try:
        c = calibrate_mnar_t(series, rate)
        p = mnar_t_probabilities(series, c)
    except CalibrationError:
        if not fallback:
            raise
        warnings.warn(f"MNAR-T rate {rate} is outside the pure model's range; "
                      "using the intercept model", stacklevel=2)
        p = mnar_t_fallback_probabilities(series, rate)
    return _mask_from_probs(series, p, seed)


def stratum_probabilities(rate: float, base=P_RATES, fixed_top: float = 0.0):
    """Scale the per-stratum rates of equal-count strata to average ``rate``.

    Probabilities above 1 are clipped and the excess passed down to the next
    stratum. Returns the probabilities (top stratum first) and metadata.
    """
    base = np.asarray(base, dtype=float)
    k = base.size
    target_mass = rate * k
    if target_mass >= k:
        raise CalibrationError(f"rate {rate} needs every stratum fully missing")
    probs = base * target_mass / base.sum()
    for i in range(k - 1):
        if probs[i] > 1.0:
            probs[i + 1] += probs[i] - 1.0
            probs[i] = 1.0
    meta = {"scale": float(target_mass / base.sum()), "bottom_stratum_used": bool(probs[-1] > 0)}
    return probs, meta


def _strata(y: np.ndarray, k: int) -> np.ndarray:
    """Stratum id per value, 0 = highest, equal counts (ties by index)."""
    order = np.lexsort((np.arange(y.size), -y))
    ids = np.empty(y.size, dtype=int)
    ids[order] = np.minimum(np.arange(y.size) * k // y.size, k - 1)
    return ids


def mnar_p_probabilities(series: MissingSeries, rate: float):
    _check_rate(rate)
    probs, meta = stratum_probabilities(rate)
    ids = _strata(np.asarray(series.values), 3)
    return probs[ids], meta


def mnar_h_probabilities(series: MissingSeries, rate: float):
    """Top fully-missing stratum of width ``w`` above equal-count P strata.

    ``w`` solves ``w + (1 - w) * mean(P_RATES) = rate``.
    """
    _check_rate(rate)
    base_mean = float(np.mean(P_RATES))
    if rate < base_mean:
        raise CalibrationError(
            f"MNAR-H needs rate >= {base_mean:.4f} (feasible range [{base_mean:.4f}, 1))")
    w = (rate - base_mean) / (1.0 - base_mean)
    y = np.asarray(series.values)
    T = y.size
    order = np.lexsort((np.arange(T), -y))
    n_top = int(round(w * T))
    p = np.empty(T)
    p[order[:n_top]] = 1.0
    rest = order[n_top:]
    if rest.size:
        ids = np.minimum(np.arange(rest.size) * 3 // rest.size, 2)
        p[rest] = np.asarray(P_RATES)[ids]
    return p, {"top_width": w, "top_count": n_top}


def apply_mnar_p(series: MissingSeries, rate: float, seed=None) -> MissingSeries:
    p, _ = mnar_p_probabilities(series, rate)
    return _mask_from_probs(series, p, seed)


def apply_mnar_h(series: MissingSeries, rate: float, seed=None) -> MissingSeries:
    p, _ = mnar_h_probabilities(series, rate)
    return _mask_from_probs(series, p, seed)


def calibrate_c(series: MissingSeries, mechanism: str, rate: float) -> float:
    mech = normalize_mechanism(mechanism)
    if mech == "MAR":
        return calibrate_mar(series.T, rate)
    if mech == "MNAR-T":
        return calibrate_mnar_t(series, rate)
    raise ValueError("calibrate_c applies to MAR and MNAR-T only")


def apply_mechanism(series: MissingSeries, mechanism: str, rate: float, seed=None) -> MissingSeries:
    mech = normalize_mechanism(mechanism)
    if mech == "MNAR-D":
        return apply_mnar_d(series, rate)
    fn = {"MCAR": apply_mcar, "MAR": apply_mar, "MNAR-T": apply_mnar_t,
          "MNAR-P": apply_mnar_p, "MNAR-H": apply_mnar_h}[mech]
    return fn(series, rate, seed)
