"""Gaussian conditioning for AR(q) series with gaps.

An AR(q) path ``y_t = sum_j phi_j y_{t-j} + e_t`` with a weak independent
prior on its first q values is a Gaussian vector whose precision matrix is
banded with bandwidth q. Conditioning on the observed entries keeps the band,
so smoothed means, joint posterior draws and the observed-data likelihood
all cost O(T q^2) through banded Cholesky factorisations. The results are the
same quantities a Kalman filter plus RTS smoother produce; the loop-based
``kalman_filter`` / ``kalman_smoother`` below are kept as the reference
implementation and for forward (filtered) predictions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

_LOG2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class Prior:
    """Independent N(mean, var) prior on each of the first q values."""

    mean: float
    var: float

    @classmethod
    def weak(cls, values: np.ndarray, observed: np.ndarray, sigma2: float = 1.0) -> "Prior":
        obs = values[observed]
        spread = float(np.var(obs)) if obs.size > 1 else 0.0
        return cls(float(obs[0]), 10.0 * spread + 10.0 * sigma2 + 1e-8)


def _coef(phi) -> np.ndarray:
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    return np.concatenate([[1.0], -phi])


def precision_band(phi, sigma2: float, T: int, prior: Prior, obs_var: Optional[np.ndarray] = None):
    """Upper banded storage ``ab[q - d, j] = Q[j - d, j]`` of the path precision.

    ``obs_var`` (length T, ``inf`` where unobserved) adds measurement terms.
    """
    a = _coef(phi)
    q = a.size - 1
    ab = np.zeros((q + 1, T))
    n_rows = T - q
    for s in range(q + 1):
        for r in range(s, q + 1):
            # pair (col t-s, col t-r) for t = q..T-1; offset d = r - s, upper entry at col t-s
            d = r - s
            cols = slice(q - s, T - s)
            ab[q - d, cols] += a[s] * a[r] * np.ones(n_rows) / sigma2
    ab[q, :q] += 1.0 / prior.var
    if obs_var is not None:
        ab[q] += 1.0 / obs_var
    return ab


def _apply_precision(v: np.ndarray, phi, sigma2: float, prior: Prior) -> np.ndarray:
    a = _coef(phi)
    q = a.size - 1
    T = v.size
    Lv = np.zeros(T - q)
    for s in range(q + 1):
        Lv += a[s] * v[q - s:T - s]
    out = np.zeros(T)
    for s in range(q + 1):
        out[q - s:T - s] += a[s] * Lv
    out /= sigma2
    out[:q] += v[:q] / prior.var
    return out


def _sub_band(ab: np.ndarray, idx: np.ndarray) -> np.ndarray:
    q = ab.shape[0] - 1
    m = idx.size
    sub = np.zeros((q + 1, m))
    sub[q] = ab[q, idx]
    for d in range(1, q + 1):
        if m <= d:
            break
        dist = idx[d:] - idx[:-d]
        ok = dist <= q
        vals = np.zeros(m - d)
        vals[ok] = ab[q - dist[ok], idx[d:][ok]]
        sub[q - d, d:] = vals
    return sub


def path_logpdf(y: np.ndarray, phi, sigma2: float, prior: Prior) -> float:
    a = _coef(phi)
    q = a.size - 1
    T = y.size
    e = np.zeros(T - q)
    for s in range(q + 1):
        e += a[s] * y[q - s:T - s]
    head = y[:q] - prior.mean
    return float(-0.5 * (T - q) * (_LOG2PI + np.log(sigma2)) - 0.5 * (e @ e) / sigma2
                 - 0.5 * q * (_LOG2PI + np.log(prior.var)) - 0.5 * (head @ head) / prior.var)


class ConditionalPath:
    """Distribution of the missing entries of an AR(q) path given the observed ones."""

    def __init__(self, values: np.ndarray, observed: np.ndarray, phi, sigma2: float,
                 prior: Optional[Prior] = None):
        values = np.asarray(values, dtype=float)
        observed = np.asarray(observed, dtype=bool)
        self.phi = np.atleast_1d(np.asarray(phi, dtype=float))
        self.sigma2 = float(sigma2)
        self.prior = prior or Prior.weak(values, observed, sigma2)
        self.observed = observed
        self.base = np.where(observed, values, 0.0)
        self.missing = np.flatnonzero(~observed)
        q = self.phi.size
        T = values.size
        if self.missing.size:
            ab = precision_band(self.phi, self.sigma2, T, self.prior)
            self.band = _sub_band(ab, self.missing)
            h = np.zeros(T)
            h[:q] = self.prior.mean / self.prior.var
            rhs = h - _apply_precision(self.base, self.phi, self.sigma2, self.prior)
            self.chol = linalg.cholesky_banded(self.band, lower=False)
            self.mean = linalg.cho_solve_banded((self.chol, False), rhs[self.missing])
        else:
            self.band = self.chol = None
            self.mean = np.zeros(0)

    @property
    def q(self) -> int:
        return self.phi.size

    def logdet_precision(self) -> float:
        if self.chol is None:
            return 0.0
        return float(2.0 * np.log(self.chol[-1]).sum())

    def fill(self, missing_values: np.ndarray) -> np.ndarray:
        out = self.base.copy()
        out[self.missing] = missing_values
        return out

    def smoothed(self) -> np.ndarray:
        """Completed path with conditional means at the missing indices."""
        return self.fill(self.mean)

    def draw(self, z: np.ndarray) -> np.ndarray:
        """Joint posterior draw driven by standard normals ``z`` (one per missing index)."""
        if self.chol is None:
            return self.base.copy()
        q = self.q
        dev = linalg.solve_banded((0, q), self.chol, np.asarray(z, dtype=float))
        return self.fill(self.mean + dev)

    def variances(self) -> np.ndarray:
        """Posterior variance at each missing index."""
        if self.chol is None:
            return np.zeros(0)
        m = self.missing.size
        Uinv = linalg.solve_banded((0, self.q), self.chol, np.eye(m))
        return np.einsum("ij,ij->i", Uinv, Uinv)

    def observed_loglik(self) -> float:
        """Log density of the observed entries (missing ones integrated out)."""
        full = self.smoothed()
        m = self.missing.size
        return (path_logpdf(full, self.phi, self.sigma2, self.prior)
                + 0.5 * m * _LOG2PI - 0.5 * self.logdet_precision())


def noisy_ar1_posterior(values: np.ndarray, observed: np.ndarray, rho: float, sigma2: float,
                        obs_var: float, prior: Optional[Prior] = None):
    """Smoothed latent AR(1) path and observed-data log-likelihood when
    observations carry N(0, obs_var) measurement noise."""
    values = np.asarray(values, dtype=float)
    observed = np.asarray(observed, dtype=bool)
    prior = prior or Prior.weak(values, observed, sigma2)
    T = values.size
    r = np.where(observed, obs_var, np.inf)
    ab = precision_band([rho], sigma2, T, prior, r)
    yb = np.where(observed, values, 0.0)
    rhs = yb / r
    rhs[0] += prior.mean / prior.var
    chol = linalg.cholesky_banded(ab, lower=False)
    x = linalg.cho_solve_banded((chol, False), rhs)
    resid = (values - x)[observed]
    ll = (-0.5 * resid.size * (_LOG2PI + np.log(obs_var)) - 0.5 * (resid @ resid) / obs_var
          + path_logpdf(x, [rho], sigma2, prior)
          + 0.5 * T * _LOG2PI - float(np.log(chol[-1]).sum()))
    return x, ll


# ---------------------------------------------------------- reference Kalman

def _companion(phi: np.ndarray) -> np.ndarray:
    q = phi.size
    F = np.zeros((q, q))
    F[0] = phi
    F[1:, :-1] = np.eye(q - 1)
    return F


def kalman_filter(values, observed, phi, sigma2: float, prior: Optional[Prior] = None,
                  obs_var: float = 0.0):
    """Kalman filter for an AR(q) observed through its current value.

    State is ``(y_t, ..., y_{t-q+1})``. Returns filtered means and
    covariances of the state for t = q-1 .. T-1 (padded to length T with the
    state at q-1 for earlier t) and the prediction-error log-likelihood.
    """
    values = np.asarray(values, dtype=float)
    observed = np.asarray(observed, dtype=bool)
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    prior = prior or Prior.weak(values, observed, sigma2)
    q, T = phi.size, values.size
    F = _companion(phi)
    a = np.full(q, prior.mean)
    P = np.eye(q) * prior.var
    ll = 0.0

    def update(a, P, comp, y):
        nonlocal ll
        f = P[comp, comp] + obs_var
        v = y - a[comp]
        if f <= 1e-14 * max(1.0, abs(y)):
            return a, P
        k = P[:, comp] / f
        ll += -0.5 * (_LOG2PI + np.log(f) + v * v / f)
        a = a + k * v
        P = P - np.outer(k, P[comp])
        return a, 0.5 * (P + P.T)

    # the initial block y_0..y_{q-1} sits in the state at t = q-1, reversed
    for j in range(q):
        if observed[j]:
            a, P = update(a, P, q - 1 - j, values[j])
    means = np.zeros((T, q))
    covs = np.zeros((T, q, q))
    means[:q] = a
    covs[:q] = P
    Qm = np.zeros((q, q))
    Qm[0, 0] = sigma2
    for t in range(q, T):
        a = F @ a
        P = F @ P @ F.T + Qm
        if observed[t]:
            a, P = update(a, P, 0, values[t])
        means[t] = a
        covs[t] = P
    return means, covs, ll


def kalman_smoother(values, observed, phi, sigma2: float, prior: Optional[Prior] = None):
    """RTS smoother on top of ``kalman_filter``; returns smoothed means of y_t."""
    values = np.asarray(values, dtype=float)
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    q, T = phi.size, values.size
    means, covs, _ = kalman_filter(values, observed, phi, sigma2, prior)
    F = _companion(phi)
    Qm = np.zeros((q, q))
    Qm[0, 0] = sigma2
    sm = means.copy()
    sc = covs.copy()
    for t in range(T - 2, q - 2, -1):
        if t < q - 1:
            break
        Pp = F @ covs[t] @ F.T + Qm
        G = covs[t] @ F.T @ np.linalg.pinv(Pp)
        sm[t] = means[t] + G @ (sm[t + 1] - F @ means[t])
        sc[t] = covs[t] + G @ (sc[t + 1] - Pp) @ G.T
    out = np.empty(T)
    out[q - 1:] = sm[q - 1:, 0]
    # first q-1 values live in the lagged components of the state at q-1
    for j in range(q - 1):
        out[j] = sm[q - 1, q - 1 - j]
    return out
