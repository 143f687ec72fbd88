import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from missadf import (ARParams, EstimationError, LikelihoodContext, MissingSeries, df_statistic,
                     fit_ar1_ols, mle_numeric, mlen_test, mlens_test, obs_loglik, v_k)
from missadf.adf import RegressionSpec
from missadf.obslik import initial_estimates, mlen_statistic, mlens_statistic

from conftest import make_series


def test_v_k_examples():
    assert v_k(0.3, 1) == 1.0
    assert v_k(1.0, 5) == 5.0
    assert v_k(-1.0, 4) == 4.0
    assert v_k(0.5, 3) == pytest.approx(1.3125, abs=1e-15)


@given(st.floats(-1.2, 1.2), st.integers(1, 40))
def test_v_k_matches_direct_summation(rho, gap):
    direct = sum(rho ** (2 * (j - 1)) for j in range(1, gap + 1))
    assert v_k(rho, gap) == pytest.approx(direct, rel=1e-10, abs=1e-12)
    assert v_k(rho, 1) == 1.0


def test_v_k_near_one_is_continuous():
    assert v_k(1 - 1e-12, 7) == pytest.approx(7.0, rel=1e-9)


def _per_pair_oracle(series, rho, s2):
    """Sum of log N(rho^g y_prev, s2 * sum rho^(2j)) densities, term by term."""
    idx = np.flatnonzero(series.observed)
    total = 0.0
    for a, b in zip(idx[:-1], idx[1:]):
        g = b - a
        var = s2 * sum(rho ** (2 * j) for j in range(g))
        total += stats.norm(rho ** g * series.values[a], np.sqrt(var)).logpdf(series.values[b])
    return total


def test_obs_loglik_against_per_pair_densities():
    rng = np.random.default_rng(21)
    for _ in range(20):
        obs = rng.random(10) < 0.6
        obs[[0, 9]] = True
        s = MissingSeries(rng.standard_normal(10).cumsum(), obs)
        rho, s2 = rng.uniform(-1.1, 1.1), rng.uniform(0.2, 3)
        ll = obs_loglik(ARParams(rho, s2), LikelihoodContext.from_series(s))
        assert ll == pytest.approx(_per_pair_oracle(s, rho, s2), abs=1e-10)


def test_obs_loglik_rho_zero_is_iid_normal():
    s = make_series([0.3, None, -1.2, 0.8, None, None, 2.0])
    ll = obs_loglik(ARParams(0.0, 2.0), LikelihoodContext.from_series(s))
    # the first observation has no conditional term
    assert ll == pytest.approx(stats.norm(0, np.sqrt(2)).logpdf([-1.2, 0.8, 2.0]).sum(), abs=1e-12)


def test_initial_estimates_hand_example():
    est = initial_estimates(make_series([1, None, 3, 6]))
    assert est.rho == pytest.approx(2.0)
    assert est.sigma2 == pytest.approx(9.0)


def test_initial_estimates_errors_without_adjacent_pairs():
    with pytest.raises(EstimationError):
        initial_estimates(make_series([1, None, 2, None, 3, None, 4]))


def test_initial_estimates_equal_ols_on_complete_data():
    y = np.cumsum(np.random.default_rng(2).standard_normal(100))
    assert initial_estimates(MissingSeries(y)).rho == pytest.approx(fit_ar1_ols(y)[0].rho, rel=1e-14)


def test_mle_on_complete_data_matches_ols():
    y = np.cumsum(np.random.default_rng(5).standard_normal(300))
    fit = mle_numeric(MissingSeries(y))
    assert fit.params.rho == pytest.approx(fit_ar1_ols(y)[0].rho, abs=1e-4)


def test_mle_is_local_maximum():
    rng = np.random.default_rng(6)
    y = np.cumsum(rng.standard_normal(300))
    s = MissingSeries(y, rng.random(300) > 0.4)
    fit = mle_numeric(s)
    ctx = LikelihoodContext.from_series(s)
    best = obs_loglik(fit.params, ctx)
    for dr, dl in ((1e-3, 0), (-1e-3, 0), (0, 1e-3), (0, -1e-3)):
        p = ARParams(fit.params.rho + dr, fit.params.sigma2 * np.exp(dl))
        assert obs_loglik(p, ctx) < best


def test_mle_two_points_flagged():
    fit = mle_numeric(make_series([1.0, None, None, 2.5]))
    assert "unreliable_two_points" in fit.flags


def test_mlen_statistic_cases():
    s = make_series([1.0, 2.0, None, 2.5, 3.5])
    ctx = LikelihoodContext.from_series(s)
    assert mlen_statistic(ARParams(1.0, 1.0), ctx) == 0.0
    assert mlens_statistic(-1.0, 500, 250) == -2.0
    assert mlens_statistic(-1.3, 80, 80) == -1.3


def test_mlen_equals_centred_df_on_complete_data():
    y = np.cumsum(np.random.default_rng(8).standard_normal(200))
    params, _ = fit_ar1_ols(y)
    ctx = LikelihoodContext.from_series(MissingSeries(y))
    x = y[:-1]
    n = y.size
    se = np.sqrt(n * params.sigma2 / (n * (x @ x) - x.sum() ** 2))
    assert mlen_statistic(params, ctx) == pytest.approx((params.rho - 1) / se, rel=1e-12)
    # and it is close to the no-constant DF statistic with its OLS SE
    assert mlen_statistic(params, ctx) == pytest.approx(df_statistic(y, RegressionSpec()), abs=0.5)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 1000))
def test_mlens_is_scaled_mlen(seed):
    rng = np.random.default_rng(seed)
    y = np.cumsum(rng.standard_normal(120))
    s = MissingSeries(y, rng.random(120) > 0.3)
    a, b = mlen_test(s), mlens_test(s)
    assert b.statistic == pytest.approx(a.statistic * s.T / s.n_observed, rel=1e-12)


def test_mlen_complete_data_close_to_centred_statistic():
    y = np.cumsum(np.random.default_rng(9).standard_normal(400))
    a, b = mlen_test(MissingSeries(y)), mlens_test(MissingSeries(y))
    assert a.statistic == b.statistic
    params, _ = fit_ar1_ols(y)
    ref = mlen_statistic(params, LikelihoodContext.from_series(MissingSeries(y)))
    assert abs(a.statistic - ref) < 1e-3
