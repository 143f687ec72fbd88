import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from missadf import (PAPER_SPEC, DegenerateInputError, MissingSeries, RegressionSpec, adf_test,
                     df_statistic, fit_ar1_ols, p_value, simulate_df_quantiles, table_for)
from missadf.adf import DFQuantileTable


def test_fit_ar1_ols_hand_evaluation():
    # rho = (2 + 8 + 32) / (1 + 4 + 16) = 2
    params, se = fit_ar1_ols(np.array([1.0, 2.0, 4.0, 8.0]) + [0, 0, 0, 1e-3])
    assert params.rho == pytest.approx(2.0, abs=1e-3)
    with pytest.raises(DegenerateInputError):
        fit_ar1_ols(np.array([1.0, 2.0, 4.0, 8.0]))


def test_constant_series_is_degenerate():
    with pytest.raises(DegenerateInputError):
        fit_ar1_ols(np.full(10, 3.0))
    with pytest.raises(DegenerateInputError):
        adf_test(np.full(50, 3.0))


def test_white_noise_rho_near_zero():
    y = np.random.default_rng(0).standard_normal(500)
    assert abs(fit_ar1_ols(y)[0].rho) < 0.1


def test_explosive_series_gives_positive_statistic():
    y = 2.0 ** np.arange(8) + np.random.default_rng(1).normal(0, 0.01, 8)
    assert df_statistic(y) > 0


def test_too_short_series_rejected():
    with pytest.raises(ValueError):
        df_statistic(np.array([0.0, 0.1]))


def test_statistic_matches_statsmodels_oracle():
    adfuller = pytest.importorskip("statsmodels.tsa.stattools").adfuller
    y = np.cumsum(np.random.default_rng(3).standard_normal(300))
    for det, spec in (("n", RegressionSpec()), ("c", RegressionSpec(True)),
                      ("ct", PAPER_SPEC)):
        ref = adfuller(y, maxlag=0, regression=det, autolag=None)[0]
        assert df_statistic(y, spec) == pytest.approx(ref, rel=1e-9)
    ref = adfuller(y, maxlag=2, regression="c", autolag=None)[0]
    assert df_statistic(y, RegressionSpec(True, False, 2)) == pytest.approx(ref, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 10_000))
def test_statistic_scale_invariant(scale, seed):
    y = np.cumsum(np.random.default_rng(seed).standard_normal(60))
    for spec in (RegressionSpec(), PAPER_SPEC):
        assert df_statistic(scale * y, spec) == pytest.approx(df_statistic(y, spec), abs=1e-10)


@given(st.floats(-10, 5), st.floats(-10, 5))
def test_p_value_monotone(a, b):
    table = table_for(RegressionSpec(), 500)
    lo, hi = sorted((a, b))
    assert p_value(lo, table) <= p_value(hi, table)
    assert 0.0 <= p_value(lo, table) <= 1.0


def test_p_value_lookup_rules():
    table = table_for(RegressionSpec(), 500)
    q05, q10 = table.quantile(0.05), table.quantile(0.10)
    assert p_value(q05, table) == pytest.approx(0.05)
    assert 0.05 < p_value(0.5 * (q05 + q10), table) < 0.10
    # linear between adjacent tabulated levels
    lv, qs = table.levels, table.quantiles
    mid = 0.5 * (qs[3] + qs[4])
    assert p_value(mid, table) == pytest.approx(0.5 * (lv[3] + lv[4]))
    assert p_value(-10.0, table) == min(table.levels)
    assert table.is_clamped(-10.0)


def test_shipped_no_constant_quantile():
    assert -1.99 <= table_for(RegressionSpec(), 500).quantile(0.05) <= -1.89


def test_quantile_simulation_deterministic_and_converging():
    a = simulate_df_quantiles(RegressionSpec(), 100, 2000, seed=5)
    b = simulate_df_quantiles(RegressionSpec(), 100, 2000, seed=5)
    assert a == b
    small = simulate_df_quantiles(RegressionSpec(), 500, 1000, seed=8)
    assert abs(small.quantile(0.05) - table_for(RegressionSpec(), 500).quantile(0.05)) < 0.15
    with pytest.raises(ValueError):
        simulate_df_quantiles(RegressionSpec(), 100, 500, seed=1)
    assert simulate_df_quantiles(RegressionSpec(), 100, 100, seed=1, allow_small=True).low_precision


def test_table_json_round_trip(tmp_path):
    t = simulate_df_quantiles(PAPER_SPEC, 50, 1000, seed=2)
    t.save(tmp_path / "t.json")
    assert DFQuantileTable.load(tmp_path / "t.json") == t


def test_table_interpolation_between_anchors():
    spec = RegressionSpec()
    t300 = table_for(spec, 300).quantile(0.05)
    lo, hi = sorted((table_for(spec, 250).quantile(0.05), table_for(spec, 500).quantile(0.05)))
    assert lo - 1e-12 <= t300 <= hi + 1e-12


def test_adf_test_result_fields():
    y = np.cumsum(np.random.default_rng(4).standard_normal(500))
    res = adf_test(MissingSeries(y))
    assert res.T == 500 == res.n_observed
    assert res.rejects(0.05) == (res.statistic < table_for(PAPER_SPEC, 500).critical_value(0.05))


@pytest.mark.slow
def test_type_one_error_calibrated():
    rng = np.random.default_rng(11)
    table = table_for(PAPER_SPEC, 500)
    R = 2000
    rej = sum(adf_test(np.cumsum(rng.standard_normal(500)), PAPER_SPEC, table).rejects(0.05)
              for _ in range(R))
    assert abs(rej / R - 0.05) <= 2 * np.sqrt(0.05 * 0.95 / R) + 1e-12


def test_stationary_series_rejected():
    rng = np.random.default_rng(12)
    rej = 0
    for _ in range(100):
        e = rng.standard_normal(500)
        y = np.empty(500)
        y[0] = e[0]
        for t in range(1, 500):
            y[t] = 0.5 * y[t - 1] + e[t]
        rej += adf_test(y).rejects(0.05)
    assert rej >= 99
