"""Dickey-Fuller unit-root testing for time series with missing observations.

The package offers four missing-data aware tests (EM-style imputation,
numeric maximum likelihood with a conservative statistic and its scaled
version, and state-space multiple imputation), the usual comparator
imputations, missingness generators and a Monte-Carlo harness.
"""

from .core import (ARParams, CalibrationError, ConvergenceError, DegenerateInputError,
                   EstimationError, GapSpan, MissadfError, MissingSeries, ObservedPoints,
                   PooledTestResult, TestResult, gap_spans, median_statistic, observed_points)
from .adf import (PAPER_SPEC, DFQuantileTable, RegressionSpec, adf_test, df_statistic,
                  fit_ar1_ols, p_value, simulate_df_quantiles, table_for)
from .obslik import LikelihoodContext, mle_numeric, mlen_test, mlens_test, obs_loglik, v_k
from .mleem import NO_DELTA, DeltaSpec, em_fit, mleem_test
from .ssmimpute import SSMConfig, draw_imputations, ssm_iterate, ssm_unit_root_test
from .baselines import BaselineMethod, baseline_test, mice_impute
from .missingness import apply_mechanism, calibrate_c

__version__ = "0.1.0"

__all__ = [
    "ARParams", "CalibrationError", "ConvergenceError", "DegenerateInputError",
    "EstimationError", "GapSpan", "MissadfError", "MissingSeries", "ObservedPoints",
    "PooledTestResult", "TestResult", "gap_spans", "median_statistic", "observed_points",
    "PAPER_SPEC", "DFQuantileTable", "RegressionSpec", "adf_test", "df_statistic",
    "fit_ar1_ols", "p_value", "simulate_df_quantiles", "table_for",
    "LikelihoodContext", "mle_numeric", "mlen_test", "mlens_test", "obs_loglik", "v_k",
    "NO_DELTA", "DeltaSpec", "em_fit", "mleem_test",
    "SSMConfig", "draw_imputations", "ssm_iterate", "ssm_unit_root_test",
    "BaselineMethod", "baseline_test", "mice_impute",
    "apply_mechanism", "calibrate_c",
]
