"""Command-line front end.

Subcommands::

    missadf test SERIES.csv [--method all|mleem|...]
    missadf sensitivity SERIES.csv --method mleem|ssm --delta 0,0.1,0.5
    missadf simulate CONFIG.toml [--out DIR]
    missadf quantiles --size 500 --reps 100000 --out table.json

Exit codes: 0 success, 2 input error, 3 method precondition not met,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from scipy import stats

from .adf import PAPER_SPEC, DFQuantileTable, RegressionSpec, simulate_df_quantiles
from .baselines import BASELINE_LABELS
from .core import (CalibrationError, ConvergenceError, DegenerateInputError, EstimationError,
                   MissadfError, MissingSeries, TestResult)
from .mleem import DeltaSpec, NO_DELTA
from .simharness import SimGrid, emit_table, run_grid, run_method, run_sensitivity_grid
from .ssmimpute import SSMConfig, ssm_unit_root_test

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

logger = logging.getLogger("missadf")

EXIT_OK, EXIT_INPUT, EXIT_PRECONDITION, EXIT_NUMERIC = 0, 2, 3, 4
MISSING_TOKENS = {"", "na", "nan", "n/a"}
METHOD_CHOICES = {"mleem": "MLEEM", "mlen": "MLEN", "mlens": "MLENS", "ssm": "SSM",
                  **{m.lower(): m for m in BASELINE_LABELS}}
ALL_METHODS = ("MLEEM", "MLEN", "MLENS", "SSM", "CC", "LOCF", "IntL", "IntS", "K", "M", "MICE")
CONFIG_ONLY_KEYS = {"study", "sensitivity_methods"}


class InputError(Exception):
    """Malformed input file or arguments (exit code 2)."""


# ------------------------------------------------------------------ CSV I/O

def read_series_csv(source, column: Optional[str] = None) -> MissingSeries:
    """Parse a one-column (or named-column) CSV into a :class:`MissingSeries`.

    The first row is treated as a header when its value cell is not a
    number or a missing token. Empty cells, ``NA`` and ``NaN`` are missing;
    a blank line between data rows is an empty cell, while blank lines
    before the first or after the last row are ignored. Errors name the
    1-based line number.
    """
    try:
        text = Path(source).read_text() if not hasattr(source, "read") else source.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read {source}: {exc}") from None
    rows = list(csv.reader(io.StringIO(text)))
    blank = [not (r and any(c.strip() for c in r)) for r in rows]
    if all(blank):
        raise InputError("input contains no rows")
    lo = blank.index(False)
    hi = len(rows) - blank[::-1].index(False)
    numbered = [(i + 1, rows[i] if not blank[i] else [""]) for i in range(lo, hi)]
    first_line, first = numbered[0]
    has_header = not all(_is_value(c) for c in first) or column is not None
    col = 0
    if has_header:
        header = [c.strip() for c in first]
        numbered = numbered[1:]
        if column is not None:
            if column not in header:
                raise InputError(f"line {first_line}: column {column!r} not in header {header}")
            col = header.index(column)
        elif len(header) != 1:
            raise InputError(f"line {first_line}: {len(header)} columns; choose one with --column")
    elif len(first) != 1:
        raise InputError(f"line {first_line}: {len(first)} columns; choose one with --column "
                         "(requires a header)")
    values, observed = [], []
    for line, row in numbered:
        if row == [""]:
            values.append(np.nan)
            observed.append(False)
            continue
        if col >= len(row):
            raise InputError(f"line {line}: missing column {col + 1}")
        cell = row[col].strip()
        if cell.lower() in MISSING_TOKENS:
            values.append(np.nan)
            observed.append(False)
            continue
        try:
            v = float(cell)
        except ValueError:
            raise InputError(f"line {line}: cannot parse {cell!r} as a number") from None
        if not math.isfinite(v):
            raise InputError(f"line {line}: non-finite value {cell!r}")
        values.append(v)
        observed.append(True)
    if not values:
        raise InputError("input contains a header but no values")
    return MissingSeries(np.array(values), np.array(observed))


def _is_value(cell: str) -> bool:
    c = cell.strip()
    if c.lower() in MISSING_TOKENS:
        return True
    try:
        float(c)
        return True
    except ValueError:
        return False


def write_series_csv(series: MissingSeries, path, header: str = "value") -> None:
    """Write a series so that :func:`read_series_csv` restores it exactly.

    Values use ``repr`` (shortest round-trip form); missing entries are ``NA``.
    """
    lines = [header] + [repr(float(v)) if o else "NA"
                        for v, o in zip(series.values, series.observed)]
    Path(path).write_text("\n".join(lines) + "\n")


# ------------------------------------------------------------------ config

@dataclass
class RunConfig:
    """Resolved options of a ``test`` or ``sensitivity`` run."""

    input: str
    column: Optional[str]
    methods: List[str]
    spec: RegressionSpec
    alpha: float
    seed: int
    lag_order: int
    imputations: int
    delta: DeltaSpec
    table: Optional[str]

    def to_dict(self) -> dict:
        return {"input": self.input, "column": self.column, "methods": self.methods,
                "spec": self.spec.to_dict(), "alpha": self.alpha, "seed": self.seed,
                "lag_order": self.lag_order, "imputations": self.imputations,
                "delta": self.delta.to_dict(), "table": self.table}


def _spec_from_args(args) -> RegressionSpec:
    try:
        return RegressionSpec(args.spec_constant, args.spec_trend, args.spec_lags)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _delta_from_args(args, value: Optional[float] = None) -> DeltaSpec:
    kind = args.delta_kind
    d = args.delta if value is None else value
    try:
        if kind == "truncation":
            lam = args.lam if value is None else value
            if lam is None:
                raise InputError("--delta-kind truncation needs --lambda")
            return DeltaSpec.truncation(lam)
        if kind == "none" and not d:
            return NO_DELTA
        return DeltaSpec.constant(float(d or 0.0), args.delta_shape)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _methods_from_arg(name: str) -> List[str]:
    key = name.lower()
    if key == "all":
        return list(ALL_METHODS)
    if key not in METHODS_OR_ALL:
        raise InputError(f"unknown method {name!r}")
    return [METHOD_CHOICES[key]]


METHODS_OR_ALL = set(METHOD_CHOICES) | {"all"}


def _load_table(path: Optional[str], spec: RegressionSpec) -> Optional[DFQuantileTable]:
    if path is None:
        return None
    try:
        table = DFQuantileTable.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot load quantile table {path}: {exc}") from None
    if table.spec.deterministic != spec.deterministic:
        raise InputError(f"table {path} is for {table.spec.deterministic!r} terms, "
                         f"test uses {spec.deterministic!r}")
    return table


# ------------------------------------------------------------------ diagnostics

def residual_normality(series: MissingSeries) -> dict:
    """Jarque-Bera check on AR(1) residuals of adjacent observed pairs."""
    y = np.asarray(series.values)
    both = series.observed[1:] & series.observed[:-1]
    prev, curr = y[:-1][both], y[1:][both]
    if prev.size < 8 or not np.any(prev):
        return {"checked": False}
    rho = float(prev @ curr) / float(prev @ prev)
    resid = curr - rho * prev
    jb = stats.jarque_bera(resid)
    return {"checked": True, "skewness": float(stats.skew(resid)),
            "excess_kurtosis": float(stats.kurtosis(resid)),
            "jarque_bera_p": float(jb.pvalue), "normal_at_1pct": bool(jb.pvalue >= 0.01)}


# ------------------------------------------------------------------ commands

def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ConvergenceError, np.linalg.LinAlgError, ArithmeticError)):
        return EXIT_NUMERIC
    if isinstance(exc, (EstimationError, DegenerateInputError, CalibrationError, MissadfError,
                        ValueError)):
        return EXIT_PRECONDITION
    return EXIT_NUMERIC


def _run_one(series, method, cfg: RunConfig, table, delta: DeltaSpec) -> TestResult:
    if method == "SSM":
        scfg = SSMConfig(q=cfg.lag_order, M=cfg.imputations, seed=cfg.seed, delta=delta)
        return ssm_unit_root_test(series, scfg, cfg.spec, table)
    return run_method(series, method, cfg.spec, cfg.seed, delta, cfg.imputations,
                      cfg.imputations, table)


def _decision(res: TestResult, alpha: float) -> bool:
    return bool(res.p_value < alpha)


def _result_row(res: TestResult, alpha: float) -> dict:
    d = res.to_dict()
    d["reject"] = _decision(res, alpha)
    return d


def _write_output(payload: dict, rows: List[dict], out: Optional[str], fmt: str,
                  columns: Sequence[str]) -> None:
    if out is None:
        return
    if fmt == "json":
        Path(out).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
        return
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(payload["config"], sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(["" if r.get(c) is None else r.get(c) for c in columns])
    Path(out).write_text(buf.getvalue())


def _resolve(args, methods: List[str]) -> RunConfig:
    spec = _spec_from_args(args)
    if not 0 < args.alpha < 1:
        raise InputError("--alpha must lie in (0, 1)")
    if args.imputations < 1:
        raise InputError("--imputations must be >= 1")
    if args.lag_order < 1:
        raise InputError("--lag-order must be >= 1")
    return RunConfig(str(args.input), args.column, methods, spec, args.alpha, args.seed,
                     args.lag_order, args.imputations, _delta_from_args(args), args.table)


def cmd_test(args) -> int:
    methods = _methods_from_arg(args.method)
    cfg = _resolve(args, methods)
    series = read_series_csv(cfg.input, cfg.column)
    table = _load_table(cfg.table, cfg.spec)
    normality = residual_normality(series)
    if normality.get("checked") and not normality["normal_at_1pct"]:
        print("warning: AR(1) residuals look non-normal (Jarque-Bera p="
              f"{normality['jarque_bera_p']:.3g}); likelihood-based methods assume normal "
              "errors and may over-report non-stationarity", file=sys.stderr)
    results, errors, codes = [], {}, []
    for m in methods:
        delta = cfg.delta if m in ("MLEEM", "SSM") else NO_DELTA
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res = _run_one(series, m, cfg, table, delta)
            results.append(_result_row(res, cfg.alpha))
        except (MissadfError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            errors[m] = f"{type(exc).__name__}: {exc}"
            codes.append(_exit_code(exc))
            print(f"error: {m}: {exc}", file=sys.stderr)
    payload = {"config": cfg.to_dict(), "series": {"T": series.T, "n_observed": series.n_observed,
                                                   "missing_rate": series.missing_rate},
               "residual_normality": normality, "results": results, "errors": errors}
    _write_output(payload, results, args.out, args.format,
                  ["method", "statistic", "p_value", "reject", "rho_hat", "sigma2_hat",
                   "n_observed", "T"])
    for r in results:
        print(f"{r['method']:<10} stat={r['statistic']:9.4f}  p={r['p_value']:.4f}  "
              f"rho_hat={r['rho_hat']:.4f}  "
              f"{'reject H0' if r['reject'] else 'fail to reject H0'}")
    if not results:
        return max(codes) if codes else EXIT_PRECONDITION
    return EXIT_OK


def _parse_floats(text: str, what: str) -> List[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"{what} must be a comma-separated list of numbers") from None
    if not vals:
        raise InputError(f"{what} is empty")
    return vals


def cmd_sensitivity(args) -> int:
    method = METHOD_CHOICES.get(args.method.lower())
    if method not in ("MLEEM", "SSM"):
        raise InputError("sensitivity supports --method mleem or ssm")
    if args.delta_kind == "truncation":
        values = _parse_floats(args.lambdas or "", "--lambda")
    else:
        values = _parse_floats(args.deltas, "--delta")
        if any(v < 0 for v in values):
            raise InputError("delta values must be >= 0")
        if args.delta_kind == "none":
            args.delta_kind = "constant"
    args.delta = 0.0
    args.lam = values[0]
    cfg = _resolve(args, [method])
    series = read_series_csv(cfg.input, cfg.column)
    table = _load_table(cfg.table, cfg.spec)
    rows = []
    code = EXIT_OK
    for v in values:
        delta = _delta_from_args(args, v)
        if args.delta_kind != "truncation" and v == 0:
            delta = NO_DELTA
        row = {"delta": v if args.delta_kind != "truncation" else None,
               "lambda": v if args.delta_kind == "truncation" else None}
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res = _run_one(series, method, cfg, table, delta)
            row.update({"method": res.method, "rho_hat": res.rho_hat,
                        "statistic": res.statistic, "p_value": res.p_value,
                        "reject": _decision(res, cfg.alpha), "flags": res.flags})
        except (MissadfError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            row.update({"method": method, "error": f"{type(exc).__name__}: {exc}"})
            code = max(code, _exit_code(exc))
            print(f"error: {method} at {v:g}: {exc}", file=sys.stderr)
        rows.append(row)
    payload = {"config": {**cfg.to_dict(), "values": values, "delta_kind": args.delta_kind,
                          "delta_shape": args.delta_shape}, "results": rows}
    _write_output(payload, rows, args.out, args.format,
                  ["delta", "lambda", "method", "rho_hat", "statistic", "p_value", "reject"])
    for r in rows:
        label = f"lambda={r['lambda']:g}" if r["lambda"] is not None else f"delta={r['delta']:g}"
        if "error" in r:
            print(f"{label:<14} error: {r['error']}")
        else:
            print(f"{label:<14} rho_hat={r['rho_hat']:.4f}  stat={r['statistic']:9.4f}  "
                  f"p={r['p_value']:.4f}  {'reject H0' if r['reject'] else 'fail to reject H0'}")
    ok = any("error" not in r for r in rows)
    return EXIT_OK if ok else code


def load_sim_config(path) -> dict:
    """Flat TOML document whose keys mirror :class:`SimGrid` (plus ``study``)."""
    try:
        data = tomllib.loads(Path(path).read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise InputError(f"config must be flat; found tables {nested}")
    known = set(SimGrid.__dataclass_fields__) | CONFIG_ONLY_KEYS
    unknown = sorted(set(data) - known)
    if unknown:
        raise InputError(f"unknown config keys: {', '.join(unknown)}")
    return data


def cmd_simulate(args) -> int:
    data = load_sim_config(args.config)
    study = data.pop("study", "main")
    sens_methods = data.pop("sensitivity_methods", ["MLEEM", "SSM"])
    if args.replications is not None:
        data["replications"] = args.replications
    if args.seed is not None:
        data["base_seed"] = args.seed
    try:
        grid = SimGrid.from_dict(data)
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"invalid config: {exc}") from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {**grid.to_dict(), "study": study}
    if study == "main":
        results = run_grid(grid, out / "cells")
        value_cols = None
    elif study == "sensitivity":
        config["sensitivity_methods"] = list(sens_methods)
        try:
            results = run_sensitivity_grid(grid, sens_methods, out / "cells")
        except ValueError as exc:
            raise InputError(str(exc)) from None
        value_cols = None
    else:
        raise InputError("study must be 'main' or 'sensitivity'")
    if study == "main":
        text = emit_table(results, args.format, out / f"table.{args.format}", value_cols, config)
    else:
        text = _sensitivity_table(results, args.format, out / f"sensitivity.{args.format}",
                                  config)
    print(text if args.format == "csv" else f"wrote {len(results)} cells to {out}")
    return EXIT_OK


def _sensitivity_table(results, fmt: str, path: Path, config: dict) -> str:
    rows = [{"mechanism": r.key.mechanism, "rho": r.key.rho, "rate": r.key.rate,
             "method": r.key.method, "delta": r.key.delta, "rejection_rate": r.rejection_rate,
             "median_p_value": r.median_p_value, "mean_rho_hat": r.mean_rho_hat,
             "completed": r.completed, "failures": r.failures} for r in results]
    if fmt == "json":
        text = json.dumps({"config": config, "rows": rows}, indent=1, sort_keys=True)
    else:
        buf = io.StringIO()
        buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
        w = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else ["mechanism"],
                           lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        text = buf.getvalue()
    path.write_text(text)
    return text


def cmd_quantiles(args) -> int:
    spec = _spec_from_args(args)
    if args.size < 25:
        raise InputError("--size must be >= 25")
    if args.reps < 100:
        raise InputError("--reps must be >= 100")
    table = simulate_df_quantiles(spec, args.size, args.reps, args.seed,
                                  allow_small=args.reps < 1000)
    if table.low_precision:
        print(f"warning: {args.reps} replications give a low-precision table", file=sys.stderr)
    out = args.out or f"df_{spec.deterministic}_T{args.size}.json"
    table.save(out)
    print(f"5% critical value ({spec.deterministic}, T={args.size}): "
          f"{table.critical_value(0.05):.4f}; wrote {out}")
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _add_spec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--spec-constant", action=argparse.BooleanOptionalAction,
                   default=PAPER_SPEC.include_constant, help="constant in the DF regression")
    p.add_argument("--spec-trend", action=argparse.BooleanOptionalAction,
                   default=PAPER_SPEC.include_trend, help="linear trend in the DF regression")
    p.add_argument("--spec-lags", type=int, default=PAPER_SPEC.augmentation_lags,
                   help="lagged differences in the DF regression")


def _add_common_test_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help="CSV file with one value column (NA/NaN/empty = missing)")
    p.add_argument("--column", help="value column name (requires a header row)")
    p.add_argument("--lag-order", type=int, default=1, help="SSM autoregressive order q")
    p.add_argument("--imputations", type=int, default=5, help="M for SSM and MICE")
    p.add_argument("--delta-kind", choices=("none", "constant", "truncation"), default="none")
    p.add_argument("--delta-shape", choices=("peak", "stagnant"), default="peak")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--table", help="quantile table JSON to use instead of the shipped ones")
    p.add_argument("--out", help="write results here")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    _add_spec_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="missadf", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="run unit-root tests on one series")
    _add_common_test_flags(p)
    p.add_argument("--method", default="all",
                   help="all, or one of " + ", ".join(sorted(METHOD_CHOICES)))
    p.add_argument("--delta", type=float, default=0.0, help="constant delta for MLEEM/SSM")
    p.add_argument("--lambda", dest="lam", type=float, help="truncation point for delta")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("sensitivity", help="delta sweep for MLEEM or SSM")
    _add_common_test_flags(p)
    p.add_argument("--method", required=True, help="mleem or ssm")
    p.add_argument("--delta", dest="deltas", default="0,0.05,0.1,0.2,0.3",
                   help="comma-separated delta values")
    p.add_argument("--lambda", dest="lambdas", help="comma-separated truncation points")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("simulate", help="run a simulation grid from a flat TOML config")
    p.add_argument("config")
    p.add_argument("--out", default="sim_out", help="output directory (per-cell files + table)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--replications", type=int, help="override the config's replications")
    p.add_argument("--seed", type=int, help="override the config's base_seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("quantiles", help="simulate a Dickey-Fuller quantile table")
    p.add_argument("--size", type=int, default=500)
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    _add_spec_flags(p)
    p.set_defaults(func=cmd_quantiles)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (MissadfError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
