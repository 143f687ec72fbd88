"""Monte-Carlo study of rejection rates and rho-hat bias across methods.

A grid cell is (rho, mechanism, rate, method, delta). Replications are
grouped by (rho, mechanism, rate) so every method sees the same masked
series; all seeds derive from ``base_seed`` and the cell coordinates, never
from execution order, so any subset of cells reproduces the full run.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .adf import PAPER_SPEC, RegressionSpec, adf_test, table_for
from .baselines import BASELINE_LABELS, BaselineMethod, baseline_test
from .core import MissadfError, MissingSeries, TestResult
from .missingness import MECHANISMS, MNAR_MECHANISMS, apply_mechanism, normalize_mechanism
from .mleem import DeltaSpec, NO_DELTA, mleem_test
from .obslik import mlen_test, mlens_test
from .ssmimpute import SSMConfig, ssm_unit_root_test

logger = logging.getLogger(__name__)

PROPOSED = ("MLEEM", "MLEN", "MLENS", "SSM")
METHODS = PROPOSED + BASELINE_LABELS
TABLE_METHODS = ("CC", "MLEEM", "MLEN", "MLENS", "SSM", "LOCF", "IntL", "K")
DISPLAY_ORDER = TABLE_METHODS + ("IntS", "M", "MICE")
COMPLETE = "NONE"
FAILURE_LIMIT = 0.10
_STAT_LEVELS = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass
class SimGrid:
    """Design of a simulation study. Defaults follow the main study at full size."""

    T: int = 500
    rhos: Tuple[float, ...] = (0.5, 0.9, 0.95, 1.0)
    mechanisms: Tuple[str, ...] = ("MCAR", "MAR", "MNAR-D", "MNAR-T")
    rates: Tuple[float, ...] = (0.3, 0.5, 0.7)
    methods: Tuple[str, ...] = TABLE_METHODS
    replications: int = 2000
    deltas: Tuple[float, ...] = (0.05, 0.1, 0.2, 0.3)
    delta_shape: str = "peak"
    alpha: float = 0.05
    base_seed: int = 20240501
    sigma: float = 1.0
    ssm_imputations: int = 5
    mice_imputations: int = 5
    spec_constant: bool = True
    spec_trend: bool = True
    spec_lags: int = 0
    include_complete: bool = True
    keep_replicates: bool = False
    allow_stagnant_ssm: bool = False

    def __post_init__(self):
        self.rhos = tuple(float(r) for r in self.rhos)
        self.rates = tuple(float(r) for r in self.rates)
        self.deltas = tuple(float(d) for d in self.deltas)
        self.mechanisms = tuple(normalize_mechanism(m) for m in self.mechanisms)
        self.methods = tuple(self.methods)
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.T < 10:
            raise ValueError("T must be >= 10")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; expected a subset of {METHODS}")
        if any(not 0.0 < r < 1.0 for r in self.rates):
            raise ValueError("rates must lie in (0, 1)")
        if any(d < 0 for d in self.deltas):
            raise ValueError("deltas must be >= 0")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.delta_shape not in ("peak", "stagnant"):
            raise ValueError("delta_shape must be 'peak' or 'stagnant'")

    @property
    def spec(self) -> RegressionSpec:
        return RegressionSpec(self.spec_constant, self.spec_trend, self.spec_lags)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SimGrid":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise KeyError(f"unknown SimGrid keys: {', '.join(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})

    def fingerprint(self) -> str:
        """Hash of every setting that changes cell results."""
        d = self.to_dict()
        for k in ("methods", "mechanisms", "rates", "rhos", "deltas", "keep_replicates"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class CellKey:
    rho: float
    mechanism: str
    rate: float
    method: str
    delta: Optional[float] = None

    @property
    def slug(self) -> str:
        d = "" if self.delta is None else f"_d{self.delta:g}"
        return f"{self.mechanism}_r{self.rate:g}_rho{self.rho:g}_{self.method}{d}"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class SimCellResult:
    key: CellKey
    rejection_rate: float
    mean_rho_hat: float
    sd_rho_hat: float
    median_p_value: float
    statistic_quantiles: Dict[str, float]
    completed: int
    failures: int
    failure_reasons: Dict[str, int] = field(default_factory=dict)
    replicates: Optional[List[dict]] = None

    @property
    def failed(self) -> bool:
        total = self.completed + self.failures
        return total == 0 or self.failures > FAILURE_LIMIT * total

    def to_dict(self) -> dict:
        d = {"key": self.key.to_dict(), "rejection_rate": self.rejection_rate,
             "mean_rho_hat": self.mean_rho_hat, "sd_rho_hat": self.sd_rho_hat,
             "median_p_value": self.median_p_value,
             "statistic_quantiles": self.statistic_quantiles, "completed": self.completed,
             "failures": self.failures, "failure_reasons": self.failure_reasons,
             "failed": self.failed}
        if self.replicates is not None:
            d["replicates"] = self.replicates
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimCellResult":
        return cls(CellKey(**d["key"]), d["rejection_rate"], d["mean_rho_hat"], d["sd_rho_hat"],
                   d["median_p_value"], d["statistic_quantiles"], d["completed"], d["failures"],
                   d.get("failure_reasons", {}), d.get("replicates"))


# ------------------------------------------------------------------ seeding

def _mech_code(mechanism: str) -> int:
    return 0 if mechanism == COMPLETE else MECHANISMS.index(mechanism) + 1


def _permille(x: float) -> int:
    return int(round(1000 * x))


def innovation_seed(base_seed: int, rep: int) -> np.random.SeedSequence:
    """Innovations are shared across rho within a replication."""
    return np.random.SeedSequence([base_seed, 0, rep])


def mask_seed(base_seed: int, rho_index: int, mechanism: str, rate: float, rep: int):
    return np.random.SeedSequence([base_seed, 1, rho_index, _mech_code(mechanism),
                                   _permille(rate), rep])


def method_seed(base_seed: int, rho_index: int, mechanism: str, rate: float, rep: int) -> int:
    ss = np.random.SeedSequence([base_seed, 2, rho_index, _mech_code(mechanism),
                                 _permille(rate), rep])
    return int(ss.generate_state(1)[0])


# ------------------------------------------------------------------ pieces

def gen_ar1(T: int, rho: float, sigma: float = 1.0, seed=None) -> MissingSeries:
    """AR(1) path with y_0 = 0 and N(0, sigma^2) innovations."""
    if T < 2:
        raise ValueError("T must be >= 2")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    eps = sigma * np.random.default_rng(seed).standard_normal(T)
    return MissingSeries(_ar1_path(rho, eps))


def _ar1_path(rho: float, eps: np.ndarray) -> np.ndarray:
    y = np.zeros(eps.size)
    for t in range(1, eps.size):
        y[t] = rho * y[t - 1] + eps[t]
    return y


def run_method(series: MissingSeries, method: str, spec: RegressionSpec = PAPER_SPEC,
               seed: int = 0, delta: DeltaSpec = NO_DELTA, ssm_imputations: int = 5,
               mice_imputations: int = 5, table=None) -> TestResult:
    """Dispatch one method by label; ``delta`` applies to MLEEM and SSM only."""
    if method == "MLEEM":
        return mleem_test(series, delta, spec, table)
    if method == "MLEN":
        return mlen_test(series, spec, table)
    if method == "MLENS":
        return mlens_test(series, spec, table)
    if method == "SSM":
        cfg = SSMConfig(M=ssm_imputations, seed=seed, delta=delta)
        return ssm_unit_root_test(series, cfg, spec, table)
    if method == "MICE":
        return baseline_test(series, BaselineMethod("MICE", m=mice_imputations), spec, table,
                             seed=seed)
    if method in BASELINE_LABELS:
        return baseline_test(series, method, spec, None if method == "CC" else table, seed=seed)
    raise ValueError(f"unknown method {method!r}")


def _reason(exc: BaseException) -> str:
    """Failure label with the variable tail of the message (after ';') dropped."""
    msg = str(exc).split(";")[0].splitlines()[0][:80] if str(exc) else ""
    return f"{type(exc).__name__}: {msg}" if msg else type(exc).__name__


_RECOVERABLE = (MissadfError, ValueError, ArithmeticError, np.linalg.LinAlgError)


def _aggregate(key: CellKey, records: List[dict], reasons: Counter, alpha: float,
               keep: bool) -> SimCellResult:
    done = [r for r in records if r is not None]
    if done:
        stats = np.array([r["statistic"] for r in done])
        rhos = np.array([r["rho_hat"] for r in done])
        pvals = np.array([r["p_value"] for r in done])
        rej = float(np.mean(pvals < alpha))
        sd = float(rhos.std(ddof=1)) if rhos.size > 1 else 0.0
        quants = {f"{q:g}": float(np.quantile(stats, q)) for q in _STAT_LEVELS}
        out = SimCellResult(key, rej, float(rhos.mean()), sd, float(np.median(pvals)), quants,
                            len(done), len(records) - len(done), dict(reasons))
    else:
        nan = float("nan")
        out = SimCellResult(key, nan, nan, nan, nan, {}, 0, len(records), dict(reasons))
    if keep:
        out.replicates = records
    return out


def run_group(grid: SimGrid, rho: float, mechanism: str, rate: float,
              methods: Sequence[str], deltas: Sequence[Optional[float]] = (None,),
              progress: Optional[Callable[[int], None]] = None) -> List[SimCellResult]:
    """All (method, delta) cells that share one (rho, mechanism, rate) ensemble.

    ``mechanism == "NONE"`` (rate 0) runs the complete-data test.
    """
    rho_index = grid.rhos.index(rho) if rho in grid.rhos else _permille(rho)
    spec = grid.spec
    table = table_for(spec, grid.T)
    cells = [(m, d) for m in methods for d in deltas]
    records: Dict[tuple, list] = {c: [] for c in cells}
    reasons: Dict[tuple, Counter] = {c: Counter() for c in cells}
    for rep in range(grid.replications):
        eps = grid.sigma * np.random.default_rng(innovation_seed(grid.base_seed, rep)) \
            .standard_normal(grid.T)
        full = MissingSeries(_ar1_path(rho, eps))
        seed = method_seed(grid.base_seed, rho_index, mechanism, rate, rep)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                series = full if mechanism == COMPLETE else apply_mechanism(
                    full, mechanism, rate, mask_seed(grid.base_seed, rho_index, mechanism, rate, rep))
                mask_error = None
            except _RECOVERABLE as exc:
                series, mask_error = None, exc
            for (method, d) in cells:
                if mask_error is not None:
                    records[(method, d)].append(None)
                    reasons[(method, d)][_reason(mask_error)] += 1
                    continue
                delta = NO_DELTA if not d else DeltaSpec.constant(d, grid.delta_shape)
                try:
                    res = run_method(series, method, spec, seed, delta, grid.ssm_imputations,
                                     grid.mice_imputations, table)
                    records[(method, d)].append({"rep": rep, "statistic": res.statistic,
                                                 "p_value": res.p_value, "rho_hat": res.rho_hat})
                except _RECOVERABLE as exc:
                    records[(method, d)].append(None)
                    reasons[(method, d)][_reason(exc)] += 1
        if progress is not None:
            progress(rep)
    out = []
    for (method, d) in cells:
        key = CellKey(rho, mechanism, rate, method, d)
        res = _aggregate(key, records[(method, d)], reasons[(method, d)], grid.alpha,
                         grid.keep_replicates)
        if res.failed:
            logger.warning("cell %s failed: %d of %d replications failed (%s)", key.slug,
                           res.failures, res.failures + res.completed, res.failure_reasons)
        out.append(res)
    return out


def run_cell(grid: SimGrid, key: CellKey) -> SimCellResult:
    """One cell; identical to the same cell taken from a full grid run."""
    return run_group(grid, key.rho, key.mechanism, key.rate, [key.method], [key.delta])[0]


# ------------------------------------------------------------------ grids

def _cell_path(out_dir: Path, key: CellKey) -> Path:
    return out_dir / f"{key.slug}.json"


def _load_cached(path: Path, grid: SimGrid) -> Optional[SimCellResult]:
    if not path.exists():
        return None
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError):
        return None
    if data.get("fingerprint") != grid.fingerprint():
        return None
    if data.get("config", {}).get("replications") != grid.replications:
        return None
    return SimCellResult.from_dict(data["result"])


def _save(path: Path, grid: SimGrid, res: SimCellResult) -> None:
    payload = {"config": grid.to_dict(), "fingerprint": grid.fingerprint(),
               "result": res.to_dict()}
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(payload, indent=1, sort_keys=True))
    tmp.replace(path)


def _run_groups(grid: SimGrid, groups: Iterable[Tuple[float, str, float]], methods,
                deltas, out_dir: Optional[Path]) -> List[SimCellResult]:
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    results = []
    for rho, mech, rate in groups:
        keys = [CellKey(rho, mech, rate, m, d) for m in methods for d in deltas]
        cached = {}
        if out_dir is not None:
            for k in keys:
                hit = _load_cached(_cell_path(out_dir, k), grid)
                if hit is not None:
                    cached[k] = hit
        todo_methods = [m for m in methods if any(CellKey(rho, mech, rate, m, d) not in cached
                                                  for d in deltas)]
        fresh = {}
        if todo_methods:
            logger.info("running %s rate=%g rho=%g: %s", mech, rate, rho, todo_methods)
            for r in run_group(grid, rho, mech, rate, todo_methods, deltas):
                fresh[r.key] = r
                if out_dir is not None:
                    _save(_cell_path(out_dir, r.key), grid, r)
        results.extend(cached.get(k) or fresh[k] for k in keys)
    return results


def run_grid(grid: SimGrid, out_dir: Optional[Path] = None) -> List[SimCellResult]:
    """Every (rho, mechanism, rate, method) cell plus complete-data rows.

    With ``out_dir`` each cell is written to its own JSON file and cells
    already present for the same configuration are loaded, not recomputed.
    """
    groups = [(rho, mech, rate) for mech in grid.mechanisms for rho in grid.rhos
              for rate in grid.rates]
    out = []
    if grid.include_complete:
        out += _run_groups(grid, [(rho, COMPLETE, 0.0) for rho in grid.rhos], ["CC"], [None],
                           out_dir)
    out += _run_groups(grid, groups, grid.methods, [None], out_dir)
    return out


def run_sensitivity_grid(grid: SimGrid, methods: Sequence[str] = ("MLEEM", "SSM"),
                         out_dir: Optional[Path] = None) -> List[SimCellResult]:
    """delta sweeps (with a delta = 0 baseline) on MNAR mechanisms.

    Stagnant-shape SSM runs need ``grid.allow_stagnant_ssm``; they diverge
    often enough that they are opt-in.
    """
    bad = [m for m in methods if m not in ("MLEEM", "SSM")]
    if bad:
        raise ValueError(f"sensitivity runs support MLEEM and SSM only, got {bad}")
    bad = [m for m in grid.mechanisms if m not in MNAR_MECHANISMS]
    if bad:
        raise ValueError(f"sensitivity runs need MNAR mechanisms, got {bad}")
    if "SSM" in methods and grid.delta_shape == "stagnant" and not grid.allow_stagnant_ssm:
        raise ValueError("stagnant-delta SSM runs are disabled; set allow_stagnant_ssm")
    deltas = [0.0] + [d for d in grid.deltas if d != 0.0]
    groups = [(rho, mech, rate) for mech in grid.mechanisms for rho in grid.rhos
              for rate in grid.rates]
    return _run_groups(grid, groups, list(methods), deltas, out_dir)


# ------------------------------------------------------------------ tables

def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.4f}"


def table_rows(results: Sequence[SimCellResult], methods: Optional[Sequence[str]] = None,
               value: str = "rejection_rate") -> List[dict]:
    """Table-2 layout: one row per (mechanism, rho, rate), one column per method.

    Complete-data results (rate 0) are repeated once at the top of every
    (mechanism, rho) block, in the CC column. Failed cells are left empty.
    """
    main = [r for r in results if r.key.mechanism != COMPLETE and r.key.delta is None]
    complete = {r.key.rho: r for r in results if r.key.mechanism == COMPLETE}
    if methods is None:
        methods = [m for m in DISPLAY_ORDER if any(r.key.method == m for r in main)]
        if complete and "CC" not in methods:
            methods = ["CC"] + list(methods)
    cells = {(r.key.mechanism, r.key.rho, r.key.rate, r.key.method): r for r in main}
    mechs = [m for m in MECHANISMS if any(k[0] == m for k in cells)]
    rows = []
    for mech in mechs:
        rhos = sorted({k[1] for k in cells if k[0] == mech}, reverse=True)
        for rho in rhos:
            if rho in complete:
                c = complete[rho]
                row = {"mechanism": mech, "rho": rho, "rate": 0.0}
                row.update({m: (None if c.failed else getattr(c, value)) if m == "CC" else None
                            for m in methods})
                rows.append(row)
            for rate in sorted({k[2] for k in cells if k[0] == mech and k[1] == rho}):
                row = {"mechanism": mech, "rho": rho, "rate": rate}
                for m in methods:
                    r = cells.get((mech, rho, rate, m))
                    row[m] = None if r is None or r.failed else getattr(r, value)
                rows.append(row)
    return rows


def emit_table(results: Sequence[SimCellResult], fmt: str = "csv",
               path: Optional[Path] = None, methods: Optional[Sequence[str]] = None,
               config: Optional[dict] = None, value: str = "rejection_rate") -> str:
    """Render ``table_rows`` as CSV or JSON text, optionally writing it to ``path``.

    JSON output carries the configuration and the per-cell aggregates so it
    can be reloaded with :func:`load_table`.
    """
    rows = table_rows(results, methods, value)
    if fmt == "csv":
        cols = list(rows[0].keys()) if rows else ["mechanism", "rho", "rate"]
        buf = io.StringIO()
        if config is not None:
            buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([row["mechanism"], f"{row['rho']:g}", f"{row['rate']:g}"]
                       + [_fmt(row[c]) for c in cols[3:]])
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps({"config": config, "value": value, "rows": rows,
                           "cells": [r.to_dict() for r in results]}, indent=1, sort_keys=True,
                          allow_nan=True)
    else:
        raise ValueError("fmt must be 'csv' or 'json'")
    if path is not None:
        Path(path).write_text(text)
    return text


def load_table(path) -> Tuple[Optional[dict], List[SimCellResult]]:
    """Inverse of the JSON form of :func:`emit_table`: (config, cell results)."""
    data = json.loads(Path(path).read_text())
    return data.get("config"), [SimCellResult.from_dict(c) for c in data["cells"]]
