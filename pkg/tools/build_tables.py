"""Regenerate the shipped Dickey-Fuller quantile tables (10^5 replications each)."""

import sys
import time
from pathlib import Path

from missadf.adf import SHIPPED_SIZES, RegressionSpec, simulate_df_quantiles, table_filename

OUT = Path(__file__).resolve().parents[1] / "src" / "missadf" / "tables"
SEED = 20240501

if __name__ == "__main__":
    reps = int(sys.argv[1]) if len(sys.argv) > 1 else 100_000
    OUT.mkdir(parents=True, exist_ok=True)
    for det in ("n", "c", "ct"):
        spec = RegressionSpec.from_label(det)
        for size in SHIPPED_SIZES:
            t0 = time.time()
            table = simulate_df_quantiles(spec, size, reps, SEED)
            table.save(OUT / table_filename(spec, size))
            print(f"{det} T={size}: 5% = {table.critical_value(0.05):.4f} "
                  f"({time.time() - t0:.1f}s)", flush=True)
