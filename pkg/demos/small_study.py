"""A miniature version of the simulation study.

Runs a few cells of the grid with 100 replications and prints the
rejection-rate table. The full study is available through
``missadf simulate src/missadf/configs/paper_main.toml``.
"""

from missadf.simharness import SimGrid, emit_table, run_grid


def main():
    grid = SimGrid(T=500, rhos=(1.0, 0.95), mechanisms=("MCAR", "MAR"), rates=(0.5,),
                   methods=("CC", "MLEEM", "MLENS", "SSM", "LOCF", "IntL"),
                   replications=100)
    results = run_grid(grid)
    print(emit_table(results, "csv"))
    print("rho=1 rows are type I error rates; rho=0.95 rows are power.")


if __name__ == "__main__":
    main()
