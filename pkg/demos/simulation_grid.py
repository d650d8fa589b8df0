"""Small replication grid over several settings, written to CSV.

Median distances are printed per setting and sample size. Use more
replications and the full sample-size grid for a complete run.

    python demos/simulation_grid.py grid.csv
"""
import sys

from gmlm import experiments


def main(path="grid.csv", settings=("1a", "1c", "1e", "2a"), n_grid=(100, 300, 750), reps=5):
    rows = experiments.run_grid(settings, n_grid, replications=reps, seed=11)
    experiments.write_csv(rows, path)
    for sid in settings:
        for method in ("gmlm", "pca"):
            med = experiments.median_distances(rows, sid, method)
            print(f"{sid} {method:4s} " + "  ".join(f"n={n}: {d:.3f}" for n, d in med.items()))
    print(f"{len(rows)} rows written to {path}")


if __name__ == "__main__":
    main(*sys.argv[1:2])
