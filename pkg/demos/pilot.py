"""Pilot run that fixes the distance thresholds used by the acceptance suite.

Fits 20 replications at n = 750 with a seed disjoint from the one the tests
use, and prints the median distance per setting together with the frozen
threshold (median plus 25%, rounded up to two decimals). The printed
thresholds are copied into ``gmlm.experiments.PILOT_THRESHOLDS``.

    python demos/pilot.py
"""
import math

from gmlm import experiments

PILOT_SEED = 20240901


def main():
    settings = ["1a", "1b", "1c", "1d", "2b"]
    rows = experiments.run_grid(settings, n_grid=[750], replications=20, seed=PILOT_SEED,
                                methods=("gmlm",), workers=1)
    for sid in settings:
        med = experiments.median_distances(rows, sid)[750]
        print(f"{sid}: median {med:.4f} -> threshold {math.ceil(125 * med) / 100:.2f}")


if __name__ == "__main__":
    main()
