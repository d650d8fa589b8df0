"""Fit the normal model to one draw of simulation 1b and inspect the result.

Prints the likelihood trace, the subspace distance to the true reduction of
the fitted model and of plain PCA, and the first few reduced observations.

    python demos/normal_fit.py
"""
import numpy as np

from gmlm import experiments, normal
from gmlm.core import sufficient_reduction


def main(n=500, seed=1):
    data, b_true = experiments.generate("1b", n, seed)
    res = normal.fit(data)
    print(f"{res.iterations} sweeps, converged={res.converged}")
    # the moment-based start is crude; the first sweep does most of the work
    print(f"log-likelihood per observation: start {res.trace[0]:.4g}, "
          f"after one sweep {res.trace[1]:.4f}, final {res.trace[-1]:.4f}")

    d_fit = experiments.subspace_distance(b_true, res.params.B)
    d_pca = experiments.subspace_distance(b_true, experiments.pca_reduction(data.X, b_true.shape[1]))
    print(f"distance to true reduction: GMLM {d_fit:.3f}, PCA {d_pca:.3f}")

    reduced = np.stack([sufficient_reduction(res.params, x, res.x_mean) for x in data.X[:3]])
    print(f"reduced shape {reduced.shape[1:]} from predictors of shape {data.dims}")
    print(reduced.round(3))


if __name__ == "__main__":
    main()
