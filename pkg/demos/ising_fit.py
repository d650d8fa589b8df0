"""Binary predictors: exact moments, Gibbs sampling and a fit of simulation 2b.

    python demos/ising_fit.py
"""
import numpy as np

from gmlm import experiments, ising


def main(seed=3):
    rng = np.random.default_rng(seed)
    gamma = rng.normal(scale=0.5, size=21)
    _, exact = ising.exact_moments(gamma)
    x = ising.gibbs_sample(gamma, 50_000, 100, rng)
    print("p = 6, Gibbs vs enumeration, max moment error:", np.abs(x.T @ x / len(x) - exact).max().round(4))

    data, b_true = experiments.generate("2b", 750, seed)
    res = ising.fit(data)
    print(f"{res.iterations} RMSprop steps, final gradient norm {res.trace[-1]:.2e}, "
          f"converged={res.converged}")
    print("distance to true reduction:", round(experiments.subspace_distance(b_true, res.params.B), 3))
    print("fitted interaction factors:")
    for o in res.params.omegas:
        print(o.round(2))


if __name__ == "__main__":
    main()
