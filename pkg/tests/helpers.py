"""Shared test utilities: random instances and a finite-difference harness."""
import numpy as np

from gmlm.core import Dataset, GmlmParams, gradients, log_likelihood


def random_spd(rng, p, spread=0.3):
    a = rng.normal(scale=spread, size=(p, p))
    return np.eye(p) + (a + a.T) / 2 + spread * p * np.eye(p) * 0.5


def random_normal_instance(rng, dims=(2, 3), ranks=(1, 2), n=20):
    params = GmlmParams(rng.normal(size=dims),
                        [rng.normal(size=(p, q)) for p, q in zip(dims, ranks)],
                        [random_spd(rng, p) for p in dims])
    data = Dataset(rng.normal(size=(n,) + tuple(dims)), rng.normal(size=(n,) + tuple(ranks)))
    return params, data


def _with_entry(params, block, k, idx, delta):
    if block == "eta_bar":
        eta = params.eta_bar.copy()
        eta[idx] += delta
        return params.replace(eta_bar=eta)
    if block == "betas":
        betas = [b.copy() for b in params.betas]
        betas[k][idx] += delta
        return params.replace(betas=betas)
    omegas = [o.copy() for o in params.omegas]
    a, b = idx
    omegas[k][a, b] += delta
    if a != b:
        omegas[k][b, a] += delta
    return params.replace(omegas=omegas)


def finite_difference_check(params, data, family, h=1e-5):
    """Stacked analytic and central-difference gradients.

    Omega entries are perturbed in symmetric pairs, so the matching analytic
    value of an off-diagonal pair is twice the symmetric gradient entry.
    """
    grad = gradients(params, data, family)
    analytic, numeric = [], []

    def central(block, k, idx):
        up = log_likelihood(_with_entry(params, block, k, idx, h), data, family)
        down = log_likelihood(_with_entry(params, block, k, idx, -h), data, family)
        return (up - down) / (2 * h)

    for idx in np.ndindex(params.eta_bar.shape):
        analytic.append(grad.eta_bar[idx])
        numeric.append(central("eta_bar", None, idx))
    for k, b in enumerate(params.betas):
        for idx in np.ndindex(b.shape):
            analytic.append(grad.betas[k][idx])
            numeric.append(central("betas", k, idx))
    for k, o in enumerate(params.omegas):
        for a in range(o.shape[0]):
            for b in range(a, o.shape[0]):
                analytic.append(grad.omegas[k][a, b] * (1 if a == b else 2))
                numeric.append(central("omegas", k, (a, b)))
    return np.array(analytic), np.array(numeric)


def relative_error(analytic, numeric):
    return float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12))


def subspace_cos(u, v):
    """|cos| of the angle between two vectors."""
    return abs(float(u @ v)) / (np.linalg.norm(u) * np.linalg.norm(v))
