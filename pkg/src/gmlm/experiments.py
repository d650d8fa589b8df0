"""Simulation settings, subspace distance, replication runner and moment timing."""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import ising, normal
from .core import Dataset, DegenerateFitError, GmlmParams, monomial_design, scalar_design, trig_design

log = logging.getLogger(__name__)

N_GRID = (100, 200, 300, 500, 750)
CSV_HEADER = ("setting", "n", "rep", "method", "distance", "seconds", "iterations")
BENCH_HEADER = ("p", "method", "samples", "seconds")

# Median distances at n = 750 over 20 pilot replications (seed 20240901,
# disjoint from the acceptance seeds) plus 25%, rounded up; see demos/pilot.py.
PILOT_THRESHOLDS = {"1a": 0.10, "1b": 0.06, "1c": 0.08, "1d": 0.05, "2b": 0.11}


def subspace_distance(b, b_hat, tol=None):
    """Normalized Frobenius distance between the projections onto two column spans.

    ``||P_B - P_Bhat||_F / sqrt(min(rB + rBhat, 2 p - rB - rBhat))`` with
    ``P_M = M (M'M)^+ M'``; 0 for equal spans and 1 for orthogonal ones.
    """
    b = np.atleast_2d(np.asarray(b, dtype=float))
    b_hat = np.atleast_2d(np.asarray(b_hat, dtype=float))
    if b.shape[0] != b_hat.shape[0]:
        raise ValueError(f"row counts differ: {b.shape[0]} vs {b_hat.shape[0]}")
    p = b.shape[0]
    if p == 0:
        raise ValueError("matrices without rows have no column span")
    ranks = np.linalg.matrix_rank(b, tol=tol) + np.linalg.matrix_rank(b_hat, tol=tol)
    const = min(ranks, 2 * p - ranks)
    if const == 0:
        return 0.0
    proj = b @ np.linalg.pinv(b, hermitian=False)
    proj_hat = b_hat @ np.linalg.pinv(b_hat)
    return float(min(1.0, np.linalg.norm(proj - proj_hat) / np.sqrt(const)))


def truncate_rank(m, rank):
    """Best rank-`rank` approximation of `m` (truncated SVD)."""
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return (u[:, :rank] * s[:rank]) @ vt[:rank]


def ar_matrix(p, rho=0.5):
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def tridiagonal(p, diag=1.0, off=0.5):
    return diag * np.eye(p) + off * (np.eye(p, k=1) + np.eye(p, k=-1))


@dataclass(frozen=True)
class SimSetting:
    """One simulation setting.

    ``truth`` holds the Kronecker-structured parameters for the sampled
    model; the misspecified setting instead stores its dense ``B`` and
    covariance in ``dense_b`` / ``dense_cov``. ``factor_ranks`` are the ranks
    of the true reduction factors, used to truncate estimates before scoring.
    """

    id: str
    family: str
    dims: tuple
    design: Callable
    truth: Optional[GmlmParams] = None
    dense_b: Optional[np.ndarray] = None
    dense_cov: Optional[np.ndarray] = None
    factor_ranks: Optional[tuple] = None

    @property
    def true_b(self):
        return self.dense_b if self.truth is None else self.truth.B

    def draw_y(self, n, rng):
        if self.family == "normal":
            return rng.standard_normal(n)
        return rng.uniform(-1.0, 1.0, n)


def _normal_setting(sid, betas, omegas, design, factor_ranks=None):
    dims = tuple(b.shape[0] for b in betas)
    return SimSetting(sid, "normal", dims, design,
                      GmlmParams(np.zeros(dims), betas, omegas), factor_ranks=factor_ranks)


def _alternating(p):
    col = np.where(np.arange(p) % 2 == 0, 1.0, -1.0)
    return np.stack([col, -col], axis=1)


def _build_settings():
    dims = (2, 3, 5)
    e1 = [np.eye(p)[:, :1] for p in dims]
    e12 = [np.eye(p)[:, :2] for p in dims]
    ar = [ar_matrix(p) for p in dims]
    cubic = lambda y: monomial_design(y, (2, 2, 2))
    out = {
        "1a": _normal_setting("1a", e1, ar, lambda y: scalar_design(y, 3)),
        "1b": _normal_setting("1b", e12, ar, cubic),
        "1c": _normal_setting("1c", [_alternating(p) for p in dims], ar, cubic, (1, 1, 1)),
        "1d": _normal_setting("1d", e12, [tridiagonal(p) for p in dims], cubic),
        "1e": SimSetting("1e", "normal", (5, 5), lambda y: monomial_design(y, (2, 2)),
                         dense_b=np.eye(25)[:, :4], dense_cov=ar_matrix(25)),
    }
    base_betas = [np.eye(2), np.eye(3)[:, :2]]
    base_omegas = [np.array([[0.0, -2.0], [-2.0, 0.0]]),
                   np.array([[1.0, 0.5, 0.0], [0.5, 1.0, 0.5], [0.0, 0.5, 1.0]])]

    def ising_setting(sid, betas, omegas, design, factor_ranks=None):
        return SimSetting(sid, "ising", (2, 3), design,
                          GmlmParams(np.zeros((2, 3)), betas, omegas), factor_ranks=factor_ranks)

    out["2a"] = ising_setting("2a", [np.array([[1.0], [0.0]]), np.array([[1.0], [0.0], [0.0]])],
                              base_omegas, lambda y: scalar_design(y, 2))
    out["2b"] = ising_setting("2b", base_betas, base_omegas, trig_design)
    out["2c"] = ising_setting("2c", [np.array([[1.0, 0.0], [1.0, 0.0]]),
                                     np.array([[0.0, 0.0], [1.0, -1.0], [0.0, 0.0]])],
                              base_omegas, trig_design, (1, 1))
    out["2d"] = ising_setting("2d", base_betas,
                              [0.5 * np.array([[0.0, 1.0], [1.0, 0.0]]), tridiagonal(3, 0.0, 1.0)],
                              trig_design)
    return out


SETTINGS = _build_settings()
SETTING_IDS = tuple(SETTINGS)


def get_setting(setting) -> SimSetting:
    if isinstance(setting, SimSetting):
        return setting
    try:
        return SETTINGS[str(setting)]
    except KeyError:
        raise ValueError(f"unknown setting {setting!r}; choose from {', '.join(SETTING_IDS)}") from None


def generate(setting, n, seed):
    """Draw ``n`` observations of a setting; returns ``(Dataset, true B)``."""
    s = get_setting(setting)
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    y = s.draw_y(n, rng)
    f = s.design(y)
    if s.truth is None:
        chol = np.linalg.cholesky(s.dense_cov)
        fy = np.stack([np.ones_like(y), np.sin(y), np.cos(y), np.sin(y) * np.cos(y)], axis=1)
        flat = fy @ s.dense_b.T + rng.standard_normal((n, s.dense_cov.shape[0])) @ chol.T
        x = flat.reshape((n,) + s.dims, order="F")
    elif s.family == "normal":
        x = normal.sample_conditional(s.truth, f, rng)
    else:
        x = ising.sample_conditional(s.truth, f, rng)
    return Dataset(x, f, y), s.true_b


@dataclass
class ResultRow:
    setting: str
    n: int
    rep: int
    method: str
    distance: float
    seconds: float
    iterations: int


def pca_reduction(x, q):
    """Leading ``q`` principal directions of the vectorized centred predictors."""
    flat = x.reshape(x.shape[0], -1, order="F")
    flat = flat - flat.mean(axis=0)
    _, _, vt = np.linalg.svd(flat, full_matrices=False)
    return vt[:q].T


def estimate(setting, data: Dataset, method, normal_config=None, ising_config=None):
    """Estimated vectorized reduction matrix and iteration count."""
    s = get_setting(setting)
    if method == "pca":
        return pca_reduction(data.X, np.linalg.matrix_rank(s.true_b)), 0
    if method != "gmlm":
        raise ValueError(f"unknown method {method!r}")
    if s.family == "normal":
        res = normal.fit(data, normal_config)
    else:
        res = ising.fit(data, ising_config)
    betas = res.params.betas
    if s.factor_ranks is not None:
        betas = [truncate_rank(b, k) for b, k in zip(betas, s.factor_ranks)]
    return GmlmParams(res.params.eta_bar, betas, res.params.omegas).B, res.iterations


def replication_seed(seed, setting_id, n, rep):
    """Independent stream per (setting, n, replication) derived from one master seed."""
    return np.random.SeedSequence([int(seed), SETTING_IDS.index(setting_id), int(n), int(rep)])


def _run_one(task):
    sid, n, rep, seed, methods, normal_config, ising_config = task
    ss = replication_seed(seed, sid, n, rep)
    data_seed, fit_seed = ss.spawn(2)
    data, b_true = generate(sid, n, np.random.default_rng(data_seed))
    if ising_config is not None:
        ising_config = replace(ising_config, seed=int(fit_seed.generate_state(1)[0]))
    rows = []
    for method in methods:
        start = time.perf_counter()
        try:
            b_hat, iters = estimate(sid, data, method, normal_config, ising_config)
            dist = subspace_distance(b_true, b_hat)
        except (DegenerateFitError, np.linalg.LinAlgError, ValueError) as err:
            log.warning("setting %s n=%d rep=%d %s failed: %s", sid, n, rep, method, err)
            dist, iters = float("nan"), -1
        rows.append(ResultRow(sid, n, rep, method, dist, time.perf_counter() - start, iters))
    return rows


def run_grid(settings: Iterable, n_grid: Sequence[int] = N_GRID, replications=20, seed=0,
             methods=("gmlm", "pca"), workers=1, normal_config=None, ising_config=None):
    """Fit every method on every replication; rows come in (setting, n, rep, method) order.

    A failing fit is recorded with a NaN distance and ``iterations = -1``.
    """
    ising_config = ising_config or ising.IsingFitConfig()
    tasks = [(get_setting(s).id, int(n), rep, seed, tuple(methods), normal_config, ising_config)
             for s in settings for n in n_grid for rep in range(replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_one, tasks))
    else:
        chunks = [_run_one(t) for t in tasks]
    return [row for chunk in chunks for row in chunk]


def write_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([r.setting, r.n, r.rep, r.method, repr(float(r.distance)),
                        repr(float(r.seconds)), r.iterations])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        return [ResultRow(s, int(n), int(rep), m, float(d), float(sec), int(it))
                for s, n, rep, m, d, sec, it in reader]


def median_distances(rows, setting, method="gmlm"):
    """``{n: median distance}`` ignoring failed replications."""
    out = {}
    for n in sorted({r.n for r in rows if r.setting == setting}):
        d = [r.distance for r in rows if r.setting == setting and r.n == n and r.method == method]
        out[n] = float(np.nanmedian(d))
    return out


@dataclass
class BenchRow:
    p: int
    method: str
    samples: int
    seconds: float


def moment_bench(p_grid, mc_samples=10_000, seed=0, repeats=3, burn_in=100):
    """Best-of-`repeats` wall-clock for exact and Monte-Carlo second moments."""
    rows = []
    rng = np.random.default_rng(seed)
    for p in p_grid:
        gamma = rng.normal(scale=0.5, size=p * (p + 1) // 2)
        if p <= ising.ENUMERATION_LIMIT:
            rows.append(BenchRow(p, "exact", 1 << p, _best_time(lambda: ising.exact_moments(gamma), repeats)))
        cfg = ising.IsingFitConfig(mc_samples=mc_samples, burn_in=burn_in)
        mc_rng = np.random.default_rng(seed + p)
        rows.append(BenchRow(p, "mc", mc_samples,
                             _best_time(lambda: ising.mc_moments(gamma, cfg, mc_rng), repeats)))
    return rows


def _best_time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def write_bench_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(BENCH_HEADER)
        for r in rows:
            w.writerow([r.p, r.method, r.samples, repr(float(r.seconds))])
