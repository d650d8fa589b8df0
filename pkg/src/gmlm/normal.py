"""Multi-linear normal GMLM.

The conditional law of ``X | Y = y`` is normal with mean
``mu_y = Omega^{-1} eta_{1y}`` and separable covariance
``Sigma_r (x) ... (x) Sigma_1`` where ``Sigma_k = Omega_k^{-1}``; the
scaling constant of the quadratic term is ``c = -1/2``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import core
from .core import (DegenerateFitError, Dataset, FitResult, GmlmParams, Moments,
                   log_likelihood, normalize)
from .tensor import mlm_batch, rowdot, unfold_batch

log = logging.getLogger(__name__)


def _spd_inverse(m, what="Omega"):
    try:
        c = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as err:
        raise np.linalg.LinAlgError(f"{what} is not symmetric positive definite") from err
    ci = np.linalg.inv(c)
    return ci.T @ ci


def _sym_sqrt(m):
    w, v = np.linalg.eigh(m)
    if w.min() <= 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    return (v * np.sqrt(w)) @ v.T


class _NormalMoments(Moments):
    def __init__(self, mu, sigmas):
        self.g1 = mu
        self.sigmas = sigmas

    def contract_g2(self, mode, omegas):
        r = len(self.sigmas)
        scale = np.prod([np.sum(self.sigmas[k] * omegas[k]) for k in range(r) if k != mode])
        others = [None if k == mode else omegas[k] for k in range(r)]
        mo = mlm_batch(self.g1, others)
        mu_term = np.einsum("iab,icb->ac", unfold_batch(self.g1, mode),
                            unfold_batch(mo, mode)) / self.g1.shape[0]
        return scale * self.sigmas[mode] + mu_term


class NormalFamily(core.ExponentialFamily):
    """Multi-linear normal member of the quadratic exponential family."""

    c = -0.5

    def log_partition(self, eta1, omegas):
        """``b = 1/2 eta1' Omega^{-1} eta1 - 1/2 log det Omega`` (constants dropped)."""
        sigmas = [_spd_inverse(o) for o in omegas]
        p = int(np.prod([o.shape[0] for o in omegas]))
        logdet = sum(p / o.shape[0] * np.linalg.slogdet(o)[1] for o in omegas)
        mu = mlm_batch(eta1, sigmas)
        return 0.5 * rowdot(eta1, mu) - 0.5 * logdet

    def moments(self, eta1, omegas):
        sigmas = [_spd_inverse(o) for o in omegas]
        return _NormalMoments(mlm_batch(eta1, sigmas), sigmas)


@dataclass
class NormalFitConfig:
    max_iter: int = 100
    rel_tol: float = 1e-6
    cond_threshold: float = 1e-10
    reg_coeff: float = 0.2
    # "mle": exact block-coordinate Omega steps; "residual": scaled residual scatter
    omega_step: str = "mle"

    def __post_init__(self):
        if self.max_iter < 0 or self.rel_tol <= 0 or self.cond_threshold <= 0 or self.reg_coeff <= 0:
            raise ValueError("iteration cap and tolerances must be positive")
        if self.omega_step not in ("mle", "residual"):
            raise ValueError(f"unknown Omega step {self.omega_step!r}")


def conditional_mean(params: GmlmParams, f):
    """``mu_y = Omega^{-1} (eta_bar + f x_k beta_k)``; one tensor or a stack."""
    eta1 = core.natural_param_eta1(params, f)
    sigmas = [_spd_inverse(o) for o in params.omegas]
    if eta1.shape == params.dims:
        return mlm_batch(eta1[None], sigmas)[0]
    return mlm_batch(eta1, sigmas)


def sample_conditional(params: GmlmParams, f, rng):
    """Draw ``X | Y`` for one design tensor or a stack of them.

    ``X = mu_y + W x_k Sigma_k^{1/2}`` with ``W`` standard normal and
    symmetric square roots.
    """
    f = np.asarray(f, dtype=float)
    single = f.shape == params.ranks
    mu = conditional_mean(params, f[None] if single else f)
    roots = [_sym_sqrt(_spd_inverse(o)) for o in params.omegas]
    x = mu + mlm_batch(rng.standard_normal(mu.shape), roots)
    return x[0] if single else x


def _leading_eigvecs(s, q):
    w, v = np.linalg.eigh(s)
    order = np.argsort(w)[::-1][:q]
    return w[order], v[:, order]


def initialize(data: Dataset):
    """Moment-based start: ``beta_k = U_k sqrt(D_k) V_k^T`` and ``Omega_k = I``.

    ``U_k`` and ``V_k`` hold the leading eigenvectors of the mode-wise second
    moments of ``X`` and ``F``; ``D_k`` is the diagonal of
    ``sqrt(lambda_j(X) lambda_j(F))``. Expects centred data.

    Returns the parameters and a list of modes whose eigenvalues had to be
    padded.
    """
    if not np.any(data.X):
        raise DegenerateFitError("all predictors are zero")
    betas, padded = [], []
    for k, (p, q) in enumerate(zip(data.dims, data.design_dims)):
        if q > p:
            raise ValueError(f"mode {k}: reduction rank {q} exceeds dimension {p}")
        xk, fk = unfold_batch(data.X, k), unfold_batch(data.F, k)
        sx = np.einsum("iab,icb->ac", xk, xk) / data.n
        sf = np.einsum("iab,icb->ac", fk, fk) / data.n
        lx, u = _leading_eigvecs(sx, q)
        lf, v = _leading_eigvecs(sf, q)
        d = lx * lf
        if np.any(d <= 0):
            padded.append(k)
            d = np.where(d > 0, d, 1e-8)
        betas.append((u * np.sqrt(np.sqrt(d))) @ v.T)
    omegas = [np.eye(p) for p in data.dims]
    return GmlmParams(np.zeros(data.dims), betas, omegas), padded


def beta_update(j, params: GmlmParams, data: Dataset):
    """Closed-form maximizer over ``beta_j`` with everything else fixed.

    Solves ``(sum_i H_i G_i^T) beta_j^T = (sum_i G_i X_(j)^T) Omega_j`` with
    ``G_i = (F_i x_{k!=j} beta_k)_(j)`` and
    ``H_i = (F_i x_{k!=j} Omega_k^{-1} beta_k)_(j)`` (zero ``eta_bar``).
    """
    r = params.order
    sig_beta = [None if k == j else _spd_inverse(params.omegas[k]) @ params.betas[k]
                for k in range(r)]
    plain = [None if k == j else params.betas[k] for k in range(r)]
    g = unfold_batch(mlm_batch(data.F, plain), j)
    h = unfold_batch(mlm_batch(data.F, sig_beta), j)
    gram = np.einsum("iab,icb->ac", h, g)
    rhs = np.einsum("iab,icb->ac", g, unfold_batch(data.X, j)) @ params.omegas[j]
    rcond = 1.0 / np.linalg.cond(gram) if np.any(gram) else 0.0
    if not rcond > 1e-14:
        raise DegenerateFitError(
            f"singular Gram matrix for beta_{j} (reciprocal condition {rcond:.3g})")
    return np.linalg.solve(gram, rhs).T


def _residuals(params, data):
    return data.X - conditional_mean(params, data.F)


def _regularized_inverse(s, cond_threshold, reg_coeff):
    """Inverse of SPD `s`, ridge-regularized if its reciprocal condition is tiny."""
    s = (s + s.T) / 2
    w = np.linalg.eigvalsh(s)
    rcond = w[0] / w[-1] if w[-1] > 0 else 0.0
    if rcond < cond_threshold:
        return _spd_inverse(s + reg_coeff * w[-1] * np.eye(s.shape[0])), True
    return _spd_inverse(s), False


def omega_update(params: GmlmParams, data: Dataset, cond_threshold=1e-10, reg_coeff=0.2,
                 return_flags=False):
    """Scatter estimates from residual mode-wise covariances.

    ``Omega_j = (s Sigma~_j)^{-1}`` with ``Sigma~_j = sum_i R_i(j) R_i(j)^T``
    and ``s`` chosen so that the mean squared residual equals
    ``prod_k tr(Omega_k^{-1})``. Ill-conditioned ``s Sigma~_j`` are replaced
    by ``s Sigma~_j + reg_coeff lambda_max I`` before inversion.
    """
    r = params.order
    resid = _residuals(params, data)
    mse = float(np.mean(rowdot(resid, resid)))
    if mse == 0:
        raise DegenerateFitError("residuals vanish identically")
    scatters = []
    for j in range(r):
        rj = unfold_batch(resid, j)
        scatters.append(np.einsum("iab,icb->ac", rj, rj))
    s = (mse / np.prod([np.trace(m) for m in scatters])) ** (1.0 / r)
    omegas, flags = [], []
    for m in scatters:
        o, reg = _regularized_inverse(s * m, cond_threshold, reg_coeff)
        omegas.append((o + o.T) / 2)
        flags.append(reg)
    return (omegas, flags) if return_flags else omegas


def omega_update_mle(params: GmlmParams, data: Dataset, cond_threshold=1e-10, reg_coeff=0.2):
    """Block-coordinate maximizers over each ``Omega_j`` at a fixed mean.

    The conditional mean ``mu = F x_k Omega_k^{-1} beta_k`` is held fixed, so
    ``beta_k`` is re-expressed as ``Omega_k A_k`` afterwards. Each
    ``Sigma_j = p_j / (n p) sum_i R_i(j) (x)_{k!=j} Omega_k R_i(j)^T`` is the
    exact maximizer given the other modes, so the likelihood cannot decrease
    unless regularization kicks in.
    """
    r = params.order
    resid = _residuals(params, data)
    if not np.any(resid):
        raise DegenerateFitError("residuals vanish identically")
    p = int(np.prod(params.dims))
    sigmas = [_spd_inverse(o) for o in params.omegas]
    a = [s @ b for s, b in zip(sigmas, params.betas)]
    omegas, flags = list(params.omegas), []
    for j in range(r):
        others = [None if k == j else omegas[k] for k in range(r)]
        rw = mlm_batch(resid, others)
        scatter = np.einsum("iab,icb->ac", unfold_batch(resid, j), unfold_batch(rw, j))
        scatter *= params.dims[j] / (data.n * p)
        o, reg = _regularized_inverse(scatter, cond_threshold, reg_coeff)
        omegas[j] = (o + o.T) / 2
        flags.append(reg)
    betas = [o @ ak for o, ak in zip(omegas, a)]
    return params.replace(betas=betas, omegas=omegas), flags


def fit(data: Dataset, config: NormalFitConfig = None) -> FitResult:
    """Flip-flop maximum likelihood fit of the multi-linear normal GMLM.

    The data are centred first (predictors and designs by their sample
    means). Each sweep updates ``beta_1..beta_r`` in closed form and then the
    scatter factors, until the relative change of the log-likelihood drops
    below ``rel_tol`` or ``max_iter`` sweeps are done. The returned ``eta_bar``
    is ``x_bar x_k Omega_k - f_bar x_k beta_k`` so the parameters apply to the
    original, uncentred predictors and designs.
    """
    config = config or NormalFitConfig()
    if data.n < 2:
        raise ValueError("need at least two observations")
    x_mean, f_mean = data.X.mean(axis=0), data.F.mean(axis=0)
    centred = Dataset(data.X - x_mean, data.F - f_mean, data.y)
    family = NormalFamily()

    params, padded = initialize(centred)
    objective = log_likelihood(params, centred, family)
    trace = [objective]
    regularized = []
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        betas = list(params.betas)
        for j in range(params.order):
            betas[j] = beta_update(j, params.replace(betas=betas), centred)
        params = params.replace(betas=betas)
        if config.omega_step == "mle":
            params, flags = omega_update_mle(params, centred, config.cond_threshold,
                                             config.reg_coeff)
        else:
            omegas, flags = omega_update(params, centred, config.cond_threshold,
                                         config.reg_coeff, return_flags=True)
            params = params.replace(omegas=omegas)
        regularized.append(flags)
        new = log_likelihood(params, centred, family)
        if not np.isfinite(new):
            raise DegenerateFitError(f"non-finite log-likelihood at sweep {it}")
        trace.append(new)
        change = abs(new - objective) / max(1.0, abs(objective))
        objective = new
        log.debug("sweep %d: log-likelihood %.10g (change %.3g)", it, new, change)
        if change < config.rel_tol:
            converged = True
            break

    params = normalize(params)
    eta_bar = (mlm_batch(x_mean[None], params.omegas)[0]
               - mlm_batch(f_mean[None], params.betas)[0])
    return FitResult(
        params=params.replace(eta_bar=eta_bar), iterations=it, trace=trace,
        converged=converged, x_mean=x_mean, f_mean=f_mean,
        diagnostics={"padded_modes": padded, "regularized": regularized})
