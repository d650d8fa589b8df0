"""Family-agnostic generalized multi-linear model layer.

Observations are stacked along axis 0: predictors ``X`` have shape
``(n, p_1, ..., p_r)`` and design tensors ``F`` have shape
``(n, q_1, ..., q_r)``. Parameters are kept in factor form; the Kronecker
products ``B = beta_r (x) ... (x) beta_1`` and
``Omega = Omega_r (x) ... (x) Omega_1`` are formed only on demand.
"""
from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .tensor import kron_reversed, mlm_batch, rowdot, unfold_batch, vec


class DegenerateFitError(RuntimeError):
    """The data or the current iterate make a fitting step ill-defined."""


class LogPartitionUnavailable(RuntimeError):
    """The family cannot evaluate its log-partition function at this size."""


@dataclass(frozen=True)
class GmlmParams:
    """Constrained GMLM parameters ``(eta_bar, beta_1..beta_r, Omega_1..Omega_r)``."""

    eta_bar: np.ndarray
    betas: tuple
    omegas: tuple

    def __post_init__(self):
        betas = tuple(np.atleast_2d(np.asarray(b, dtype=float)) for b in self.betas)
        omegas = tuple(np.atleast_2d(np.asarray(o, dtype=float)) for o in self.omegas)
        eta_bar = np.asarray(self.eta_bar, dtype=float)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "omegas", omegas)
        if len(betas) == 0 or len(betas) != len(omegas):
            raise ValueError("need the same positive number of beta and Omega factors")
        dims = tuple(b.shape[0] for b in betas)
        if eta_bar.shape != dims:
            eta_bar = eta_bar.reshape(dims) if eta_bar.size == np.prod(dims) else None
            if eta_bar is None:
                raise ValueError(f"eta_bar shape does not match predictor dims {dims}")
        object.__setattr__(self, "eta_bar", eta_bar)
        for k, (b, o) in enumerate(zip(betas, omegas)):
            if o.shape != (b.shape[0], b.shape[0]):
                raise ValueError(f"Omega_{k} has shape {o.shape}, expected {(b.shape[0],) * 2}")
            scale = max(1.0, float(np.abs(o).max()))
            if np.abs(o - o.T).max() > 1e-10 * scale:
                raise ValueError(f"Omega_{k} is not symmetric")

    @classmethod
    def zeros(cls, dims, ranks):
        return cls(np.zeros(tuple(dims)), [np.zeros((p, q)) for p, q in zip(dims, ranks)],
                   [np.zeros((p, p)) for p in dims])

    @property
    def order(self) -> int:
        return len(self.betas)

    @property
    def dims(self) -> tuple:
        return tuple(b.shape[0] for b in self.betas)

    @property
    def ranks(self) -> tuple:
        return tuple(b.shape[1] for b in self.betas)

    @property
    def B(self) -> np.ndarray:
        return kron_reversed(self.betas)

    @property
    def Omega(self) -> np.ndarray:
        return kron_reversed(self.omegas)

    def replace(self, eta_bar=None, betas=None, omegas=None) -> "GmlmParams":
        return GmlmParams(self.eta_bar if eta_bar is None else eta_bar,
                          self.betas if betas is None else betas,
                          self.omegas if omegas is None else omegas)


@dataclass(frozen=True)
class Dataset:
    """``n`` paired observations of predictor tensors and design tensors."""

    X: np.ndarray
    F: np.ndarray
    y: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        F = np.asarray(self.F, dtype=float)
        if X.ndim < 2 or F.ndim < 2:
            raise ValueError("X and F need a leading observation axis")
        if X.shape[0] != F.shape[0] or X.shape[0] < 1:
            raise ValueError(f"X has {X.shape[0]} observations but F has {F.shape[0]}")
        if X.ndim != F.ndim:
            raise ValueError(f"X is of order {X.ndim - 1} but F of order {F.ndim - 1}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "F", F)
        if self.y is not None:
            object.__setattr__(self, "y", np.asarray(self.y, dtype=float))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dims(self) -> tuple:
        return self.X.shape[1:]

    @property
    def design_dims(self) -> tuple:
        return self.F.shape[1:]

    @property
    def order(self) -> int:
        return self.X.ndim - 1

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.F[idx], None if self.y is None else self.y[idx])


@dataclass
class FitResult:
    params: GmlmParams
    iterations: int
    trace: list
    converged: bool
    x_mean: Optional[np.ndarray] = None
    f_mean: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)


@dataclass
class Gradients:
    """Partial gradients of the log-likelihood in factor coordinates."""

    eta_bar: np.ndarray
    betas: list
    omegas: list

    def flat(self) -> np.ndarray:
        return np.concatenate([vec(self.eta_bar)] + [vec(b) for b in self.betas]
                              + [vec(o) for o in self.omegas])

    def norms(self) -> dict:
        return {"eta_bar": float(np.linalg.norm(self.eta_bar)),
                "betas": [float(np.linalg.norm(b)) for b in self.betas],
                "omegas": [float(np.linalg.norm(o)) for o in self.omegas]}


class ExponentialFamily:
    """Behavioural contract of a quadratic exponential family member.

    Subclasses set the scaling constant ``c`` and provide the inverse link
    through :meth:`moments` and the log-partition function through
    :meth:`log_partition`. The second natural parameter is fixed to the
    identity statistic, so the second-moment tensor of the gradients is the
    plain conditional second moment.
    """

    c: float = 1.0

    def log_partition(self, eta1, omegas) -> np.ndarray:
        """``b(eta_y)`` for every row of the ``(n, p_1, ..., p_r)`` array `eta1`."""
        raise NotImplementedError

    def moments(self, eta1, omegas) -> "Moments":
        raise NotImplementedError


class Moments:
    """Conditional moments at ``n`` natural parameters.

    ``g1`` is the ``(n, p_1, ..., p_r)`` stack of first moments.
    :meth:`contract_g2` returns the mean over observations of the second
    moment contracted against ``vec(Omega_k)`` for every mode except `mode`.
    """

    g1: np.ndarray

    def contract_g2(self, mode, omegas) -> np.ndarray:
        raise NotImplementedError


def contract_second_moment(m, dims, omegas, mode):
    """Contract a ``p x p`` second moment over all modes except `mode`.

    Entry ``(a, b)`` of the result is ``sum m[i, i'] prod_{k != mode}
    Omega_k[i_k, i'_k]`` over multi-indices ``i, i'`` with ``i_mode = a``
    and ``i'_mode = b``.
    """
    r = len(dims)
    t = np.asarray(m).reshape(tuple(dims) * 2, order="F")
    letters = string.ascii_letters
    left, right = letters[:r], letters[r:2 * r]
    operands, specs = [t], [left + right]
    for k in range(r):
        if k != mode:
            operands.append(omegas[k])
            specs.append(left[k] + right[k])
    expr = ",".join(specs) + "->" + left[mode] + right[mode]
    return np.einsum(expr, *operands, optimize=True)


def natural_param_eta1(params: GmlmParams, f):
    """``eta_bar + f x_k beta_k``.

    `f` is a single design tensor of dims ``ranks`` or a stack of them with a
    leading observation axis.
    """
    f = np.asarray(f, dtype=float)
    if f.shape == params.ranks:
        return natural_param_eta1(params, f[None])[0]
    if f.shape[1:] != params.ranks:
        raise ValueError(f"design tensor dims {f.shape[1:]} do not match ranks {params.ranks}")
    return params.eta_bar + mlm_batch(f, params.betas)


def sufficient_reduction(params: GmlmParams, x, mean_x):
    """Reduction ``(x - mean_x) x_k beta_k^T`` for one tensor or a stack."""
    x = np.asarray(x, dtype=float)
    mean_x = np.asarray(mean_x, dtype=float)
    if mean_x.shape != params.dims:
        raise ValueError(f"mean has dims {mean_x.shape}, expected {params.dims}")
    if x.shape == params.dims:
        return sufficient_reduction(params, x[None], mean_x)[0]
    if x.shape[1:] != params.dims:
        raise ValueError(f"predictor dims {x.shape[1:]} do not match {params.dims}")
    return mlm_batch(x - mean_x, [b.T for b in params.betas])


def _check_data(params, data):
    if data.dims != params.dims or data.design_dims != params.ranks:
        raise ValueError(
            f"data of dims {data.dims} / design {data.design_dims} does not match "
            f"parameters of dims {params.dims} / ranks {params.ranks}")


def quadratic_term(x, omegas):
    """``<x_i x_k Omega_k, x_i>`` for every observation."""
    xo = mlm_batch(x, omegas)
    return rowdot(xo, x)


def log_likelihood(params: GmlmParams, data: Dataset, family: ExponentialFamily) -> float:
    """Empirical log-likelihood up to parameter-free terms."""
    _check_data(params, data)
    eta1 = natural_param_eta1(params, data.F)
    linear = rowdot(eta1, data.X)
    quad = family.c * quadratic_term(data.X, params.omegas)
    b = family.log_partition(eta1, params.omegas)
    return float(np.mean(linear + quad - b))


def gradients(params: GmlmParams, data: Dataset, family: ExponentialFamily,
              moments: Optional[Moments] = None) -> Gradients:
    """Analytic partial gradients of :func:`log_likelihood`.

    `moments` may be supplied to reuse an inverse-link evaluation (or a
    Monte-Carlo estimate of it).
    """
    _check_data(params, data)
    n, r = data.n, params.order
    if moments is None:
        eta1 = natural_param_eta1(params, data.F)
        moments = family.moments(eta1, params.omegas)
    resid = data.X - moments.g1
    d_eta = resid.mean(axis=0)

    d_betas = []
    for j in range(r):
        others = [None if k == j else params.betas[k] for k in range(r)]
        fb = mlm_batch(data.F, others)
        d_betas.append(np.einsum("iab,icb->ac", unfold_batch(resid, j), unfold_batch(fb, j)) / n)

    d_omegas = []
    for j in range(r):
        others = [None if k == j else params.omegas[k] for k in range(r)]
        xo = mlm_batch(data.X, others)
        data_term = np.einsum("iab,icb->ac", unfold_batch(data.X, j), unfold_batch(xo, j)) / n
        d = family.c * (data_term - moments.contract_g2(j, params.omegas))
        d_omegas.append((d + d.T) / 2)
    return Gradients(d_eta, d_betas, d_omegas)


def _sign_scale(m):
    flat = m.reshape(-1, order="F")
    norm = np.linalg.norm(flat)
    if norm == 0:
        raise ValueError("cannot normalize a zero factor")
    return norm * np.sign(flat[np.argmax(np.abs(flat))])


def _normalize_factors(factors):
    factors = [np.array(f, dtype=float) for f in factors]
    carry = 1.0
    for k in range(1, len(factors)):
        s = _sign_scale(factors[k])
        factors[k] = factors[k] / s
        carry *= s
    if not np.any(factors[0]):
        raise ValueError("cannot normalize a zero factor")
    factors[0] = factors[0] * carry
    return factors


def normalize(params: GmlmParams) -> GmlmParams:
    """Fix the Kronecker scale ambiguity.

    Factors ``2..r`` of both ``beta`` and ``Omega`` get unit Frobenius norm
    with their largest-magnitude entry positive; the first factor absorbs the
    scale and sign so the Kronecker products are unchanged.
    """
    return params.replace(betas=_normalize_factors(params.betas),
                          omegas=[(o + o.T) / 2 for o in _normalize_factors(params.omegas)])


# Design tensors F_y.

def scalar_design(y, order=1):
    """``F_y = y`` as a ``1 x ... x 1`` tensor of the given order."""
    y = np.asarray(y, dtype=float).reshape(-1)
    return y.reshape((-1,) + (1,) * order)


def monomial_design(y, dims: Sequence[int]):
    """``(F_y)_{i_1..i_r} = y^(i_1 + ... + i_r - r)`` (one-based indices)."""
    y = np.asarray(y, dtype=float).reshape(-1)
    powers = sum(np.meshgrid(*[np.arange(d) for d in dims], indexing="ij"))
    return y.reshape((-1,) + (1,) * len(dims)) ** powers[None]


def trig_design(y):
    """``[[sin(pi y), -cos(pi y)], [cos(pi y), sin(pi y)]]`` for each ``y``."""
    y = np.asarray(y, dtype=float).reshape(-1)
    s, c = np.sin(np.pi * y), np.cos(np.pi * y)
    return np.stack([np.stack([s, -c], axis=-1), np.stack([c, s], axis=-1)], axis=1)
