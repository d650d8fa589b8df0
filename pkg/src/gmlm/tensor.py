"""Dense tensor algebra on numpy arrays.

Tensors are plain ``ndarray`` objects. The vectorization convention is
first-index-fastest (Fortran order), so ``vec`` of a matrix stacks its
columns and ``vec`` of a 3-tensor stacks the vectorized frontal slices.
Modes are zero-based: ``unfold(t, 0)`` is the mode-1 matricization in the
usual mathematical numbering.
"""
from __future__ import annotations

from functools import reduce
from typing import Mapping, Sequence, Union

import numpy as np

Factors = Union[Mapping[int, np.ndarray], Sequence[Union[np.ndarray, None]]]


def vec(t):
    """Vectorize `t` with the first index varying fastest."""
    return np.asarray(t, dtype=float).reshape(-1, order="F")


def unvec(v, dims):
    """Inverse of :func:`vec`."""
    v = np.asarray(v, dtype=float)
    if v.size != int(np.prod(dims)):
        raise ValueError(f"cannot reshape {v.size} values into dims {tuple(dims)}")
    return v.reshape(tuple(dims), order="F")


def vech(m):
    """Half vectorization: the on-and-below-diagonal entries, column by column."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"vech needs a square matrix, got shape {m.shape}")
    cols, rows = np.triu_indices(m.shape[0])
    return m[rows, cols]


def unvech(v):
    """Symmetric matrix whose half vectorization is `v`."""
    v = np.asarray(v, dtype=float)
    p = int(round((np.sqrt(8 * v.size + 1) - 1) / 2))
    if p * (p + 1) // 2 != v.size:
        raise ValueError(f"{v.size} is not a triangular number")
    out = np.zeros((p, p))
    cols, rows = np.triu_indices(p)
    out[rows, cols] = v
    out[cols, rows] = v
    return out


def _check_mode(t, mode):
    if not 0 <= mode < t.ndim:
        raise ValueError(f"mode {mode} out of range for a tensor of order {t.ndim}")


def unfold(t, mode):
    """Mode-`mode` matricization.

    Returns the ``dims[mode] x prod(other dims)`` matrix whose column index
    runs over the remaining modes with the lowest mode fastest.
    """
    t = np.asarray(t, dtype=float)
    _check_mode(t, mode)
    return np.moveaxis(t, mode, 0).reshape(t.shape[mode], -1, order="F")


def refold(m, mode, dims):
    """Inverse of :func:`unfold`."""
    m = np.asarray(m, dtype=float)
    dims = tuple(int(d) for d in dims)
    if not 0 <= mode < len(dims):
        raise ValueError(f"mode {mode} out of range for dims {dims}")
    rest = dims[:mode] + dims[mode + 1:]
    if m.shape != (dims[mode], int(np.prod(rest))):
        raise ValueError(f"matrix of shape {m.shape} does not unfold dims {dims} on mode {mode}")
    return np.moveaxis(m.reshape((dims[mode],) + rest, order="F"), 0, mode)


def mode_product(t, mode, m):
    """k-mode product ``t x_mode m``.

    The `mode` axis of `t` (length ``m.shape[1]``) is replaced by an axis of
    length ``m.shape[0]``.
    """
    t = np.asarray(t, dtype=float)
    m = np.asarray(m, dtype=float)
    _check_mode(t, mode)
    if m.ndim != 2 or m.shape[1] != t.shape[mode]:
        raise ValueError(
            f"matrix of shape {m.shape} is not conformable with mode {mode} "
            f"of a tensor with dims {t.shape}")
    return np.moveaxis(np.tensordot(m, t, axes=(1, mode)), 0, mode)


def _factor_items(factors):
    if isinstance(factors, Mapping):
        return sorted(factors.items())
    return [(k, f) for k, f in enumerate(factors) if f is not None]


def multi_linear_multiply(t, factors: Factors):
    """Tucker operator: apply a mode product for every given mode.

    `factors` is either a mapping ``mode -> matrix`` or a sequence indexed by
    mode where ``None`` entries are skipped.
    """
    out = np.asarray(t, dtype=float)
    for mode, f in _factor_items(factors):
        out = mode_product(out, mode, f)
    return out


def inner(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.size != b.size:
        raise ValueError(f"inner product of tensors with {a.size} and {b.size} elements")
    return float(vec(a) @ vec(b))


def frob_norm(a):
    return float(np.sqrt(inner(a, a)))


def outer(a, b):
    """Outer product; ``vec(outer(a, b)) == vec(outer(vec(a), vec(b)))``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.multiply.outer(a, b)


def kron(*mats):
    """Kronecker product ``mats[0] (x) mats[1] (x) ...`` in the given order."""
    return reduce(np.kron, [np.atleast_2d(np.asarray(m, dtype=float)) for m in mats])


def kron_reversed(mats):
    """``mats[r-1] (x) ... (x) mats[0]``, the ordering matching `vec`.

    With this ordering ``vec(t x {B_0, ..., B_{r-1}}) ==
    kron_reversed(B) @ vec(t)``.
    """
    return kron(*mats[::-1])


def mlm_batch(x, factors: Factors):
    """Apply :func:`multi_linear_multiply` to each slice ``x[i]``."""
    shifted = {k + 1: f for k, f in _factor_items(factors)}
    return multi_linear_multiply(x, shifted)


def unfold_batch(x, mode):
    """``(n, dims[mode], prod(other dims))`` stack of per-observation unfoldings."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    moved = np.moveaxis(x, mode + 1, 1)
    # Fortran-order reshape of each slice: flip the trailing order explicitly.
    tail = moved.shape[2:]
    flat = moved.transpose((0, 1) + tuple(range(moved.ndim - 1, 1, -1)))
    return flat.reshape(n, x.shape[mode + 1], int(np.prod(tail)))


def rowdot(a, b):
    """Inner products ``<a[i], b[i]>`` of two stacks of equally shaped tensors."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    n = a.shape[0]
    return np.einsum("ij,ij->i", a.reshape(n, -1), b.reshape(n, -1))
