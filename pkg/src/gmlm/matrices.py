"""Structural matrices of vec/vech algebra.

All constructors return ``scipy.sparse.csr_matrix`` objects; call
``.toarray()`` for a dense view. They are 0/1 selection or permutation
matrices except for the symmetrizer, whose off-diagonal action averages.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .tensor import kron_reversed


def _perm_matrix(perm):
    """Sparse permutation matrix ``P`` with ``(P @ v)[i] == v[perm[i]]``."""
    perm = np.asarray(perm, dtype=np.int64)
    n = perm.size
    return sp.csr_matrix((np.ones(n), (np.arange(n), perm)), shape=(n, n))


def commutation_perm(p, q):
    """Index map of ``K_{p,q}``: ``vec(A.T) == vec(A)[commutation_perm(p, q)]``."""
    return np.arange(p * q).reshape(p, q, order="F").reshape(-1)


def commutation_matrix(p, q):
    """``K_{p,q}`` with ``K_{p,q} vec(A) = vec(A.T)`` for ``p x q`` matrices ``A``."""
    return _perm_matrix(commutation_perm(p, q))


def _vech_positions(p):
    # Positions in vec(A) of the entries collected by vech(A).
    cols, rows = np.triu_indices(p)
    return rows + p * cols


def duplication_matrix(p):
    """``D_p`` with ``D_p vech(A) = vec(A)`` for symmetric ``p x p`` ``A``."""
    idx = np.zeros((p, p), dtype=np.int64)
    cols, rows = np.triu_indices(p)
    k = np.arange(rows.size)
    idx[rows, cols] = k
    idx[cols, rows] = k
    target = idx.reshape(-1, order="F")
    return sp.csr_matrix(
        (np.ones(p * p), (np.arange(p * p), target)), shape=(p * p, p * (p + 1) // 2))


def duplication_pinv(p):
    """Moore-Penrose inverse ``D_p^+ = (D_p^T D_p)^{-1} D_p^T``.

    ``D_p^T D_p`` is diagonal with 1 for diagonal and 2 for off-diagonal
    vech positions.
    """
    d = duplication_matrix(p)
    counts = np.asarray(d.sum(axis=0)).ravel()
    return sp.diags(1.0 / counts) @ d.T.tocsr()


def symmetrizer(p):
    """``N_p = D_p D_p^+``; ``N_p vec(A) = vec((A + A.T) / 2)``."""
    return (duplication_matrix(p) @ duplication_pinv(p)).tocsr()


def _identity_kron_perm(left, perm, right):
    # Index map of I_left (x) P (x) I_right for a permutation P given by perm.
    perm = np.asarray(perm, dtype=np.int64)
    m = perm.size
    i = np.arange(left * m * right)
    r, rest = i % right, i // right
    mid, l = rest % m, rest // m
    return r + right * (perm[mid] + m * l)


def kron_outer_perm(p, q):
    """Index map of ``S_{p,q}`` (see :func:`s_pq_permutation`)."""
    p = [int(v) for v in p]
    q = [int(v) for v in q]
    if len(p) != len(q):
        raise ValueError(f"dimension vectors of different length: {p} vs {q}")
    if len(p) < 2:
        raise ValueError("S_{p,q} needs at least two factors")
    if len(p) == 2:
        # I_{q2} (x) K_{q1,p2} (x) I_{p1}
        return _identity_kron_perm(q[1], commutation_perm(q[0], p[1]), p[0])
    head = kron_outer_perm(p[:-1], q[:-1])
    pp, qq = int(np.prod(p[:-1])), int(np.prod(q[:-1]))
    outer_perm = kron_outer_perm([pp, p[-1]], [qq, q[-1]])
    inner_perm = _identity_kron_perm(p[-1] * q[-1], head, 1)
    # S = S_outer (I (x) S_head): (S v)[i] = v[inner[outer[i]]]
    return inner_perm[outer_perm]


def s_pq_permutation(p, q):
    """Permutation ``S_{p,q}`` linking Kronecker and outer products.

    For matrices ``A_k`` of shape ``p[k] x q[k]``::

        vec(A_{r-1} (x) ... (x) A_0) == S_{p,q} @ vec(A_0 o ... o A_{r-1})

    Built recursively from the two-factor case
    ``I_{q_2} (x) K_{q_1,p_2} (x) I_{p_1}``.
    """
    return _perm_matrix(kron_outer_perm(p, q))


def tangent_span(factors):
    """Matrix whose columns span the differential of ``vec(kron_reversed(factors))``.

    Returns ``S_{p,q} [Gamma_1, ..., Gamma_r]`` with
    ``Gamma_j = vec(A_r) (x) ... (x) I_{p_j q_j} (x) ... (x) vec(A_1)``, i.e.
    full Euclidean factor manifolds. A single factor gives the identity.
    """
    factors = [np.atleast_2d(np.asarray(a, dtype=float)) for a in factors]
    for a in factors:
        if not np.any(a):
            raise ValueError("tangent span is undefined at a zero factor")
    if len(factors) == 1:
        return np.eye(factors[0].size)
    vecs = [a.reshape(-1, 1, order="F") for a in factors]
    blocks = []
    for j, a in enumerate(factors):
        parts = list(vecs)
        parts[j] = np.eye(a.size)
        blocks.append(kron_reversed(parts))
    s = s_pq_permutation([a.shape[0] for a in factors], [a.shape[1] for a in factors])
    return np.asarray(s @ np.hstack(blocks))
