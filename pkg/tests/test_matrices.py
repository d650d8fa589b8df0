import itertools

import numpy as np
import pytest

from gmlm.matrices import (commutation_matrix, duplication_matrix, duplication_pinv, s_pq_permutation,
                           symmetrizer, tangent_span)
from gmlm.tensor import kron_reversed, outer, vec, vech


def sym(rng, p):
    a = rng.normal(size=(p, p))
    return a + a.T


def brute_force_permutation(p, q):
    # entry (i_1, j_1, ..., i_r, j_r) of the outer product sits at Kronecker
    # position (row, col) with row = i_1 + p_1 i_2 + ..., col = j_1 + q_1 j_2 + ...
    r = len(p)
    rows = int(np.prod(p))
    outer_dims = [d for k in range(r) for d in (p[k], q[k])]
    perm = np.zeros(int(np.prod(outer_dims)), dtype=int)
    for idx in itertools.product(*[range(d) for d in outer_dims]):
        i, j = idx[0::2], idx[1::2]
        row = np.ravel_multi_index(i, p, order="F")
        col = np.ravel_multi_index(j, q, order="F")
        perm[row + rows * col] = np.ravel_multi_index(idx, outer_dims, order="F")
    return perm


class TestDuplication:
    def test_p2_rows(self):
        d = duplication_matrix(2).toarray()
        assert d.shape == (4, 3)
        assert d.tolist() == [[1, 0, 0], [0, 1, 0], [0, 1, 0], [0, 0, 1]]

    @pytest.mark.parametrize("p", [1, 2, 3, 5])
    def test_action_on_symmetric(self, p):
        a = sym(np.random.default_rng(p), p)
        assert np.allclose(duplication_matrix(p) @ vech(a), vec(a))

    @pytest.mark.parametrize("p", [1, 3, 4])
    def test_pinv_is_moore_penrose(self, p):
        d = duplication_matrix(p).toarray()
        assert np.allclose(duplication_pinv(p).toarray(), np.linalg.pinv(d))

    def test_symmetrizer(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(4, 4))
        n = symmetrizer(4)
        assert np.allclose(n @ vec(a), vec((a + a.T) / 2))
        s = sym(rng, 4)
        assert np.allclose(n @ vec(s), vec(s))


class TestCommutation:
    def test_action(self):
        a = np.random.default_rng(1).normal(size=(3, 5))
        assert np.allclose(commutation_matrix(3, 5) @ vec(a), vec(a.T))

    def test_inverse(self):
        prod = commutation_matrix(3, 4) @ commutation_matrix(4, 3)
        assert np.array_equal(prod.toarray(), np.eye(12))

    def test_zero_one_entries(self):
        k = commutation_matrix(2, 3).toarray()
        assert set(np.unique(k)) <= {0.0, 1.0}
        assert np.all(k.sum(axis=0) == 1) and np.all(k.sum(axis=1) == 1)


class TestSpq:
    def test_trivial_dims(self):
        assert s_pq_permutation([1, 1], [1, 1]).toarray().tolist() == [[1.0]]

    def test_two_factors(self):
        rng = np.random.default_rng(2)
        a1, a2 = rng.normal(size=(2, 3)), rng.normal(size=(4, 5))
        s = s_pq_permutation([2, 4], [3, 5])
        assert np.array_equal(s @ vec(outer(a1, a2)), vec(np.kron(a2, a1)))

    def test_three_factors_match_index_oracle(self):
        p, q = [2, 3, 2], [1, 2, 3]
        s = s_pq_permutation(p, q).toarray()
        perm = brute_force_permutation(p, q)
        assert np.array_equal(s, np.eye(s.shape[0])[perm])

    def test_permutation_matrix(self):
        s = s_pq_permutation([2, 2, 3], [3, 1, 2]).toarray()
        assert np.all(s.sum(axis=0) == 1) and np.all(s.sum(axis=1) == 1)

    def test_errors(self):
        with pytest.raises(ValueError):
            s_pq_permutation([2, 3], [1])
        with pytest.raises(ValueError):
            s_pq_permutation([2], [3])


class TestTangentSpan:
    def test_scalar_second_factor_spans_first(self):
        a1 = np.random.default_rng(3).normal(size=(2, 3))
        span = tangent_span([a1, np.ones((1, 1))])
        assert np.linalg.matrix_rank(span[:, :6]) == 6

    def test_finite_difference_directions(self):
        rng = np.random.default_rng(4)
        factors = [rng.normal(size=(2, 2)), rng.normal(size=(3, 1)), rng.normal(size=(2, 2))]
        span = tangent_span(factors)
        u, sv, _ = np.linalg.svd(span, full_matrices=False)
        q = u[:, sv > 1e-10 * sv[0]]
        h = 1e-6
        for _ in range(5):
            dirs = [rng.normal(size=f.shape) for f in factors]
            plus = kron_reversed([f + h * d for f, d in zip(factors, dirs)])
            minus = kron_reversed([f - h * d for f, d in zip(factors, dirs)])
            deriv = vec(plus - minus) / (2 * h)
            resid = deriv - q @ (q.T @ deriv)
            assert np.linalg.norm(resid) < 1e-8 * max(1.0, np.linalg.norm(deriv))

    def test_rank_bound(self):
        rng = np.random.default_rng(5)
        factors = [rng.normal(size=(2, 3)), rng.normal(size=(3, 2))]
        assert np.linalg.matrix_rank(tangent_span(factors)) <= 6 + 6

    def test_zero_factor(self):
        with pytest.raises(ValueError):
            tangent_span([np.zeros((2, 2)), np.eye(2)])
