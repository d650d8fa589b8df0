import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmlm.tensor import (frob_norm, inner, kron, kron_reversed, mlm_batch, mode_product,
                         multi_linear_multiply, outer, refold, rowdot, unfold, unfold_batch,
                         unvec, unvech, vec, vech)

A3 = np.arange(1, 10, dtype=float).reshape(3, 3, order="F")
T333 = np.arange(1, 28, dtype=float).reshape(3, 3, 3, order="F")
T342 = np.arange(1, 25, dtype=float).reshape(3, 4, 2, order="F")

UNFOLD_0 = np.array([[1, 4, 7, 10, 13, 16, 19, 22],
                     [2, 5, 8, 11, 14, 17, 20, 23],
                     [3, 6, 9, 12, 15, 18, 21, 24]], dtype=float)
UNFOLD_1 = np.array([[1, 2, 3, 13, 14, 15],
                     [4, 5, 6, 16, 17, 18],
                     [7, 8, 9, 19, 20, 21],
                     [10, 11, 12, 22, 23, 24]], dtype=float)
UNFOLD_2 = np.array([np.arange(1, 13), np.arange(13, 25)], dtype=float)


def unfold_by_index_formula(t, mode):
    # column j = sum_{l != mode} i_l prod_{m < l, m != mode} p_m (zero-based)
    dims = t.shape
    others = [l for l in range(t.ndim) if l != mode]
    out = np.zeros((dims[mode], int(np.prod([dims[l] for l in others]))))
    for idx in itertools.product(*[range(d) for d in dims]):
        col, stride = 0, 1
        for l in others:
            col += idx[l] * stride
            stride *= dims[l]
        out[idx[mode], col] = t[idx]
    return out


def mode_product_elementwise(t, mode, m):
    out_dims = list(t.shape)
    out_dims[mode] = m.shape[0]
    out = np.zeros(out_dims)
    for idx in itertools.product(*[range(d) for d in out_dims]):
        total = 0.0
        for j in range(t.shape[mode]):
            src = list(idx)
            src[mode] = j
            total += m[idx[mode], j] * t[tuple(src)]
        out[idx] = total
    return out


class TestVec:
    def test_matrix_stacks_columns(self):
        assert vec(A3).tolist() == list(range(1, 10))

    def test_three_way_tensor(self):
        assert vec(T333).tolist() == list(range(1, 28))
        assert T333[:, :, 1].tolist() == [[10, 13, 16], [11, 14, 17], [12, 15, 18]]

    def test_scalar(self):
        assert vec(np.array([5.0])).tolist() == [5.0]

    def test_unvec_roundtrip_and_error(self):
        assert np.array_equal(unvec(vec(T342), (3, 4, 2)), T342)
        with pytest.raises(ValueError):
            unvec(np.arange(5), (2, 3))


class TestVech:
    def test_lower_triangle_by_columns(self):
        assert vech(A3).tolist() == [1, 2, 3, 5, 6, 9]

    def test_identity(self):
        assert vech(np.eye(2)).tolist() == [1, 0, 1]

    def test_non_square(self):
        with pytest.raises(ValueError):
            vech(np.zeros((2, 3)))

    def test_unvech_symmetric(self):
        m = unvech([1, 2, 3, 5, 6, 9])
        assert np.array_equal(m, m.T)
        assert np.array_equal(vech(m), [1, 2, 3, 5, 6, 9])
        with pytest.raises(ValueError):
            unvech(np.arange(4))


class TestUnfold:
    @pytest.mark.parametrize("mode,expected", [(0, UNFOLD_0), (1, UNFOLD_1), (2, UNFOLD_2)])
    def test_worked_example(self, mode, expected):
        assert np.array_equal(unfold(T342, mode), expected)

    def test_matrix_mode_zero_is_itself(self):
        m = np.random.default_rng(0).normal(size=(3, 5))
        assert np.array_equal(unfold(m, 0), m)

    def test_mode_out_of_range(self):
        with pytest.raises(ValueError):
            unfold(T342, 3)

    @pytest.mark.parametrize("dims", [(2, 3), (2, 3, 4), (3, 1, 2, 2)])
    def test_index_formula_exhaustive(self, dims):
        t = np.random.default_rng(1).normal(size=dims)
        for mode in range(len(dims)):
            assert np.array_equal(unfold(t, mode), unfold_by_index_formula(t, mode))

    def test_refold_worked_example(self):
        assert np.array_equal(refold(unfold(T342, 1), 1, (3, 4, 2)), T342)

    def test_refold_one_by_one(self):
        t = np.array([[7.0]])
        assert np.array_equal(refold(unfold(t, 1), 1, (1, 1)), t)

    def test_refold_shape_error(self):
        with pytest.raises(ValueError):
            refold(np.zeros((3, 7)), 0, (3, 4, 2))

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(1, 4), min_size=1, max_size=4), st.data())
    def test_refold_roundtrip_property(self, dims, data):
        mode = data.draw(st.integers(0, len(dims) - 1))
        t = np.random.default_rng(sum(dims)).normal(size=dims)
        assert np.array_equal(refold(unfold(t, mode), mode, dims), t)

    def test_unfold_batch_matches_slices(self):
        x = np.random.default_rng(2).normal(size=(4, 2, 3, 5))
        for mode in range(3):
            got = unfold_batch(x, mode)
            for i in range(4):
                assert np.array_equal(got[i], unfold(x[i], mode))


class TestModeProduct:
    def test_matrix_relations(self):
        rng = np.random.default_rng(3)
        a, b, c = rng.normal(size=(3, 4)), rng.normal(size=(5, 3)), rng.normal(size=(2, 4))
        assert np.allclose(mode_product(a, 0, b), b @ a)
        assert np.allclose(mode_product(a, 1, c), a @ c.T)

    def test_identity(self):
        t = np.random.default_rng(4).normal(size=(2, 3, 4))
        assert np.allclose(mode_product(t, 1, np.eye(3)), t)

    def test_elementwise_definition(self):
        rng = np.random.default_rng(5)
        t = rng.normal(size=(2, 3, 4))
        for mode in range(3):
            m = rng.normal(size=(3, t.shape[mode]))
            assert np.allclose(mode_product(t, mode, m), mode_product_elementwise(t, mode, m))

    def test_unfold_identity(self):
        rng = np.random.default_rng(6)
        t, m = rng.normal(size=(2, 3, 4)), rng.normal(size=(5, 3))
        assert np.allclose(unfold(mode_product(t, 1, m), 1), m @ unfold(t, 1))

    def test_mismatch(self):
        with pytest.raises(ValueError):
            mode_product(np.zeros((2, 3)), 0, np.zeros((2, 3)))

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(1, 3), min_size=2, max_size=4), st.data())
    def test_distinct_modes_commute(self, dims, data):
        j = data.draw(st.integers(0, len(dims) - 1))
        k = data.draw(st.integers(0, len(dims) - 1).filter(lambda v: v != j))
        rng = np.random.default_rng(len(dims) * 10 + j)
        t = rng.normal(size=dims)
        a, b = rng.normal(size=(2, dims[j])), rng.normal(size=(3, dims[k]))
        left = mode_product(mode_product(t, j, a), k, b)
        right = mode_product(mode_product(t, k, b), j, a)
        assert np.allclose(left, right)


class TestMultiLinear:
    def test_two_modes_on_matrix(self):
        rng = np.random.default_rng(7)
        a, b1, b2 = rng.normal(size=(3, 4)), rng.normal(size=(2, 3)), rng.normal(size=(5, 4))
        assert np.allclose(multi_linear_multiply(a, {0: b1, 1: b2}), b1 @ a @ b2.T)
        assert np.allclose(multi_linear_multiply(a, [b1, b2]), b1 @ a @ b2.T)

    def test_empty(self):
        t = np.random.default_rng(8).normal(size=(2, 3))
        assert np.array_equal(multi_linear_multiply(t, {}), t)
        assert np.array_equal(multi_linear_multiply(t, [None, None]), t)

    def test_order_five_commutation(self):
        rng = np.random.default_rng(9)
        t = rng.normal(size=(2, 2, 3, 2, 3))
        b2, b5 = rng.normal(size=(4, 2)), rng.normal(size=(2, 3))
        joint = multi_linear_multiply(t, {1: b2, 4: b5})
        assert np.allclose(joint, mode_product(mode_product(t, 1, b2), 4, b5))
        assert np.allclose(joint, mode_product(mode_product(t, 4, b5), 1, b2))

    def test_vec_is_reversed_kronecker(self):
        rng = np.random.default_rng(10)
        t = rng.normal(size=(2, 3, 4))
        bs = [rng.normal(size=(q, p)) for q, p in [(3, 2), (2, 3), (5, 4)]]
        assert np.allclose(vec(multi_linear_multiply(t, bs)), kron_reversed(bs) @ vec(t))

    def test_mismatch_on_any_mode(self):
        with pytest.raises(ValueError):
            multi_linear_multiply(np.zeros((2, 3)), {1: np.zeros((2, 2))})

    def test_batch(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(5, 2, 3))
        bs = [rng.normal(size=(4, 2)), None]
        got = mlm_batch(x, bs)
        for i in range(5):
            assert np.allclose(got[i], multi_linear_multiply(x[i], bs))


class TestProducts:
    def test_inner_sum_of_squares(self):
        t = np.random.default_rng(12).normal(size=(2, 3, 2))
        assert np.isclose(inner(t, t), np.sum(t ** 2))
        assert np.isclose(frob_norm(t), np.sqrt(np.sum(t ** 2)))

    def test_inner_symmetric(self):
        rng = np.random.default_rng(13)
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
        assert inner(a, b) == inner(b, a)

    def test_inner_transfer(self):
        rng = np.random.default_rng(14)
        a, b, c = rng.normal(size=(3, 4)), rng.normal(size=(3, 3)), rng.normal(size=(4, 4))
        assert np.isclose(inner(a, b @ a @ c.T), inner(b.T @ a @ c, a))

    def test_inner_size_mismatch(self):
        with pytest.raises(ValueError):
            inner(np.zeros(3), np.zeros(4))

    def test_rowdot(self):
        rng = np.random.default_rng(15)
        a, b = rng.normal(size=(4, 2, 3)), rng.normal(size=(4, 2, 3))
        assert np.allclose(rowdot(a, b), [inner(a[i], b[i]) for i in range(4)])

    def test_outer_vec_identity(self):
        rng = np.random.default_rng(16)
        a, b = rng.normal(size=(2, 3)), rng.normal(size=(4,))
        assert np.allclose(vec(outer(a, b)), vec(np.outer(vec(a), vec(b))))

    def test_kron_block_diagonal(self):
        m = np.random.default_rng(17).normal(size=(2, 3))
        k = kron(np.eye(2), m)
        assert np.array_equal(k[:2, :3], m) and np.array_equal(k[2:, 3:], m)
        assert not np.any(k[:2, 3:]) and not np.any(k[2:, :3])

    def test_kron_from_rearranged_outer(self):
        # A (x) B is a reshuffle of the 4-way outer product B o A
        rng = np.random.default_rng(18)
        a, b = rng.normal(size=(2, 3)), rng.normal(size=(4, 5))
        o = outer(b, a)  # (pb, qb, pa, qa)
        rearranged = o.transpose(2, 0, 3, 1).reshape(8, 15)
        assert np.allclose(rearranged, np.kron(a, b))
