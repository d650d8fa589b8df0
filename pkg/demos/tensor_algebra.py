"""Walk through the tensor helpers on a small 3 x 4 x 2 tensor.

    python demos/tensor_algebra.py
"""
import numpy as np

from gmlm.matrices import duplication_matrix, s_pq_permutation
from gmlm.tensor import kron_reversed, multi_linear_multiply, outer, unfold, vec, vech


def main():
    t = np.arange(1, 25, dtype=float).reshape(3, 4, 2, order="F")
    print("vec(t):", vec(t).astype(int))
    for mode in range(3):
        print(f"unfolding along mode {mode}:\n{unfold(t, mode).astype(int)}")

    # multiplying every mode is a Kronecker product acting on vec
    rng = np.random.default_rng(0)
    mats = [rng.normal(size=(2, d)) for d in t.shape]
    lhs = vec(multi_linear_multiply(t, mats))
    rhs = kron_reversed(mats) @ vec(t)
    print("multi-linear product vs Kronecker form, max diff:", np.abs(lhs - rhs).max())

    a = np.array([[2.0, 1.0], [1.0, 3.0]])
    print("vech(a):", vech(a), " D_2 vech(a) == vec(a):", np.array_equal(duplication_matrix(2) @ vech(a), vec(a)))

    a1, a2 = rng.normal(size=(2, 3)), rng.normal(size=(3, 2))
    s = s_pq_permutation([2, 3], [3, 2])
    print("Kronecker entries are a permutation of outer-product entries:",
          np.allclose(s @ vec(outer(a1, a2)), vec(np.kron(a2, a1))))


if __name__ == "__main__":
    main()
