import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oirssim.errors import DimensionError, NumericError
from oirssim.linalg import (blkdiag_columns, hadamard, kron, matmul, numerical_rank, solve_spd,
                            transpose, vec)

finite = st.floats(-10, 10, allow_nan=False, allow_subnormal=False)


def mats(shape):
    return arrays(np.float64, shape, elements=finite)


def test_kron_identity_is_block_diagonal():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    K = kron(np.eye(2), A)
    np.testing.assert_array_equal(K[:2, :2], A)
    np.testing.assert_array_equal(K[2:, 2:], A)
    np.testing.assert_array_equal(K[:2, 2:], 0)


def test_vec_stacks_columns():
    np.testing.assert_array_equal(vec([[1, 2], [3, 4]]).ravel(), [1, 3, 2, 4])


def test_vec_kron_identity_random():
    rng = np.random.default_rng(0)
    A, B, C = (rng.normal(size=(3, 3)) for _ in range(3))
    np.testing.assert_allclose(vec(A @ B @ C), kron(C.T, A) @ vec(B), atol=1e-10)


@given(mats((2, 3)), mats((2, 2)), mats((3, 2)), mats((2, 3)))
def test_kron_mixed_product(A, B, C, D):
    lhs = kron(A, B) @ kron(C, D)
    rhs = kron(A @ C, B @ D)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * (1 + np.abs(rhs).max()))


@given(mats((3, 4)), mats((3, 4)), mats((3, 4)))
def test_hadamard_commutative_associative(A, B, C):
    np.testing.assert_array_equal(hadamard(A, B), hadamard(B, A))
    # products of tiny normals can still underflow, hence the absolute floor
    np.testing.assert_allclose(hadamard(hadamard(A, B), C), hadamard(A, hadamard(B, C)),
                               rtol=1e-15, atol=1e-300)


@given(mats((3, 2)), mats((3, 2)), finite)
def test_vec_is_linear(A, B, a):
    np.testing.assert_allclose(vec(a * A + B), a * vec(A) + vec(B), atol=1e-12)


def test_blkdiag_columns_examples():
    E = blkdiag_columns(np.eye(2))
    assert E.shape == (4, 2)
    assert E[0, 0] == 1 and E[3, 1] == 1 and E.sum() == 2
    v = np.array([[1.0], [2.0], [3.0]])
    np.testing.assert_array_equal(blkdiag_columns(v), v)


def test_blkdiag_columns_dot_products():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(3, 2))
    M = rng.normal(size=(3, 2))
    got = blkdiag_columns(A).T @ vec(M)
    expected = [sum(A[i, k] * M[i, k] for i in range(3)) for k in range(2)]
    np.testing.assert_allclose(got.ravel(), expected, atol=1e-12)


def test_solve_spd_examples():
    B = np.array([[1.0], [2.0]])
    np.testing.assert_array_equal(solve_spd(np.eye(2), B), B)
    np.testing.assert_allclose(solve_spd(np.diag([2.0, 4.0]), [2.0, 4.0]).ravel(), [1.0, 1.0])


def test_solve_spd_random_residual():
    rng = np.random.default_rng(2)
    M = rng.normal(size=(6, 6))
    A = M.T @ M + np.eye(6)
    B = rng.normal(size=(6, 3))
    X = solve_spd(A, B)
    assert np.linalg.norm(A @ X - B) < 1e-10 * np.linalg.norm(B)


def test_solve_spd_errors():
    with pytest.raises(NumericError):
        solve_spd([[1.0, 0.0], [0.0, -1.0]], [1.0, 1.0])
    with pytest.raises(NumericError):
        solve_spd([[1.0, 2.0], [0.0, 1.0]], [1.0, 1.0])
    with pytest.raises(DimensionError):
        solve_spd(np.eye(2), np.ones(3))


def test_shape_checks():
    with pytest.raises(DimensionError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(DimensionError):
        hadamard(np.ones((2, 3)), np.ones((3, 2)))
    with pytest.raises(DimensionError):
        vec(np.array([[np.nan]]))
    np.testing.assert_array_equal(transpose([[1, 2]]), [[1], [2]])


@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 10), st.integers(0, 2 ** 32 - 1))
def test_rank_bound_of_stacked_pilot_system(n_t, n_r, extra, seed):
    # (X^T kron I) blkdiag(V)^T has rank at most N_t N_r for any alignment V
    rng = np.random.default_rng(seed)
    P = n_t + extra
    N = 5
    X = rng.uniform(0, 1, size=(n_t, P))
    V = rng.integers(0, 2, size=(N, n_t * n_r)).astype(float)
    M = kron(X.T, np.eye(n_r)) @ blkdiag_columns(V).T
    assert numerical_rank(M) <= n_t * n_r
