"""Dense real-matrix helpers used by the estimation equations.

Matrices are 2-D ``numpy`` float arrays. The wrappers add shape checks that
raise :class:`DimensionError` and reject non-finite input, so that errors
surface where the estimator builds its systems rather than deep inside BLAS.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DimensionError, NumericError


def as_matrix(A) -> np.ndarray:
    """Return ``A`` as a finite 2-D float array (vectors become columns)."""
    M = np.asarray(A, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise DimensionError(f"expected a matrix, got {M.ndim}-d array")
    if not np.all(np.isfinite(M)):
        raise DimensionError("matrix entries must be finite")
    return M


def matmul(A, B) -> np.ndarray:
    A, B = as_matrix(A), as_matrix(B)
    if A.shape[1] != B.shape[0]:
        raise DimensionError(f"matmul: {A.shape} @ {B.shape}")
    return A @ B


def transpose(A) -> np.ndarray:
    return as_matrix(A).T.copy()


def hadamard(A, B) -> np.ndarray:
    A, B = as_matrix(A), as_matrix(B)
    if A.shape != B.shape:
        raise DimensionError(f"hadamard: {A.shape} vs {B.shape}")
    return A * B


def kron(A, B) -> np.ndarray:
    return np.kron(as_matrix(A), as_matrix(B))


def vec(A) -> np.ndarray:
    """Stack the columns of ``A`` into one column."""
    return as_matrix(A).reshape(-1, 1, order="F")


def blkdiag_columns(A) -> np.ndarray:
    """Block-diagonal ``(N*K, K)`` matrix whose i-th block is column i of ``A``."""
    A = as_matrix(A)
    n, k = A.shape
    out = np.zeros((n * k, k))
    for i in range(k):
        out[i * n:(i + 1) * n, i] = A[:, i]
    return out


def solve_spd(A, B) -> np.ndarray:
    """Solve ``A X = B`` for symmetric positive definite ``A`` via Cholesky.

    Raises
    ------
    NumericError
        If the factorization fails, i.e. ``A`` is not numerically SPD.
    """
    A, B = as_matrix(A), as_matrix(B)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"solve_spd: A must be square, got {A.shape}")
    if A.shape[0] != B.shape[0]:
        raise DimensionError(f"solve_spd: {A.shape} vs {B.shape}")
    if not np.allclose(A, A.T, rtol=1e-12, atol=1e-14 * np.abs(A).max(initial=0.0)):
        raise NumericError("matrix is not symmetric")
    try:
        c = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError("matrix is not positive definite") from exc
    d = np.abs(np.diag(c[0]))
    if d.size and d.min() <= np.sqrt(A.shape[0] * np.finfo(float).eps) * d.max():
        raise NumericError("matrix is numerically singular")
    return scipy.linalg.cho_solve(c, B, check_finite=False)


def numerical_rank(A, rtol: float = 1e-10) -> int:
    """Rank from singular values above ``rtol * s_max``."""
    s = np.linalg.svd(as_matrix(A), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))
