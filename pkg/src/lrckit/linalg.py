"""Dense float64 linear-algebra kernels.

Everything in this module is deterministic: fixed sweep orders, no
randomized pivoting, 64-bit accumulation throughout. Matrices are plain
C-contiguous ``numpy.ndarray`` objects with ``dtype=float64``; the
factorization and eigendecomposition results are small dataclasses so
their invariants (packed storage, positive diagonal, descending values)
have a single home.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    NotPositiveDefinite,
    NotSymmetric,
    RankOutOfBounds,
)

Matrix = np.ndarray

SYMMETRY_RTOL = 1e-9
JACOBI_OFF_RTOL = 1e-12
JACOBI_MAX_SWEEPS = 100


def as_matrix(data, rows: int | None = None, cols: int | None = None) -> Matrix:
    """Coerce ``data`` into a finite, row-major float64 matrix.

    This is the single entry point for matrices built from files or
    generators; internal kernel outputs are trusted and not re-checked.
    """
    a = np.ascontiguousarray(data, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d matrix, got ndim={a.ndim}")
    if rows is not None and a.shape[0] != rows:
        raise DimensionMismatch(f"expected {rows} rows, got {a.shape[0]}")
    if cols is not None and a.shape[1] != cols:
        raise DimensionMismatch(f"expected {cols} cols, got {a.shape[1]}")
    if not np.isfinite(a).all():
        raise ValueError("matrix contains non-finite entries")
    return a


def _require_square_symmetric(A: Matrix, what: str) -> Matrix:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"{what} requires a square matrix, got shape {A.shape}")
    norm = float(np.linalg.norm(A))
    skew = float(np.linalg.norm(A - A.T))
    if skew > SYMMETRY_RTOL * max(norm, 1e-300):
        raise NotSymmetric(
            f"{what}: input is not symmetric (relative asymmetry {skew / max(norm, 1e-300):.3e})"
        )
    return A


@dataclass
class LowerTriangular:
    """Lower-triangular factor in packed row-major storage.

    ``data`` holds the dim*(dim+1)/2 entries of rows 0..dim-1, each row
    truncated at the diagonal. The diagonal must be strictly positive.
    """

    dim: int
    data: np.ndarray

    def __post_init__(self):
        expected = self.dim * (self.dim + 1) // 2
        if self.data.shape != (expected,):
            raise DimensionMismatch(
                f"packed data has length {self.data.shape}, expected ({expected},)"
            )

    @classmethod
    def from_dense(cls, L: Matrix) -> "LowerTriangular":
        n = L.shape[0]
        rows, cols = np.tril_indices(n)
        return cls(dim=n, data=np.ascontiguousarray(L[rows, cols]))

    def dense(self) -> Matrix:
        L = np.zeros((self.dim, self.dim))
        rows, cols = np.tril_indices(self.dim)
        L[rows, cols] = self.data
        return L

    def diagonal(self) -> np.ndarray:
        idx = np.arange(self.dim)
        return self.data[idx * (idx + 1) // 2 + idx]


@dataclass
class EigPair:
    """Top-k eigenvectors (columns, orthonormal) with descending eigenvalues."""

    vectors: Matrix
    values: np.ndarray


def cholesky(A: Matrix) -> LowerTriangular:
    """Factor a symmetric positive-definite matrix as L @ L.T.

    Raises NotPositiveDefinite with the offending pivot index as soon as
    a non-positive pivot appears; callers treat that as a request for
    more damping.
    """
    A = _require_square_symmetric(A, "cholesky")
    n = A.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        d = A[j, j] - L[j, :j] @ L[j, :j]
        if not (d > 0.0) or not math.isfinite(d):
            raise NotPositiveDefinite(pivot_index=j)
        L[j, j] = math.sqrt(d)
        if j + 1 < n:
            L[j + 1 :, j] = (A[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return LowerTriangular.from_dense(L)


def solve_triangular(L: LowerTriangular, B, side: str = "lower") -> Matrix:
    """Solve L @ Z = B (side="lower") or L.T @ Z = B (side="upper-transposed").

    B may be a vector or a matrix of right-hand sides; the result has the
    same shape as B.
    """
    Ld = L.dense()
    B = np.asarray(B, dtype=np.float64)
    vector = B.ndim == 1
    if vector:
        B = B[:, None]
    if B.ndim != 2 or B.shape[0] != L.dim:
        raise DimensionMismatch(
            f"rhs has shape {B.shape}, expected leading dimension {L.dim}"
        )
    n = L.dim
    Z = np.empty_like(B)
    if side == "lower":
        for i in range(n):
            Z[i] = (B[i] - Ld[i, :i] @ Z[:i]) / Ld[i, i]
    elif side == "upper-transposed":
        for i in range(n - 1, -1, -1):
            Z[i] = (B[i] - Ld[i + 1 :, i] @ Z[i + 1 :]) / Ld[i, i]
    else:
        raise ValueError(f"unknown side {side!r}")
    return Z[:, 0] if vector else Z


def cholesky_solve(L: LowerTriangular, B) -> Matrix:
    """Solve (L @ L.T) @ Z = B using two triangular solves."""
    return solve_triangular(L, solve_triangular(L, B, "lower"), "upper-transposed")


def _offdiag_norm(A: Matrix) -> float:
    total = float(np.sum(A * A))
    diag = float(np.sum(np.diag(A) ** 2))
    return math.sqrt(max(total - diag, 0.0))


def top_k_eigvecs(S: Matrix, k: int) -> EigPair:
    """Return the k largest (signed) eigenvalues and eigenvectors of S.

    Uses cyclic Jacobi sweeps: unconditionally stable for symmetric
    input, which need not be positive semi-definite. Ties are broken by
    first-encountered column order after the sweeps, so eigenvectors are
    unique only up to rotation within degenerate eigenspaces.
    """
    S = _require_square_symmetric(S, "top_k_eigvecs")
    n = S.shape[0]
    if not (1 <= k <= n):
        raise RankOutOfBounds(f"k={k} outside [1, {n}]")
    A = 0.5 * (S + S.T)
    Q = np.eye(n)
    norm = float(np.linalg.norm(A))
    if norm > 0.0:
        tol = JACOBI_OFF_RTOL * norm
        for _ in range(JACOBI_MAX_SWEEPS):
            if _offdiag_norm(A) <= tol:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = A[p, q]
                    if apq == 0.0:
                        continue
                    delta = A[q, q] - A[p, p]
                    if abs(apq) < 1e-300 * max(1.0, abs(delta)):
                        A[p, q] = 0.0
                        A[q, p] = 0.0
                        continue
                    tau = delta / (2.0 * apq)
                    if abs(tau) > 1e150:
                        t = 1.0 / (2.0 * tau)
                    elif tau >= 0.0:
                        t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                    else:
                        t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                    c = 1.0 / math.sqrt(1.0 + t * t)
                    s = t * c
                    col_p = A[:, p].copy()
                    col_q = A[:, q].copy()
                    A[:, p] = c * col_p - s * col_q
                    A[:, q] = s * col_p + c * col_q
                    row_p = A[p, :].copy()
                    row_q = A[q, :].copy()
                    A[p, :] = c * row_p - s * row_q
                    A[q, :] = s * row_p + c * row_q
                    A[p, q] = 0.0
                    A[q, p] = 0.0
                    qp = Q[:, p].copy()
                    qq = Q[:, q].copy()
                    Q[:, p] = c * qp - s * qq
                    Q[:, q] = s * qp + c * qq
    values = np.diag(A).copy()
    order = np.argsort(-values, kind="stable")
    top = order[:k]
    return EigPair(
        vectors=np.ascontiguousarray(Q[:, top]),
        values=np.ascontiguousarray(values[top]),
    )


def matmul(A: Matrix, B: Matrix) -> Matrix:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise DimensionMismatch(f"cannot multiply {A.shape} by {B.shape}")
    return A @ B


def gram(M: Matrix) -> Matrix:
    """Gram matrix with row orientation: gram(M) = M @ M.T."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise DimensionMismatch(f"gram expects a matrix, got ndim={M.ndim}")
    G = M @ M.T
    return 0.5 * (G + G.T)


def transpose(M: Matrix) -> Matrix:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise DimensionMismatch(f"transpose expects a matrix, got ndim={M.ndim}")
    return np.ascontiguousarray(M.T)
