"""CSR kernels shared by the assembly, the solvers and the preconditioners.

Matrices are ``scipy.sparse.csr_matrix`` with sorted column indices and
float64 values.  The functions here add dimension checks and the pieces
scipy does not provide exactly: a pattern-preserving ILU(0), triangular
substitution and the threshold sparse approximate inverse of a triangle.
"""
from __future__ import annotations

from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import _kernels

__all__ = [
    "as_csr",
    "spmv",
    "spgemm",
    "transpose",
    "add_scaled",
    "add_into",
    "TriangularFactorPair",
    "ZeroPivotError",
    "ilu0",
    "tri_solve",
    "sait_thr",
    "read_mtx",
    "write_mtx",
]


class ZeroPivotError(ArithmeticError):
    def __init__(self, row: int):
        super().__init__(f"zero pivot in row {row}")
        self.row = row


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A, dtype=np.float64)
    if not A.has_sorted_indices:
        A.sort_indices()
    return A


def spmv(A, x):
    x = np.asarray(x, dtype=np.float64)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"spmv: matrix {A.shape} vs vector {x.shape}")
    return A @ x


def spgemm(A, B) -> sp.csr_matrix:
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"spgemm: {A.shape} x {B.shape}")
    return as_csr(A @ B)


def transpose(A) -> sp.csr_matrix:
    return as_csr(A.T)


def add_scaled(A, B, alpha: float = 1.0, beta: float = 1.0) -> sp.csr_matrix:
    """alpha*A + beta*B on the union of both patterns (zeros are kept)."""
    if A.shape != B.shape:
        raise ValueError(f"add_scaled: {A.shape} vs {B.shape}")
    A, B = A.tocoo(), B.tocoo()
    C = sp.coo_matrix(
        (np.concatenate([alpha * A.data, beta * B.data]),
         (np.concatenate([A.row, B.row]), np.concatenate([A.col, B.col]))),
        shape=A.shape,
    )
    return as_csr(C.tocsr())


def add_into(S, B, alpha: float = 1.0) -> sp.csr_matrix:
    """S += alpha*B in place; B's pattern must lie inside S's.

    Avoids the second copy that ``add_scaled`` makes, which matters when S
    holds hundreds of millions of entries.
    """
    if S.shape != B.shape:
        raise ValueError(f"add_into: {S.shape} vs {B.shape}")
    B = as_csr(B)
    if not S.has_sorted_indices:
        S.sort_indices()
    row = _kernels.add_into_pattern(S.indptr, S.indices, S.data,
                                    B.indptr, B.indices, B.data, float(alpha))
    if row >= 0:
        raise ValueError(f"add_into: row {row} of the addend leaves the target pattern")
    return S


class TriangularFactorPair:
    """ILU factors held in one CSR matrix on the pattern of the factored matrix.

    Entries below the diagonal belong to L (whose unit diagonal is implied),
    the rest to U.  The index arrays are shared with the factored matrix, so
    a factorization costs one extra value array.  ``L`` and ``U`` are split
    out on first access.
    """

    def __init__(self, combined: sp.csr_matrix):
        self.combined = combined

    @property
    def shape(self):
        return self.combined.shape

    @cached_property
    def L(self) -> sp.csr_matrix:
        n = self.combined.shape[0]
        return as_csr(sp.tril(self.combined, k=-1, format="csr") + sp.identity(n, format="csr"))

    @cached_property
    def U(self) -> sp.csr_matrix:
        return as_csr(sp.triu(self.combined, k=0, format="csr"))

    def solve(self, b):
        """U \\ (L \\ b); ``b`` may hold several columns."""
        F = self.combined
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != F.shape[0]:
            raise ValueError(f"solve: {F.shape} vs {b.shape}")
        rhs = np.ascontiguousarray(b.reshape(b.shape[0], -1))
        y = _kernels.lower_solve(F.indptr, F.indices, F.data, rhs, True)
        x = _kernels.upper_solve(F.indptr, F.indices, F.data, y, False)
        return x.reshape(b.shape)


def ilu0(A) -> TriangularFactorPair:
    """Incomplete LU with zero fill: L and U live on the pattern of A."""
    A = as_csr(A)
    n, m = A.shape
    if n != m:
        raise ValueError("ilu0 needs a square matrix")
    A.sum_duplicates()
    data = A.data.copy()
    bad = _kernels.ilu0_inplace(A.indptr, A.indices, data)
    if bad >= 0:
        raise ZeroPivotError(int(bad))
    F = sp.csr_matrix((data, A.indices, A.indptr), shape=A.shape, copy=False)
    return TriangularFactorPair(F)


def _triangle(T) -> str:
    coo = T.tocoo()
    if np.all(coo.col <= coo.row):
        return "lower"
    if np.all(coo.col >= coo.row):
        return "upper"
    raise ValueError("matrix is not triangular")


def tri_solve(T, b, *, lower: bool | None = None, unit: bool = False):
    """Forward or backward substitution; ``b`` may hold several columns."""
    T = as_csr(T)
    b = np.asarray(b, dtype=np.float64)
    if T.shape[0] != T.shape[1] or T.shape[0] != b.shape[0]:
        raise ValueError(f"tri_solve: {T.shape} vs {b.shape}")
    if lower is None:
        lower = _triangle(T) == "lower"
    if not unit and np.any(T.diagonal() == 0.0):
        raise ZeroPivotError(int(np.flatnonzero(T.diagonal() == 0.0)[0]))
    rhs = b.reshape(b.shape[0], -1)
    solve = _kernels.lower_solve if lower else _kernels.upper_solve
    x = solve(T.indptr, T.indices, T.data, np.ascontiguousarray(rhs), unit)
    return x.reshape(b.shape)


def sait_thr(T, tau: float, m: int) -> sp.csr_matrix:
    """Sparse approximate inverse of a triangular matrix by thresholded Jacobi.

    Runs ``M <- (I - D^-1 T) M + I`` ``m`` times, dropping off-diagonal
    entries of magnitude below ``tau`` after each step, and returns
    ``M D^-1`` so that the result approximates ``T^-1`` directly.
    """
    T = as_csr(T)
    if not 0.0 <= tau < 1.0:
        raise ValueError("tau must lie in [0, 1)")
    if m < 1:
        raise ValueError("m must be >= 1")
    n = T.shape[0]
    d = T.diagonal()
    if np.any(d == 0.0):
        raise ZeroPivotError(int(np.flatnonzero(d == 0.0)[0]))
    I = sp.identity(n, format="csr")
    T0 = as_csr(I - sp.diags(1.0 / d) @ T)
    T0.setdiag(0.0)
    T0.eliminate_zeros()
    M = I.copy()
    for _ in range(m):
        M = as_csr(T0 @ M + I)
        if tau > 0.0:
            coo = M.tocoo()
            keep = (np.abs(coo.data) >= tau) | (coo.row == coo.col)
            M = as_csr(sp.csr_matrix((coo.data[keep], (coo.row[keep], coo.col[keep])),
                                     shape=M.shape))
    return as_csr(M @ sp.diags(1.0 / d))


def read_mtx(path) -> sp.csr_matrix:
    return as_csr(scipy.io.mmread(str(path)))


def write_mtx(path, A, comment: str = "") -> Path:
    path = Path(path)
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment)
    return path if path.suffix == ".mtx" else path.with_suffix(".mtx")
