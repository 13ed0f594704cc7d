"""Compiled CSR loops: ILU(0), triangular substitution, Gauss-Seidel sweeps.

All kernels run sequentially in row order, so results are bit-reproducible.
Right-hand sides are 2-D ``(n, nrhs)`` arrays; callers reshape vectors.
"""
import numba
import numpy as np

_jit = numba.njit(cache=True, nogil=True)


@_jit
def ilu0_inplace(indptr, indices, data):
    """Overwrite ``data`` with the ILU(0) factors (unit L below, U on/above).

    Returns -1 on success, otherwise the row with a zero pivot.
    """
    n = len(indptr) - 1
    diag = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            if indices[p] == i:
                diag[i] = p
                break
        if diag[i] < 0:
            return i
    marker = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        start, stop = indptr[i], indptr[i + 1]
        for p in range(start, stop):
            marker[indices[p]] = p
        for p in range(start, stop):
            k = indices[p]
            if k >= i:
                break
            pivot = data[diag[k]]
            if pivot == 0.0:
                return k
            lik = data[p] / pivot
            data[p] = lik
            for q in range(diag[k] + 1, indptr[k + 1]):
                pos = marker[indices[q]]
                if pos >= 0:
                    data[pos] -= lik * data[q]
        for p in range(start, stop):
            marker[indices[p]] = -1
        if data[diag[i]] == 0.0:
            return i
    return -1


@_jit
def lower_solve(indptr, indices, data, b, unit):
    n, m = b.shape
    x = b.copy()
    for i in range(n):
        d = 1.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j < i:
                a = data[p]
                for c in range(m):
                    x[i, c] -= a * x[j, c]
            elif j == i:
                d = data[p]
        if not unit:
            for c in range(m):
                x[i, c] /= d
    return x


@_jit
def upper_solve(indptr, indices, data, b, unit):
    n, m = b.shape
    x = b.copy()
    for i in range(n - 1, -1, -1):
        d = 1.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j > i:
                a = data[p]
                for c in range(m):
                    x[i, c] -= a * x[j, c]
            elif j == i:
                d = data[p]
        if not unit:
            for c in range(m):
                x[i, c] /= d
    return x


@_jit
def _gs_row(indptr, indices, data, diag, f, u, i, acc):
    m = u.shape[1]
    for c in range(m):
        acc[c] = f[i, c]
    for p in range(indptr[i], indptr[i + 1]):
        j = indices[p]
        if j != i:
            a = data[p]
            for c in range(m):
                acc[c] -= a * u[j, c]
    for c in range(m):
        u[i, c] = acc[c] / diag[i]


@_jit
def symmetric_gauss_seidel(indptr, indices, data, diag, f, u, sweeps):
    """``sweeps`` forward+backward sweeps, updating ``u`` in place."""
    n = len(indptr) - 1
    acc = np.empty(u.shape[1])
    for _ in range(sweeps):
        for i in range(n):
            _gs_row(indptr, indices, data, diag, f, u, i, acc)
        for i in range(n - 1, -1, -1):
            _gs_row(indptr, indices, data, diag, f, u, i, acc)
    return u


@_jit
def add_into_pattern(indptr, indices, data, b_indptr, b_indices, b_data, alpha):
    """data += alpha * B on the pattern of the target; returns the first row
    where B has an entry outside that pattern, or -1."""
    n = len(indptr) - 1
    for i in range(n):
        p, stop = indptr[i], indptr[i + 1]
        for q in range(b_indptr[i], b_indptr[i + 1]):
            j = b_indices[q]
            while p < stop and indices[p] < j:
                p += 1
            if p == stop or indices[p] != j:
                return i
            data[p] += alpha * b_data[q]
    return -1
