"""Sparse-matrix kernels shared by every stage of the solver.

All matrices are ``scipy.sparse.csr_matrix`` objects in canonical form:
sorted column indices, no duplicate entries and no explicitly stored zeros.
Index sets (F and C points) are sorted, unique ``int64`` arrays.
"""

import numpy as np
import scipy.sparse as sp

__all__ = [
    "SPDViolation",
    "canonical",
    "from_triplets",
    "to_triplets",
    "spmv",
    "as_index_set",
    "extract_submatrix",
    "galerkin_product",
    "a_norm",
    "max_abs_row_sum",
    "identity",
    "is_symmetric",
]


class SPDViolation(ValueError):
    """Raised when an energy norm is requested for an indefinite direction."""


def canonical(A):
    """Return a canonical CSR copy of `A` (float64, sorted, exact zeros dropped)."""
    A = sp.csr_matrix(A, dtype=np.float64, copy=True)
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return A


def from_triplets(n_rows, n_cols, triplets):
    """Build a CSR matrix from ``(row, col, value)`` triplets.

    Duplicate triplets are summed and entries that cancel to exactly zero are
    dropped.

    >>> from_triplets(2, 2, [(0, 0, 1.0), (0, 0, 2.0)]).toarray()
    array([[3., 0.],
           [0., 0.]])
    """
    triplets = list(triplets)
    if triplets:
        rows, cols, vals = (np.asarray(t) for t in zip(*triplets))
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    rows = rows.astype(np.int64)
    cols = cols.astype(np.int64)
    if rows.size and (rows.min() < 0 or rows.max() >= n_rows):
        raise IndexError(f"row index out of range for {n_rows} rows")
    if cols.size and (cols.min() < 0 or cols.max() >= n_cols):
        raise IndexError(f"column index out of range for {n_cols} columns")
    A = sp.coo_matrix((vals.astype(np.float64), (rows, cols)), shape=(n_rows, n_cols))
    return canonical(A.tocsr())


def to_triplets(A):
    """List the stored entries of `A` as ``(row, col, value)`` in row-major order."""
    A = sp.csr_matrix(A)
    rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
    return [(int(i), int(j), float(v)) for i, j, v in zip(rows, A.indices, A.data)]


def spmv(A, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.shape[1],):
        raise ValueError(f"vector of length {x.shape} does not match {A.shape[1]} columns")
    return A @ x


def identity(n):
    return sp.identity(n, dtype=np.float64, format="csr")


def as_index_set(indices, n=None):
    """Validate and normalise an index set to a sorted unique int64 array."""
    idx = np.unique(np.asarray(indices, dtype=np.int64))
    if idx.size and idx[0] < 0:
        raise IndexError("negative index in index set")
    if n is not None and idx.size and idx[-1] >= n:
        raise IndexError(f"index {idx[-1]} out of range for size {n}")
    return idx


def extract_submatrix(A, rows, cols):
    """Return the raw block ``A[rows, cols]`` (no sign changes)."""
    rows = as_index_set(rows, A.shape[0])
    cols = as_index_set(cols, A.shape[1])
    return canonical(sp.csr_matrix(A)[rows][:, cols])


def galerkin_product(P, A):
    """Coarse operator ``P^T A P`` formed as ``(P^T)(A P)``."""
    if A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if P.shape[0] != A.shape[0]:
        raise ValueError(f"P has {P.shape[0]} rows but A is {A.shape[0]}x{A.shape[0]}")
    AP = sp.csr_matrix(A) @ sp.csr_matrix(P)
    return canonical(sp.csr_matrix(P.T) @ AP)


def a_norm(A, v, tol=1e-12):
    """Energy norm ``sqrt(v^T A v)``.

    Small negative round-off (down to ``-tol`` relative to ``|A||v|^2``) is
    clipped to zero; anything below raises :class:`SPDViolation`.
    """
    v = np.asarray(v, dtype=np.float64)
    q = float(v @ (A @ v))
    if q < 0.0:
        scale = max(abs(A).max() if A.nnz else 0.0, 1.0) * float(v @ v)
        if q < -tol * scale:
            raise SPDViolation(f"v^T A v = {q:.3e} is negative")
        q = 0.0
    return np.sqrt(q)


def max_abs_row_sum(A):
    if A.shape[0] == 0 or A.nnz == 0:
        return 0.0
    return float(np.max(abs(sp.csr_matrix(A)).sum(axis=1)))


def is_symmetric(A, rtol=1e-12):
    A = sp.csr_matrix(A)
    if A.shape[0] != A.shape[1]:
        return False
    if A.nnz == 0:
        return True
    diff = abs(A - A.T)
    return diff.nnz == 0 or diff.max() <= rtol * abs(A).max()
