"""Fixed-pattern sparse approximate inverse.

``spai(A, B, S)`` returns ``M`` minimising ``||B - A M||_F`` column by column,
with column ``j`` of ``M`` restricted to the rows listed in column ``j`` of
the pattern ``S``.  With ``B = I`` this is a sparse approximation of
``A^{-1}``; with ``B = A_FC`` it approximates ``A_FF^{-1} A_FC``.
"""

from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp

__all__ = ["SpaiInfo", "pattern_of", "spai"]


@dataclass
class SpaiInfo:
    rank_deficient: int = 0
    empty_columns: int = 0


def pattern_of(A):
    """Boolean CSC sparsity pattern of `A` (stored entries, zeros included)."""
    A = sp.csc_matrix(A)
    P = sp.csc_matrix((np.ones(A.nnz, dtype=bool), A.indices, A.indptr), shape=A.shape)
    P.sort_indices()
    return P


@numba.njit(cache=True)
def _spai_kernel(m_rows, a_ptr, a_ind, a_val, b_ptr, b_ind, b_val, s_ptr, s_ind):
    n_col = s_ptr.size - 1
    out = np.zeros(s_ind.size)
    stamp = -np.ones(m_rows, dtype=np.int64)
    local = np.zeros(m_rows, dtype=np.int64)
    rows = np.empty(m_rows, dtype=np.int64)
    n_deficient = 0
    n_empty = 0
    for j in range(n_col):
        lo, hi = s_ptr[j], s_ptr[j + 1]
        nj = hi - lo
        if nj == 0:
            n_empty += 1
            continue
        ni = 0
        for q in range(lo, hi):
            c = s_ind[q]
            for p in range(a_ptr[c], a_ptr[c + 1]):
                r = a_ind[p]
                if stamp[r] != j:
                    stamp[r] = j
                    local[r] = ni
                    rows[ni] = r
                    ni += 1
        if ni == 0:
            n_empty += 1
            continue
        Abar = np.zeros((ni, nj))
        for q in range(lo, hi):
            c = s_ind[q]
            for p in range(a_ptr[c], a_ptr[c + 1]):
                Abar[local[a_ind[p]], q - lo] = a_val[p]
        bbar = np.zeros(ni)
        for p in range(b_ptr[j], b_ptr[j + 1]):
            r = b_ind[p]
            if stamp[r] == j:
                bbar[local[r]] = b_val[p]
        x, _, rank, _ = np.linalg.lstsq(Abar, bbar)
        if rank < nj:
            n_deficient += 1
        out[lo:hi] = x
    return out, n_deficient, n_empty


def spai(A, B, S, return_info=False):
    """Sparse approximate solution of ``A M = B`` on the pattern `S`.

    Parameters
    ----------
    A : sparse matrix, shape (m, k)
    B : sparse matrix, shape (m, n_col)
    S : sparse matrix, shape (k, n_col)
        Allowed nonzeros of ``M``; only its structure is used.
    return_info : bool
        Also return a :class:`SpaiInfo` counting rank-deficient local
        problems (solved in the minimum-norm sense) and empty columns.

    Returns
    -------
    M : csr_matrix, shape (k, n_col)
    """
    A = sp.csc_matrix(A, dtype=np.float64)
    B = sp.csc_matrix(B, dtype=np.float64)
    S = pattern_of(S)
    m, k = A.shape
    if B.shape[0] != m:
        raise ValueError(f"B has {B.shape[0]} rows, A has {m}")
    if S.shape != (k, B.shape[1]):
        raise ValueError(f"pattern shape {S.shape} does not match ({k}, {B.shape[1]})")
    A.sort_indices()
    B.sort_indices()
    vals, n_def, n_empty = _spai_kernel(
        m,
        A.indptr.astype(np.int64), A.indices.astype(np.int64), A.data,
        B.indptr.astype(np.int64), B.indices.astype(np.int64), B.data,
        S.indptr.astype(np.int64), S.indices.astype(np.int64),
    )
    M = sp.csc_matrix((vals, S.indices, S.indptr), shape=S.shape).tocsr()
    M.eliminate_zeros()
    M.sort_indices()
    if return_info:
        return M, SpaiInfo(n_def, n_empty)
    return M
