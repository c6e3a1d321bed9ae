"""Classical strength of connection and the lumped proxy matrix."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = ["StrengthConfig", "strong_connections", "lump", "lumped_matrix"]


@dataclass(frozen=True)
class StrengthConfig:
    gamma: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")


def strong_connections(A, cfg=StrengthConfig()):
    """Boolean CSR pattern of strong connections.

    ``j`` is strong for row ``i`` when ``-A[i,j] >= gamma * max_{k != i} -A[i,k]``
    and ``-A[i,j] > 0``.  Only negative off-diagonals can be strong.  The
    relation is row-wise and need not be symmetric.
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    rows = np.repeat(np.arange(n), np.diff(A.indptr))
    neg = np.where(rows != A.indices, -A.data, -np.inf)
    row_max = np.full(n, -np.inf)
    np.maximum.at(row_max, rows, neg)
    keep = (neg > 0) & (neg >= cfg.gamma * row_max[rows])
    S = sp.csr_matrix(
        (np.ones(keep.sum(), dtype=bool), (rows[keep], A.indices[keep])), shape=A.shape
    )
    S.sort_indices()
    return S


def lump(A, strong):
    """Drop weak off-diagonals and add them to the diagonal.

    Row sums of the result equal those of `A`.  The diagonal is always stored
    even when it is zero.
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    rows = np.repeat(np.arange(n), np.diff(A.indptr))
    # tag each stored entry with its position, then intersect with the pattern
    tags = sp.csr_matrix((np.arange(1, A.nnz + 1, dtype=np.float64), A.indices, A.indptr),
                         shape=A.shape)
    hit = tags.multiply(sp.csr_matrix(strong, dtype=np.float64)).tocsr()
    is_strong = np.zeros(A.nnz, dtype=bool)
    is_strong[hit.data[hit.data > 0].astype(np.int64) - 1] = True
    offdiag = rows != A.indices
    weak = offdiag & ~is_strong
    diag = A.diagonal() + np.bincount(rows[weak], weights=A.data[weak], minlength=n)
    keep = offdiag & is_strong
    r = np.concatenate([rows[keep], np.arange(n)])
    c = np.concatenate([A.indices[keep], np.arange(n)])
    v = np.concatenate([A.data[keep], diag])
    Ahat = sp.csr_matrix((v, (r, c)), shape=A.shape)
    Ahat.sort_indices()
    return Ahat


def lumped_matrix(A, cfg=StrengthConfig()):
    return lump(A, strong_connections(A, cfg))
