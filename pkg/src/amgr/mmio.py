"""Matrix Market coordinate files (real, general or symmetric).

Values are written with 17 significant digits so a write/read round trip
reproduces every float64 exactly.  Symmetric files store the lower triangle
and are expanded on read.
"""

import numpy as np
import scipy.sparse as sp

from .sparse import canonical

__all__ = ["MatrixMarketError", "mm_read", "mm_write"]


class MatrixMarketError(ValueError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.line = line


def mm_read(path):
    """Read a coordinate-format file into canonical CSR."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixMarketError(path, 1, "empty file")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "%%MatrixMarket" or head[1].lower() != "matrix":
        raise MatrixMarketError(path, 1, "bad header")
    fmt, field, symm = (h.lower() for h in head[2:])
    if fmt != "coordinate":
        raise MatrixMarketError(path, 1, f"unsupported format {fmt!r}")
    if field not in ("real", "integer", "pattern"):
        raise MatrixMarketError(path, 1, f"unsupported field {field!r}")
    if symm not in ("general", "symmetric"):
        raise MatrixMarketError(path, 1, f"unsupported symmetry {symm!r}")

    k = 1
    while k < len(lines) and (not lines[k].strip() or lines[k].lstrip().startswith("%")):
        k += 1
    if k == len(lines):
        raise MatrixMarketError(path, k, "missing size line")
    try:
        m, n, nnz = (int(t) for t in lines[k].split())
    except ValueError:
        raise MatrixMarketError(path, k + 1, "size line must hold three integers") from None

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.ones(nnz)
    want = 2 if field == "pattern" else 3
    e = 0
    for lineno in range(k + 2, len(lines) + 1):
        text = lines[lineno - 1].strip()
        if not text or text.startswith("%"):
            continue
        tok = text.split()
        if e >= nnz:
            raise MatrixMarketError(path, lineno, "more entries than declared")
        if len(tok) != want:
            raise MatrixMarketError(path, lineno, f"expected {want} fields, got {len(tok)}")
        try:
            i, j = int(tok[0]), int(tok[1])
            if want == 3:
                vals[e] = float(tok[2])
        except ValueError:
            raise MatrixMarketError(path, lineno, "unparsable entry") from None
        if not (1 <= i <= m and 1 <= j <= n):
            raise MatrixMarketError(path, lineno, f"index ({i}, {j}) out of range")
        if symm == "symmetric" and j > i:
            raise MatrixMarketError(path, lineno, "symmetric files store the lower triangle only")
        rows[e], cols[e] = i - 1, j - 1
        e += 1
    if e != nnz:
        raise MatrixMarketError(path, len(lines), f"expected {nnz} entries, found {e}")

    if symm == "symmetric":
        off = rows != cols
        rows, cols, vals = (np.concatenate([rows, cols[off]]), np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, vals[off]]))
    return canonical(sp.csr_matrix((vals, (rows, cols)), shape=(m, n)))


def mm_write(path, A, symmetric=False, comment=None):
    """Write `A` in coordinate format; ``symmetric=True`` stores the lower triangle."""
    A = sp.coo_matrix(canonical(A))
    r, c, v = A.row, A.col, A.data
    if symmetric:
        if A.shape[0] != A.shape[1]:
            raise ValueError("symmetric storage needs a square matrix")
        low = r >= c
        r, c, v = r[low], c[low], v[low]
    kind = "symmetric" if symmetric else "general"
    with open(path, "w") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate real {kind}\n")
        if comment:
            for ln in comment.splitlines():
                fh.write(f"% {ln}\n")
        fh.write(f"{A.shape[0]} {A.shape[1]} {len(v)}\n")
        for i, j, x in zip(r + 1, c + 1, v):
            fh.write(f"{i} {j} {x:.16e}\n")
