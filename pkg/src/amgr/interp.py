"""Interpolation ``P = [W; I]`` from a SPAI approximation of ideal interpolation.

The raw blocks of the (lumped) matrix are used unsigned, so ideal
interpolation reads ``W = -A_FF^{-1} A_FC`` and has positive weights for
M-matrices.  ``W`` is computed by SPAI, truncated row-wise, then rescaled.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .sparse import canonical, extract_submatrix
from .spai import SpaiInfo, pattern_of, spai

__all__ = [
    "InterpConfig",
    "ScalingVector",
    "interp_pattern",
    "truncate_rows",
    "constant_scaling",
    "improved_iteration_scaling",
    "relaxed_vector",
    "assemble_prolongator",
    "build_interpolation",
]

GUARD = 1e-12


@dataclass(frozen=True)
class InterpConfig:
    zeta: float = 0.0
    scaling: str = "improved_iteration"
    n_wj: int = 5
    omega: float = 2.0 / 3.0

    def __post_init__(self):
        if not 0.0 <= self.zeta < 1.0:
            raise ValueError(f"zeta must lie in [0, 1), got {self.zeta}")
        if self.scaling not in ("constant", "improved_iteration", "none"):
            raise ValueError(f"unknown scaling {self.scaling!r}")
        if not 0.0 < self.omega <= 1.0:
            raise ValueError(f"omega must lie in (0, 1], got {self.omega}")


@dataclass
class ScalingVector:
    s: np.ndarray
    guard_count: int = 0


@dataclass
class InterpInfo:
    spai: SpaiInfo = field(default_factory=SpaiInfo)
    scaling: ScalingVector = None

    @property
    def guard_count(self):
        return 0 if self.scaling is None else self.scaling.guard_count


def interp_pattern(A_ff, A_fc):
    """Structural pattern of ``A_fc + A_ff A_fc`` (cancellations still count)."""
    Pff = sp.csr_matrix(pattern_of(A_ff), dtype=np.float64)
    Pfc = sp.csr_matrix(pattern_of(A_fc), dtype=np.float64)
    return pattern_of(Pfc + Pff @ Pfc)


def truncate_rows(W, zeta):
    """Drop entries smaller than ``zeta`` times the row's largest magnitude."""
    W = canonical(W)
    if zeta == 0.0 or W.nnz == 0:
        return W
    n = W.shape[0]
    rows = np.repeat(np.arange(n), np.diff(W.indptr))
    mag = np.abs(W.data)
    row_max = np.zeros(n)
    np.maximum.at(row_max, rows, mag)
    keep = mag >= zeta * row_max[rows]
    T = sp.csr_matrix((W.data[keep], (rows[keep], W.indices[keep])), shape=W.shape)
    T.sort_indices()
    return T


def _scale_to(W, target, source):
    """Left-scale `W` so that ``(S W) source = target`` where the row action is nonzero."""
    W = sp.csr_matrix(W)
    act = W @ source
    guarded = np.abs(act) < GUARD
    s = np.ones(W.shape[0])
    s[~guarded] = target[~guarded] / act[~guarded]
    return ScalingVector(s, int(guarded.sum())), canonical(sp.diags(s) @ W)


def constant_scaling(W):
    """Rescale rows so that ``S W 1_C = 1_F`` (guarded rows are left alone)."""
    W = sp.csr_matrix(W)
    return _scale_to(W, np.ones(W.shape[0]), np.ones(W.shape[1]))


def relaxed_vector(A_hat, n_wj=5, omega=2.0 / 3.0):
    """``(I - omega D^{-1} A_hat)^n_wj`` applied to the constant vector."""
    A_hat = sp.csr_matrix(A_hat)
    dinv = 1.0 / A_hat.diagonal()
    z = np.ones(A_hat.shape[0])
    for _ in range(n_wj):
        z = z - omega * dinv * (A_hat @ z)
    return z


def improved_iteration_scaling(A_hat, W, part, cfg=InterpConfig()):
    """Rescale rows so that ``S W z_C = z_F`` for a Jacobi-relaxed vector ``z``."""
    z = relaxed_vector(A_hat, cfg.n_wj, cfg.omega)
    return _scale_to(W, z[part.f_set], z[part.c_set])


def assemble_prolongator(W, part):
    """Place ``W`` on the F rows and the identity on the C rows (original ordering)."""
    W = sp.coo_matrix(W)
    n, nc = part.n, part.c_set.size
    rows = np.concatenate([part.f_set[W.row], part.c_set])
    cols = np.concatenate([W.col, np.arange(nc)])
    vals = np.concatenate([W.data, np.ones(nc)])
    return canonical(sp.csr_matrix((vals, (rows, cols)), shape=(n, nc)))


def build_interpolation(A_hat, part, cfg=InterpConfig(), return_info=False):
    """SPAI interpolation, then truncation, then the configured rescaling."""
    f, c = part.f_set, part.c_set
    info = InterpInfo()
    if f.size == 0:
        W = sp.csr_matrix((0, c.size))
    else:
        A_ff = extract_submatrix(A_hat, f, f)
        A_fc = extract_submatrix(A_hat, f, c)
        W, info.spai = spai(A_ff, -A_fc, interp_pattern(A_ff, A_fc), return_info=True)
        W = truncate_rows(W, cfg.zeta)
        if cfg.scaling == "constant":
            info.scaling, W = constant_scaling(W)
        elif cfg.scaling == "improved_iteration":
            info.scaling, W = improved_iteration_scaling(A_hat, W, part, cfg)
    P = assemble_prolongator(W, part)
    if return_info:
        return P, info
    return P
