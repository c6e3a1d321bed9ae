"""Setup and solve phases of generalized reduction-based AMG.

Setup per level: lumped proxy ``A_hat`` -> F/C partition of ``A_hat`` ->
SPAI interpolation -> SPAI relaxation inverses on ``A_hat_FF`` and
``A_hat_CC`` -> relaxation weights.  Cycles use F or FCF relaxation before
and after a Galerkin coarse-grid correction with restriction ``P^T``.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coarsen import CoarsenConfig, Partition, dominance_measure, partition as make_partition
from .interp import InterpConfig, assemble_prolongator, build_interpolation
from .spai import spai
from .sparse import (
    as_index_set,
    canonical,
    extract_submatrix,
    galerkin_product,
    identity,
    max_abs_row_sum,
)
from .strength import StrengthConfig, lumped_matrix

log = logging.getLogger(__name__)

__all__ = [
    "RelaxConfig",
    "CycleConfig",
    "Level",
    "Hierarchy",
    "CoarseningFailure",
    "setup_level",
    "classical_amgr_setup",
    "relax_weight_exact",
    "relax_weight_heuristic",
    "extreme_eigenvalues",
    "block_relax",
    "cycle",
    "build_hierarchy",
    "pcg",
    "PCGResult",
]

DENSE_EIG_LIMIT = 600
DENSE_COARSE_LIMIT = 2000


class CoarseningFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class RelaxConfig:
    use_fcf: bool = True
    weight_mode: str = "exact_eigs"
    heuristic_numerator: float = 1.5
    nu: int = 1
    sigma_c_one: bool = False
    # "A" follows the setup literally (eigenvalues of D_inv A_FF); "A_hat" uses
    # the lumped blocks instead
    weight_blocks: str = "A"

    def __post_init__(self):
        if self.nu < 1:
            raise ValueError("nu must be at least 1")
        if self.weight_mode not in ("exact_eigs", "heuristic"):
            raise ValueError(f"unknown weight mode {self.weight_mode!r}")
        if self.weight_blocks not in ("A", "A_hat"):
            raise ValueError(f"unknown weight blocks {self.weight_blocks!r}")


@dataclass(frozen=True)
class CycleConfig:
    cycle: str = "two_level"
    max_levels: int = 10
    coarse_size_threshold: int = 100
    classical_baseline: bool = False

    def __post_init__(self):
        if self.cycle not in ("two_level", "V", "W"):
            raise ValueError(f"unknown cycle {self.cycle!r}")
        if self.max_levels < 2:
            raise ValueError("max_levels must be at least 2")

    @property
    def n_coarse_calls(self):
        return 2 if self.cycle == "W" else 1


@dataclass
class Level:
    A: sp.csr_matrix
    A_hat: sp.csr_matrix
    part: Partition
    P: sp.csr_matrix
    D_ff_inv: sp.csr_matrix
    D_cc_inv: sp.csr_matrix
    sigma_f: float
    sigma_c: float
    guard_count: int = 0
    spai_rank_deficient: int = 0
    R: sp.csr_matrix = field(default=None, repr=False)
    A_f_rows: sp.csr_matrix = field(default=None, repr=False)
    A_c_rows: sp.csr_matrix = field(default=None, repr=False)

    def __post_init__(self):
        if self.R is None:
            self.R = sp.csr_matrix(self.P.T)
        if self.A_f_rows is None:
            self.A_f_rows = sp.csr_matrix(self.A)[self.part.f_set]
        if self.A_c_rows is None:
            self.A_c_rows = sp.csr_matrix(self.A)[self.part.c_set]

    @property
    def n(self):
        return self.A.shape[0]


class CoarseSolver:
    """Direct solver for the coarsest matrix (dense Cholesky, else LU)."""

    def __init__(self, A):
        self.n = A.shape[0]
        if self.n > DENSE_COARSE_LIMIT:
            self._lu = spla.splu(sp.csc_matrix(A))
            self._solve = self._lu.solve
            return
        dense = A.toarray()
        try:
            factor = la.cho_factor(dense)
            self._solve = lambda b: la.cho_solve(factor, b)
        except la.LinAlgError:
            lu = la.lu_factor(dense)
            self._solve = lambda b: la.lu_solve(lu, b)

    def __call__(self, b):
        if self.n == 0:
            return np.zeros(0)
        return self._solve(b)


@dataclass
class Hierarchy:
    levels: list
    coarse_A: sp.csr_matrix
    coarsest_solver: CoarseSolver = None

    def __post_init__(self):
        if self.coarsest_solver is None:
            self.coarsest_solver = CoarseSolver(self.coarse_A)

    @property
    def n_levels(self):
        return len(self.levels) + 1

    def operators(self):
        return [lvl.A for lvl in self.levels] + [self.coarse_A]

    def summary(self):
        """Per-level sizes, nonzeros, weights and guard counts as text."""
        lines = ["level        n        nnz   sigma_F  sigma_C  guards"]
        for k, lvl in enumerate(self.levels):
            lines.append(
                f"{k:5d} {lvl.n:8d} {lvl.A.nnz:10d} {lvl.sigma_f:9.4f} {lvl.sigma_c:8.4f}"
                f" {lvl.guard_count:7d}"
            )
        lines.append(f"{len(self.levels):5d} {self.coarse_A.shape[0]:8d} {self.coarse_A.nnz:10d}"
                     "   (direct)")
        return "\n".join(lines)


def extreme_eigenvalues(M):
    """Smallest and largest real parts of the spectrum of `M`."""
    n = M.shape[0]
    if n == 0:
        return 1.0, 1.0
    if n <= DENSE_EIG_LIMIT:
        ev = np.linalg.eigvals(M.toarray() if sp.issparse(M) else M)
        if np.abs(ev.imag).max() > 1e-8:
            log.debug("relaxation operator has complex eigenvalues (max imag %.2e)",
                      np.abs(ev.imag).max())
        return float(ev.real.min()), float(ev.real.max())
    M = sp.csr_matrix(M)
    # fixed pseudo-random start: the constant vector can be orthogonal to the
    # extreme eigenvectors of symmetric stencils
    v0 = np.random.default_rng(0).uniform(0.5, 1.5, n)
    lam_max = spla.eigs(M, k=1, which="LR", v0=v0, tol=1e-10, ncv=40,
                        return_eigenvectors=False)[0].real
    shifted = sp.csr_matrix(lam_max * identity(n) - M)
    spread = spla.eigs(shifted, k=1, which="LR", v0=v0, tol=1e-10, ncv=40,
                       return_eigenvectors=False)[0].real
    return float(lam_max - spread), float(lam_max)


def relax_weight_exact(D_inv, A_block):
    """``2 / (lambda_min + lambda_max)`` of ``D_inv A_block``."""
    lo, hi = extreme_eigenvalues(sp.csr_matrix(D_inv) @ sp.csr_matrix(A_block))
    return 2.0 / (lo + hi)


def relax_weight_heuristic(D_inv, A_block, numerator=1.5):
    """``numerator`` over the maximum absolute row sum of ``D_inv A_block``."""
    bound = max_abs_row_sum(sp.csr_matrix(D_inv) @ sp.csr_matrix(A_block))
    if bound == 0.0:
        raise ValueError("relaxation operator has zero row-sum bound")
    return numerator / bound


def _relax_weight(D_inv, block, relax):
    if block.shape[0] == 0:
        return 1.0
    if relax.weight_mode == "heuristic":
        return relax_weight_heuristic(D_inv, block, relax.heuristic_numerator)
    return relax_weight_exact(D_inv, block)


def setup_level(A, strength_cfg=StrengthConfig(), coarsen_cfg=CoarsenConfig(),
                interp_cfg=InterpConfig(), relax_cfg=RelaxConfig(), part=None, grid=None):
    """Build one level; the caller forms ``P^T A P``.

    ``strength_cfg=None`` skips filtering (``A_hat = A``).  ``part`` pins the
    partition; otherwise it is computed on ``A_hat`` (``grid=(nx, ny)`` feeds
    geometric coarsening).
    """
    A = canonical(A)
    A_hat = A if strength_cfg is None else lumped_matrix(A, strength_cfg)
    if part is None:
        nx, ny = grid if grid is not None else (None, None)
        part = make_partition(A_hat, coarsen_cfg, nx, ny)
    if part.n != A.shape[0]:
        raise ValueError("partition size does not match the matrix")
    if part.c_set.size == 0 and A.shape[0] > 1:
        raise CoarseningFailure("coarsening produced an empty C set")
    f, c = part.f_set, part.c_set
    P, info = build_interpolation(A_hat, part, interp_cfg, return_info=True)

    Ah_ff = extract_submatrix(A_hat, f, f)
    Ah_cc = extract_submatrix(A_hat, c, c)
    D_ff_inv, i_f = spai(Ah_ff, identity(f.size), Ah_ff, return_info=True)
    D_cc_inv, i_c = spai(Ah_cc, identity(c.size), Ah_cc, return_info=True)
    src = A if relax_cfg.weight_blocks == "A" else A_hat
    sigma_f = _relax_weight(D_ff_inv, extract_submatrix(src, f, f), relax_cfg)
    if relax_cfg.sigma_c_one:
        sigma_c = 1.0
    else:
        sigma_c = _relax_weight(D_cc_inv, extract_submatrix(src, c, c), relax_cfg)
    return Level(
        A=A, A_hat=A_hat, part=part, P=P, D_ff_inv=D_ff_inv, D_cc_inv=D_cc_inv,
        sigma_f=sigma_f, sigma_c=sigma_c, guard_count=info.guard_count,
        spai_rank_deficient=info.spai.rank_deficient + i_f.rank_deficient + i_c.rank_deficient,
    )


def classical_epsilon(eta):
    return (2.0 - 2.0 * eta) / (2.0 * eta - 1.0)


def classical_amgr_setup(A, eta, part=None, rowwise=True):
    """Diagonal-approximation AMGr level.

    ``D_FF = (2 - 1/eta_i) diag(A_FF)``, ``P = [-D_FF^{-1} A_FC; I]`` with the
    raw block ``A_FC``, and ``sigma = 2/(2 + eps)``, ``eps = (2-2eta)/(2eta-1)``.
    ``eta_i`` is the measured dominance of row ``i`` (at least `eta` for a
    feasible partition); ``rowwise=False`` uses the scalar `eta` for every
    row.  Intended for F-relaxation only.  The partition defaults to greedy
    coarsening of ``A`` itself.
    """
    if not 0.5 < eta <= 1.0:
        raise ValueError(f"eta must lie in (1/2, 1], got {eta}")
    A = canonical(A)
    if part is None:
        part = make_partition(A, CoarsenConfig(eta=eta, method="greedy"))
    f, c = part.f_set, part.c_set
    if rowwise:
        eta_i = np.maximum(dominance_measure(A, f), eta)
    else:
        eta_i = np.full(f.size, eta)
    d = (2.0 - 1.0 / eta_i) * A.diagonal()[f]
    D_ff_inv = sp.diags(1.0 / d, format="csr")
    W = canonical(-(D_ff_inv @ extract_submatrix(A, f, c)))
    P = assemble_prolongator(W, part)
    sigma = 2.0 / (2.0 + classical_epsilon(eta))
    return Level(A=A, A_hat=A, part=part, P=P, D_ff_inv=D_ff_inv,
                 D_cc_inv=sp.csr_matrix((c.size, c.size)), sigma_f=sigma, sigma_c=1.0)


def block_relax(A, x, b, block, D_inv, sigma, A_rows=None):
    """``x_block += sigma * D_inv (b - A x)_block``; other entries unchanged.

    ``A_rows`` may pass the precomputed rows ``A[block]``.
    """
    block = as_index_set(block)
    if block.size == 0:
        return x
    rows = A_rows if A_rows is not None else sp.csr_matrix(A)[block]
    r = b[block] - rows @ x
    x = x.copy()
    x[block] += sigma * (D_inv @ r)
    return x


def _relax(level, x, b, use_fcf):
    f, c = level.part.f_set, level.part.c_set
    x = block_relax(level.A, x, b, f, level.D_ff_inv, level.sigma_f, level.A_f_rows)
    if use_fcf:
        x = block_relax(level.A, x, b, c, level.D_cc_inv, level.sigma_c, level.A_c_rows)
        x = block_relax(level.A, x, b, f, level.D_ff_inv, level.sigma_f, level.A_f_rows)
    return x


def cycle(h, level, x, b, relax_cfg=RelaxConfig(), cycle_cfg=CycleConfig()):
    """One multigrid cycle starting at `level`; returns the updated iterate."""
    if level == len(h.levels):
        return h.coarsest_solver(b)
    lvl = h.levels[level]
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if x.shape != (lvl.n,) or b.shape != (lvl.n,):
        raise ValueError(f"vectors must have length {lvl.n}")
    use_fcf = relax_cfg.use_fcf and not cycle_cfg.classical_baseline
    for _ in range(relax_cfg.nu):
        x = _relax(lvl, x, b, use_fcf)
    r_c = lvl.R @ (b - lvl.A @ x)
    if level + 1 == len(h.levels):
        e_c = h.coarsest_solver(r_c)
    else:
        e_c = np.zeros(r_c.shape)
        for _ in range(cycle_cfg.n_coarse_calls):
            e_c = cycle(h, level + 1, e_c, r_c, relax_cfg, cycle_cfg)
    x = x + lvl.P @ e_c
    for _ in range(relax_cfg.nu):
        x = _relax(lvl, x, b, use_fcf)
    return x


def build_hierarchy(A, strength_cfg=StrengthConfig(), coarsen_cfg=CoarsenConfig(),
                    interp_cfg=InterpConfig(), relax_cfg=RelaxConfig(),
                    cycle_cfg=CycleConfig(), fine_partition=None, grid=None):
    """Recursive setup until the threshold size or the level cap is reached.

    A two-level cycle always yields exactly two levels.  ``fine_partition``
    (or geometric coarsening with ``grid``) applies to the finest level only;
    coarser levels use greedy coarsening unless annealing is configured.
    """
    A = canonical(A)
    max_levels = 2 if cycle_cfg.cycle == "two_level" else cycle_cfg.max_levels
    levels = []
    current = A
    while len(levels) + 1 < max_levels:
        n = current.shape[0]
        if cycle_cfg.cycle != "two_level" and n <= cycle_cfg.coarse_size_threshold:
            break
        if not levels:
            part, cfg = fine_partition, coarsen_cfg
        else:
            part = None
            cfg = coarsen_cfg if coarsen_cfg.method != "geometric" else replace(
                coarsen_cfg, method="greedy")
        if cycle_cfg.classical_baseline:
            if part is None:
                nx, ny = grid if (grid is not None and not levels) else (None, None)
                part = make_partition(current, cfg, nx, ny)
            lvl = classical_amgr_setup(current, cfg.eta, part)
        else:
            lvl = _setup_with_retry(current, strength_cfg, cfg, interp_cfg, relax_cfg, part,
                                    grid if not levels else None)
        levels.append(lvl)
        current = galerkin_product(lvl.P, lvl.A)
    return Hierarchy(levels, current)


def _setup_with_retry(A, strength_cfg, coarsen_cfg, interp_cfg, relax_cfg, part, grid):
    n = A.shape[0]
    try:
        lvl = setup_level(A, strength_cfg, coarsen_cfg, interp_cfg, relax_cfg, part, grid)
        if part is not None or lvl.part.c_set.size < n:
            return lvl
    except CoarseningFailure:
        if part is not None:
            raise
    relaxed = replace(coarsen_cfg, eta=max(coarsen_cfg.eta - 0.02, 0.5 + 1e-9))
    lvl = setup_level(A, strength_cfg, relaxed, interp_cfg, relax_cfg, None, grid)
    if lvl.part.c_set.size >= n:
        raise CoarseningFailure(f"coarsening stagnated on a level of size {n}")
    return lvl


@dataclass
class PCGResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residuals: list


def pcg(A, b, h=None, relax_cfg=RelaxConfig(), cycle_cfg=CycleConfig(), tol=1e-8,
        max_iter=200, x0=None, flexible=False):
    """Conjugate gradients preconditioned by one multigrid cycle.

    Stops when ``||r|| <= tol ||b||``.  ``flexible`` switches to the
    Polak-Ribiere update, which tolerates the slight nonsymmetry of SPAI-based
    cycles.
    """
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    residuals = [np.linalg.norm(r)]
    if bnorm == 0.0:
        return PCGResult(np.zeros_like(b), 0, True, residuals)

    def precond(v):
        if h is None:
            return v.copy()
        return cycle(h, 0, np.zeros_like(v), v, relax_cfg, cycle_cfg)

    z = precond(r)
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r_new = r - alpha * Ap
        residuals.append(np.linalg.norm(r_new))
        if residuals[-1] <= tol * bnorm:
            return PCGResult(x, it, True, residuals)
        z_new = precond(r_new)
        rz_new = r_new @ z_new
        beta = ((r_new - r) @ z_new) / rz if flexible else rz_new / rz
        p = z_new + beta * p
        r, z, rz = r_new, z_new, rz_new
    return PCGResult(x, max_iter, False, residuals)
