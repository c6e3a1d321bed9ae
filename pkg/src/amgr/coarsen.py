"""Fine/coarse partitioning driven by diagonal dominance of ``A_FF``.

A row ``i`` in F satisfies the dominance constraint when
``|A_ii| >= eta * sum_{j in F} |A_ij|`` (the sum includes ``j = i``).
"""

import heapq
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .sparse import as_index_set

__all__ = [
    "Partition",
    "SAParams",
    "GeometricParams",
    "CoarsenConfig",
    "dominance_measure",
    "is_feasible",
    "repair",
    "greedy_partition",
    "sa_partition",
    "geometric_semicoarsen",
    "partition",
    "save_partition",
    "load_partition",
]


@dataclass
class Partition:
    f_set: np.ndarray
    c_set: np.ndarray

    def __post_init__(self):
        self.f_set = as_index_set(self.f_set)
        self.c_set = as_index_set(self.c_set)
        if np.intersect1d(self.f_set, self.c_set).size:
            raise ValueError("F and C overlap")
        n = self.n
        if n and not np.array_equal(np.union1d(self.f_set, self.c_set), np.arange(n)):
            raise ValueError("F and C do not cover 0..n-1")

    @property
    def n(self):
        return self.f_set.size + self.c_set.size

    @classmethod
    def from_c_mask(cls, is_c):
        is_c = np.asarray(is_c, dtype=bool)
        return cls(np.flatnonzero(~is_c), np.flatnonzero(is_c))

    @property
    def c_mask(self):
        mask = np.zeros(self.n, dtype=bool)
        mask[self.c_set] = True
        return mask


@dataclass
class SAParams:
    subdomain_size: int = 64
    sweeps: int = 30
    steps_per_subdomain: int = 2000
    initial_temperature: float = 0.5
    cooling: float = 0.97
    seed: int = 0
    # "rcm" forms subdomains from a reverse Cuthill-McKee ordering of the
    # matrix graph, "natural" from the given index order
    ordering: str = "rcm"
    swap_prob: float = 0.5
    visit_decay: float = 0.01


@dataclass
class GeometricParams:
    nx: int = 0
    ny: int = 0
    axis: str = "y"
    factor: int = 3
    offset: int = 2


@dataclass
class CoarsenConfig:
    eta: float = 0.65
    method: str = "greedy"
    sa_params: SAParams = field(default_factory=SAParams)
    geometric_params: GeometricParams = field(default_factory=GeometricParams)

    def __post_init__(self):
        if not 0.5 < self.eta <= 1.0:
            raise ValueError(f"eta must lie in (1/2, 1], got {self.eta}")
        if self.method not in ("greedy", "annealed", "geometric"):
            raise ValueError(f"unknown coarsening method {self.method!r}")
        if self.sa_params.ordering not in ("rcm", "natural"):
            raise ValueError(f"unknown SA ordering {self.sa_params.ordering!r}")
        if self.geometric_params.factor < 2:
            raise ValueError("geometric coarsening factor must be at least 2")


def _abs_csr(A):
    A = sp.csr_matrix(A, dtype=np.float64)
    A.sort_indices()
    return A.indptr.astype(np.int64), A.indices.astype(np.int64), np.abs(A.data)


def _diag(A):
    return np.abs(sp.csr_matrix(A).diagonal())


def dominance_measure(A, f_set):
    """``eta_i = |A_ii| / sum_{j in F} |A_ij|`` for each ``i`` in `f_set`."""
    A = sp.csr_matrix(A)
    f_set = as_index_set(f_set, A.shape[0])
    in_f = np.zeros(A.shape[0])
    in_f[f_set] = 1.0
    denom = abs(A[f_set]) @ in_f
    return _diag(A)[f_set] / denom


def is_feasible(A, part, eta):
    if part.f_set.size == 0:
        return True
    return bool(np.all(_diag(A)[part.f_set] >= eta * _f_denominators(A, part.f_set)))


def _f_denominators(A, f_set):
    A = sp.csr_matrix(A)
    in_f = np.zeros(A.shape[0])
    in_f[f_set] = 1.0
    return abs(A[f_set]) @ in_f


def repair(A, part, eta):
    """Move violating F points to C, least dominant first, until feasible."""
    A = sp.csr_matrix(A)
    is_c = part.c_mask.copy()
    diag = _diag(A)
    absA = abs(A)
    At = sp.csc_matrix(absA)
    denom = absA @ (~is_c).astype(float)
    heap = [(diag[i] / denom[i], i) for i in np.flatnonzero(~is_c) if diag[i] < eta * denom[i]]
    heapq.heapify(heap)
    while heap:
        _, j = heapq.heappop(heap)
        if is_c[j] or diag[j] >= eta * denom[j]:
            continue
        is_c[j] = True
        lo, hi = At.indptr[j], At.indptr[j + 1]
        for i, a in zip(At.indices[lo:hi], At.data[lo:hi]):
            if i != j:
                denom[i] -= a
    part = Partition.from_c_mask(is_c)
    # incremental sums can drift; confirm with a fresh evaluation
    if not is_feasible(A, part, eta):
        return repair(A, part, eta)
    return part


def greedy_partition(A, cfg):
    """Greedy F/C splitting.

    Every undecided point whose constraint holds even with all undecided
    points counted as F is moved to F.  Otherwise the undecided point with the
    smallest dominance ratio (lowest index on ties) becomes a C point and the
    ratios of its neighbours are updated.
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    eta = cfg.eta
    diag = _diag(A)
    absA = abs(A)
    At = sp.csc_matrix(absA)
    # denominators with every point counted as potential F
    denom = np.asarray(absA.sum(axis=1)).ravel()
    denom = np.maximum(denom, diag)
    state = np.zeros(n, dtype=np.int8)  # 0 undecided, 1 F, 2 C

    def safe(i):
        return diag[i] >= eta * denom[i]

    for i in range(n):
        if safe(i):
            state[i] = 1
    heap = [(diag[i] / denom[i] if denom[i] > 0 else np.inf, i) for i in range(n) if state[i] == 0]
    heapq.heapify(heap)
    while heap:
        ratio, j = heapq.heappop(heap)
        if state[j] != 0:
            continue
        current = diag[j] / denom[j] if denom[j] > 0 else np.inf
        if current != ratio:
            heapq.heappush(heap, (current, j))
            continue
        state[j] = 2
        lo, hi = At.indptr[j], At.indptr[j + 1]
        for i, a in zip(At.indices[lo:hi], At.data[lo:hi]):
            if i == j or state[i] != 0:
                continue
            denom[i] -= a
            if safe(i):
                state[i] = 1
            else:
                heapq.heappush(heap, (diag[i] / denom[i], i))
    is_c = state == 2
    if n > 1 and not is_c.any():
        # keep at least one coarse point
        is_c[n - 1] = True
    return Partition.from_c_mask(is_c)


@numba.njit(cache=True)
def _row_ok(i, in_f, indptr, indices, absdata, diag, eta):
    s = diag[i]
    for p in range(indptr[i], indptr[i + 1]):
        if in_f[indices[p]]:
            s += absdata[p]
    return diag[i] >= eta * s


@numba.njit(cache=True)
def _flip_delta(i, in_f, ok, indptr, indices, absdata, tptr, tind, diag, eta):
    """Fitness change from flipping point ``i``; leaves state untouched."""
    delta = 0
    in_f[i] = not in_f[i]
    for p in range(tptr[i], tptr[i + 1]):
        k = tind[p]
        if k == i or not in_f[k]:
            continue
        now = _row_ok(k, in_f, indptr, indices, absdata, diag, eta)
        delta += int(now) - int(ok[k])
    if in_f[i]:
        delta += int(_row_ok(i, in_f, indptr, indices, absdata, diag, eta))
    else:
        delta -= int(ok[i])
    in_f[i] = not in_f[i]
    return delta


@numba.njit(cache=True)
def _apply_flip(i, in_f, ok, indptr, indices, absdata, tptr, tind, diag, eta):
    in_f[i] = not in_f[i]
    for p in range(tptr[i], tptr[i + 1]):
        k = tind[p]
        if in_f[k]:
            ok[k] = _row_ok(k, in_f, indptr, indices, absdata, diag, eta)
        else:
            ok[k] = False
    if in_f[i]:
        ok[i] = _row_ok(i, in_f, indptr, indices, absdata, diag, eta)
    else:
        ok[i] = False


@numba.njit(cache=True)
def _anneal(in_f, order, indptr, indices, absdata, tptr, tind, diag, eta, subdomain_size,
            sweeps, steps, t0, cooling, seed, swap_prob, visit_decay):
    np.random.seed(seed)
    n = in_f.size
    ok = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        if in_f[i]:
            ok[i] = _row_ok(i, in_f, indptr, indices, absdata, diag, eta)
    n_sub = (n + subdomain_size - 1) // subdomain_size
    temp = t0
    for sweep in range(sweeps):
        for s in range(n_sub):
            lo = s * subdomain_size
            hi = min(n, lo + subdomain_size)
            best = in_f[order[lo:hi]]
            fit = 0
            best_fit = 0
            for step in range(steps):
                # temperature decays geometrically within a visit
                t = temp * visit_decay ** (step / steps)
                i = order[lo + np.random.randint(hi - lo)]
                # swap move: exchange the roles of i and a neighbour of the other kind
                j = -1
                if swap_prob > 0.0 and np.random.random() < swap_prob:
                    deg = indptr[i + 1] - indptr[i]
                    if deg > 0:
                        cand = indices[indptr[i] + np.random.randint(deg)]
                        if cand != i and in_f[cand] != in_f[i]:
                            j = cand
                d = _flip_delta(i, in_f, ok, indptr, indices, absdata, tptr, tind, diag, eta)
                if j >= 0:
                    _apply_flip(i, in_f, ok, indptr, indices, absdata, tptr, tind, diag, eta)
                    d += _flip_delta(j, in_f, ok, indptr, indices, absdata, tptr, tind, diag, eta)
                    _apply_flip(i, in_f, ok, indptr, indices, absdata, tptr, tind, diag, eta)
                if d >= 0 or np.random.random() < np.exp(d / t):
                    _apply_flip(i, in_f, ok, indptr, indices, absdata, tptr, tind, diag, eta)
                    if j >= 0:
                        _apply_flip(j, in_f, ok, indptr, indices, absdata, tptr, tind, diag,
                                    eta)
                    fit += d
                    if fit > best_fit:
                        best_fit = fit
                        best[:] = in_f[order[lo:hi]]
            # restore the best configuration of this visit
            for q in range(lo, hi):
                i = order[q]
                if in_f[i] != best[q - lo]:
                    _apply_flip(i, in_f, ok, indptr, indices, absdata, tptr, tind, diag, eta)
        temp *= cooling
    return in_f


@numba.njit(cache=True)
def _fill(in_f, indptr, indices, absdata, tptr, tind, diag, eta):
    """Move C points to F while every affected F row stays feasible."""
    changed = True
    while changed:
        changed = False
        for i in range(in_f.size):
            if in_f[i]:
                continue
            in_f[i] = True
            good = _row_ok(i, in_f, indptr, indices, absdata, diag, eta)
            if good:
                for p in range(tptr[i], tptr[i + 1]):
                    k = tind[p]
                    if k != i and in_f[k] and not _row_ok(k, in_f, indptr, indices, absdata,
                                                          diag, eta):
                        good = False
                        break
            if good:
                changed = True
            else:
                in_f[i] = False
    return in_f


def sa_partition(A, cfg, init=None):
    """Simulated-annealing refinement of an F/C partition.

    Fitness is the number of F points satisfying the dominance constraint.
    Subdomains are contiguous blocks of the configured ordering (reverse
    Cuthill-McKee by default), visited in order, each visit
    keeping its best configuration.  Violating F points left at the end are
    moved to C, so the result is always feasible.  ``init`` defaults to all
    points in C.  After annealing, a final pass moves C points to F wherever
    that keeps the partition feasible; with no annealing steps the repaired
    ``init`` is returned unchanged.
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    prm = cfg.sa_params
    if init is None:
        in_f = np.zeros(n, dtype=np.bool_)
    else:
        in_f = ~init.c_mask
    indptr, indices, absdata = _abs_csr(A)
    # the diagonal is accounted separately in _row_ok
    offdiag = indices != np.repeat(np.arange(n), np.diff(indptr))
    absdata = np.where(offdiag, absdata, 0.0)
    At = sp.csr_matrix(sp.csr_matrix((absdata + 1.0, indices, indptr), shape=A.shape).T)
    At.sort_indices()
    tptr, tind = At.indptr.astype(np.int64), At.indices.astype(np.int64)
    diag = _diag(A)
    annealed = prm.steps_per_subdomain > 0 and prm.sweeps > 0 and n > 0
    if annealed:
        if prm.ordering == "rcm":
            order = reverse_cuthill_mckee(sp.csr_matrix(A), symmetric_mode=False)
        else:
            order = np.arange(n)
        in_f = _anneal(in_f.copy(), order.astype(np.int64), indptr, indices, absdata, tptr, tind,
                       diag, cfg.eta, max(1, prm.subdomain_size), prm.sweeps,
                       prm.steps_per_subdomain, prm.initial_temperature, prm.cooling, prm.seed,
                       prm.swap_prob, prm.visit_decay)
    part = repair(A, Partition.from_c_mask(~in_f), cfg.eta)
    if annealed:
        in_f = _fill(~part.c_mask, indptr, indices, absdata, tptr, tind, diag, cfg.eta)
        part = Partition.from_c_mask(~in_f)
    if n > 1 and part.c_set.size == 0:
        is_c = part.c_mask
        is_c[n - 1] = True
        part = Partition.from_c_mask(is_c)
    return part


def geometric_semicoarsen(nx, ny, cfg):
    """C = grid lines whose index along the coarsened axis is ``offset`` mod ``factor``."""
    g = cfg.geometric_params
    extent = ny if g.axis == "y" else nx
    if g.factor >= extent:
        raise ValueError(f"factor {g.factor} too large for {extent} grid lines")
    iy, ix = np.divmod(np.arange(nx * ny), nx)
    coord = iy if g.axis == "y" else ix
    return Partition.from_c_mask(coord % g.factor == g.offset % g.factor)


def partition(A, cfg, nx=None, ny=None):
    """Partition `A` with the method selected in `cfg`."""
    if cfg.method == "greedy":
        return greedy_partition(A, cfg)
    if cfg.method == "annealed":
        return sa_partition(A, cfg)
    g = cfg.geometric_params
    return geometric_semicoarsen(nx or g.nx, ny or g.ny, cfg)


def save_partition(path, part):
    """Two lines of space-separated indices: F then C."""
    with open(path, "w") as fh:
        fh.write(" ".join(map(str, part.f_set)) + "\n")
        fh.write(" ".join(map(str, part.c_set)) + "\n")


def load_partition(path):
    with open(path) as fh:
        lines = fh.read().split("\n")
    lines += ["", ""]
    f = [int(t) for t in lines[0].split()]
    c = [int(t) for t in lines[1].split()]
    return Partition(np.array(f, dtype=np.int64), np.array(c, dtype=np.int64))
