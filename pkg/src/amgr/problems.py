"""Rotated anisotropic diffusion(-reaction) matrices on uniform grids.

The continuous problem is ``-div(K grad u) + c u = f`` on the unit square with
homogeneous Dirichlet conditions and ``K = Q H Q^T``.  An ``n x n`` grid means
``n x n`` interior unknowns with mesh width ``h = 1/(n+1)``, ordered
lexicographically with x varying fastest; boundary unknowns are eliminated.

Angles are measured so that ``theta = pi/4`` aligns the strong diffusion with
the north-east/south-west grid diagonal.  This is the mirror image (x -> -x) of
the counter-clockwise reading of the rotation; spectra are identical.
"""

import json
import math
import re
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .sparse import canonical

__all__ = [
    "Region",
    "ProblemSpec",
    "diffusion_tensor",
    "fd_anisotropic",
    "fe_bilinear_anisotropic",
    "bilinear_element_matrices",
    "build_matrix",
    "load_problem_config",
    "problem_from_dict",
    "parse_angle",
]

H_FIRST_SMALL = "H_first_small"
H_SECOND_SMALL = "H_second_small"


@dataclass
class Region:
    """Axis-aligned box ``[x0, x1) x [y0, y1)`` with constant coefficients.

    ``aniso`` is the small eigenvalue of ``H`` (``1e-6`` in the grid-aligned
    examples, ``delta`` in the four-quadrant family).
    """

    theta: float = 0.0
    aniso: float = 1.0
    c: float = 0.0
    x_range: tuple = (0.0, 1.0)
    y_range: tuple = (0.0, 1.0)

    def contains(self, x, y):
        x0, x1 = self.x_range
        y0, y1 = self.y_range
        inx = (x >= x0) & ((x < x1) | (x1 >= 1.0))
        iny = (y >= y0) & ((y < y1) | (y1 >= 1.0))
        return inx & iny


@dataclass
class ProblemSpec:
    discretization: str = "fe_bilinear"
    nx: int = 32
    ny: int = 32
    regions: list = field(default_factory=lambda: [Region()])
    convention: str = H_FIRST_SMALL
    name: str = ""
    mesh_path: str = None
    mesh: dict = None

    def __post_init__(self):
        if self.discretization not in ("fd", "fe_bilinear", "fe_p1"):
            raise ValueError(f"unknown discretization {self.discretization!r}")
        if self.convention not in (H_FIRST_SMALL, H_SECOND_SMALL):
            raise ValueError(f"unknown H convention {self.convention!r}")
        if self.discretization != "fe_p1" and (self.nx < 2 or self.ny < 2):
            raise ValueError("grids need at least 2 interior unknowns per side")
        for r in self.regions:
            if r.aniso <= 0:
                raise ValueError("anisotropy values must be positive")

    @property
    def h(self):
        return 1.0 / (self.nx + 1), 1.0 / (self.ny + 1)

    def coefficients(self, x, y):
        """Return ``(k11, k12, k22, c)`` arrays sampled at the points ``(x, y)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        k = np.full((4,) + x.shape, np.nan)
        for r in self.regions:
            mask = r.contains(x, y) & np.isnan(k[0])
            k11, k12, k22 = diffusion_tensor(r.theta, r.aniso, self.convention)
            k[0][mask], k[1][mask], k[2][mask], k[3][mask] = k11, k12, k22, r.c
        if np.isnan(k[0]).any():
            raise ValueError("regions do not cover the whole domain")
        return k[0], k[1], k[2], k[3]


_ANGLE = re.compile(r"^\s*(?:(\d+(?:\.\d*)?)\s*\*?\s*)?pi\s*(?:/\s*(\d+(?:\.\d*)?))?\s*$")


def parse_angle(v):
    """Angles as numbers or strings such as ``"pi/6"`` or ``"3*pi/4"``."""
    if isinstance(v, (int, float)):
        return float(v)
    m = _ANGLE.match(str(v))
    if not m:
        try:
            return float(v)
        except ValueError:
            raise ValueError(f"cannot parse angle {v!r}") from None
    num = float(m.group(1)) if m.group(1) else 1.0
    den = float(m.group(2)) if m.group(2) else 1.0
    return num * math.pi / den


def diffusion_tensor(theta, aniso, convention=H_FIRST_SMALL):
    """Entries ``(k11, k12, k22)`` of the rotated tensor ``Q H Q^T``."""
    if convention == H_FIRST_SMALL:
        h1, h2 = aniso, 1.0
    else:
        h1, h2 = 1.0, aniso
    c, s = math.cos(theta), math.sin(theta)
    k11 = c * c * h1 + s * s * h2
    k22 = s * s * h1 + c * c * h2
    k12 = c * s * (h2 - h1)
    return k11, k12, k22


def _grid_index(nx, ny):
    """Map node coordinates (0..nx+1, 0..ny+1) to unknown numbers, -1 on the boundary."""
    idx = -np.ones((ny + 2, nx + 2), dtype=np.int64)
    idx[1:-1, 1:-1] = np.arange(nx * ny).reshape(ny, nx)
    return idx


def fd_anisotropic(spec):
    """Nine-point finite-difference matrix (scaled by ``1/h^2``).

    Second derivatives use centred differences and the mixed derivative the
    symmetric four-corner average.  Off-diagonal couplings use the mean of the
    coefficients at their two end nodes so the matrix stays symmetric when
    coefficients jump.
    """
    nx, ny = spec.nx, spec.ny
    hx, hy = spec.h
    if not math.isclose(hx, hy):
        raise ValueError("finite differences need a square mesh")
    h2 = hx * hx
    jj, ii = np.meshgrid(np.arange(1, ny + 1), np.arange(1, nx + 1), indexing="ij")
    k11, k12, k22, c = spec.coefficients(ii * hx, jj * hy)
    idx = _grid_index(nx, ny)
    me = idx[1:-1, 1:-1]

    rows, cols, vals = [me.ravel()], [me.ravel()], [((2 * k11 + 2 * k22) / h2 + c).ravel()]
    # (di, dj, coefficient generator) for neighbours; corners carry the mixed term
    offsets = [
        (1, 0, lambda a, b, d: -a / h2),
        (-1, 0, lambda a, b, d: -a / h2),
        (0, 1, lambda a, b, d: -d / h2),
        (0, -1, lambda a, b, d: -d / h2),
        (1, 1, lambda a, b, d: -b / (2 * h2)),
        (-1, -1, lambda a, b, d: -b / (2 * h2)),
        (-1, 1, lambda a, b, d: b / (2 * h2)),
        (1, -1, lambda a, b, d: b / (2 * h2)),
    ]
    K = np.stack([k11, k12, k22])
    Kpad = np.full((3, ny + 2, nx + 2), np.nan)
    Kpad[:, 1:-1, 1:-1] = K
    for di, dj, coef in offsets:
        nb = idx[1 + dj:ny + 1 + dj, 1 + di:nx + 1 + di]
        Knb = Kpad[:, 1 + dj:ny + 1 + dj, 1 + di:nx + 1 + di]
        mask = nb >= 0
        Kavg = 0.5 * (K + Knb)
        v = coef(Kavg[0], Kavg[1], Kavg[2])
        rows.append(me[mask])
        cols.append(nb[mask])
        vals.append(v[mask])
    n = nx * ny
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return canonical(A.tocsr())


_GAUSS = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))
# local node order: (0,0), (1,0), (0,1), (1,1) on the reference square
_LOCAL = ((0, 0), (1, 0), (0, 1), (1, 1))


def bilinear_element_matrices(hx=1.0, hy=1.0):
    """Reference stiffness pieces and mass matrix of a bilinear element.

    Returns ``(Kxx, Kxy, Kyy, M)`` with ``Kxy`` symmetric, so that the
    element matrix for a constant tensor is
    ``k11*Kxx + k12*Kxy + k22*Kyy + c*M``.  Integrals use 2x2 Gauss points.
    """
    Kxx = np.zeros((4, 4))
    Kxy = np.zeros((4, 4))
    Kyy = np.zeros((4, 4))
    M = np.zeros((4, 4))
    w = 0.25 * hx * hy
    for gx in _GAUSS:
        for gy in _GAUSS:
            phi = np.array([(gx if a else 1 - gx) * (gy if b else 1 - gy) for a, b in _LOCAL])
            dx = np.array([(1 if a else -1) * (gy if b else 1 - gy) / hx for a, b in _LOCAL])
            dy = np.array([(gx if a else 1 - gx) * (1 if b else -1) / hy for a, b in _LOCAL])
            Kxx += w * np.outer(dx, dx)
            Kyy += w * np.outer(dy, dy)
            Kxy += w * (np.outer(dx, dy) + np.outer(dy, dx))
            M += w * np.outer(phi, phi)
    return Kxx, Kxy, Kyy, M


def fe_bilinear_anisotropic(spec):
    """Bilinear finite-element stiffness (+ consistent mass reaction) matrix.

    Coefficients are constant per element, sampled at the element centroid.
    """
    nx, ny = spec.nx, spec.ny
    hx, hy = spec.h
    Kxx, Kxy, Kyy, M = bilinear_element_matrices(hx, hy)
    ey, ex = np.meshgrid(np.arange(ny + 1), np.arange(nx + 1), indexing="ij")
    ex, ey = ex.ravel(), ey.ravel()
    k11, k12, k22, c = spec.coefficients((ex + 0.5) * hx, (ey + 0.5) * hy)
    idx = _grid_index(nx, ny)
    nodes = np.stack([idx[ey + b, ex + a] for a, b in _LOCAL], axis=1)

    rows, cols, vals = [], [], []
    for p in range(4):
        for q in range(4):
            v = k11 * Kxx[p, q] + k12 * Kxy[p, q] + k22 * Kyy[p, q] + c * M[p, q]
            mask = (nodes[:, p] >= 0) & (nodes[:, q] >= 0)
            rows.append(nodes[mask, p])
            cols.append(nodes[mask, q])
            vals.append(v[mask])
    n = nx * ny
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return canonical(A.tocsr())


def build_matrix(spec):
    """Dispatch on ``spec.discretization``."""
    if spec.discretization == "fd":
        return fd_anisotropic(spec)
    if spec.discretization == "fe_bilinear":
        return fe_bilinear_anisotropic(spec)
    from .mesh import fe_p1_assemble, load_mesh, TriMesh

    if spec.mesh is not None:
        mesh = TriMesh(**spec.mesh) if isinstance(spec.mesh, dict) else spec.mesh
    elif spec.mesh_path:
        mesh = load_mesh(spec.mesh_path)
    else:
        raise ValueError("fe_p1 problems need a mesh or mesh_path")
    return fe_p1_assemble(mesh, spec)


PROBLEM_KEYS = {"discretization", "n", "nx", "ny", "grid_counts_boundary", "regions", "theta",
                "aniso", "c", "convention", "name", "mesh_path", "mesh", "seed", "note"}


def problem_from_dict(cfg):
    """Build a :class:`ProblemSpec` from the JSON problem-config layout.

    ``theta``/``aniso``/``c`` at top level describe a single region.  ``mesh``
    may hold generator arguments ``{"n_side", "levels", "seed", "bounds"}``
    for :func:`amgr.mesh.generated_mesh`.  ``seed`` and ``note`` are ignored.
    """
    cfg = dict(cfg)
    unknown = set(cfg) - PROBLEM_KEYS
    if unknown:
        raise ValueError(f"unknown problem keys {sorted(unknown)}")
    n = cfg.pop("n", None)
    if n is not None:
        if cfg.pop("grid_counts_boundary", False):
            n = n - 2
        cfg.setdefault("nx", n)
        cfg.setdefault("ny", n)
    if "regions" in cfg:
        raw = cfg["regions"]
    else:
        raw = [{k: cfg[k] for k in ("theta", "aniso", "c") if k in cfg}]
    regions = []
    for r in raw:
        r = {k: (tuple(v) if k.endswith("_range") else v) for k, v in r.items()}
        if "theta" in r:
            r["theta"] = parse_angle(r["theta"])
        regions.append(Region(**r))
    mesh = cfg.get("mesh")
    if isinstance(mesh, dict) and "vertices" not in mesh:
        from .mesh import generated_mesh

        mesh = generated_mesh(**mesh)
    keep = {k: cfg[k] for k in ("discretization", "nx", "ny", "convention", "name", "mesh_path")
            if k in cfg}
    return ProblemSpec(regions=regions, mesh=mesh, **keep)


def load_problem_config(path):
    with open(path) as fh:
        return problem_from_dict(json.load(fh))
