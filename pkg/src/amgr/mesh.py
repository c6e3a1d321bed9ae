"""Unstructured triangulations and piecewise-linear finite elements.

Meshes are refined by splitting every triangle into four at its edge
midpoints and then smoothed by Laplacian averaging of interior vertices.
Dirichlet conditions are imposed on every boundary vertex, which is
eliminated from the assembled system.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import Delaunay

from .sparse import canonical

__all__ = [
    "TriMesh",
    "p1_element_stiffness",
    "fe_p1_assemble",
    "refine",
    "smooth",
    "refine_and_smooth",
    "seed_mesh",
    "generated_mesh",
    "square_mesh",
    "save_mesh",
    "load_mesh",
]

AREA_TOL = 1e-14


def _edges(triangles):
    """Unique sorted edges and, for each triangle, the indices of its three edges."""
    e = np.concatenate([triangles[:, [1, 2]], triangles[:, [2, 0]], triangles[:, [0, 1]]])
    e.sort(axis=1)
    uniq, inv, counts = np.unique(e, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(3, -1).T
    return uniq, inv, counts


def _signed_areas(vertices, triangles):
    p0, p1, p2 = (vertices[triangles[:, k]] for k in range(3))
    d1, d2 = p1 - p0, p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


@dataclass
class TriMesh:
    """Vertices, counter-clockwise triangles and a boundary-vertex mask.

    ``boundary`` defaults to the endpoints of edges that belong to a single
    triangle.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        nv = self.vertices.shape[0]
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= nv):
            raise ValueError("triangle references a vertex that does not exist")
        area = _signed_areas(self.vertices, self.triangles)
        if np.any(np.abs(area) <= AREA_TOL):
            raise ValueError("mesh contains a degenerate triangle")
        flip = area < 0
        self.triangles[flip] = self.triangles[flip][:, [0, 2, 1]]
        if self.boundary is None:
            edges, _, counts = _edges(self.triangles)
            mask = np.zeros(nv, dtype=bool)
            mask[edges[counts == 1].ravel()] = True
            self.boundary = mask
        else:
            b = np.asarray(self.boundary)
            if b.dtype != bool:
                mask = np.zeros(nv, dtype=bool)
                mask[b.astype(np.int64)] = True
                b = mask
            if b.shape != (nv,):
                raise ValueError("boundary mask has the wrong length")
            self.boundary = b

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def areas(self):
        return _signed_areas(self.vertices, self.triangles)

    @property
    def interior(self):
        return np.flatnonzero(~self.boundary)


def p1_element_stiffness(coords, K=np.eye(2)):
    """Stiffness ``area * G K G^T`` of one linear triangle (rows of G are gradients).

    >>> p1_element_stiffness(np.array([[0., 0.], [1., 0.], [0., 1.]]))
    array([[ 1. , -0.5, -0.5],
           [-0.5,  0.5,  0. ],
           [-0.5,  0. ,  0.5]])
    """
    coords = np.asarray(coords, dtype=np.float64)
    T = np.array([coords[1] - coords[0], coords[2] - coords[0]]).T
    det = np.linalg.det(T)
    if abs(det) <= 2 * AREA_TOL:
        raise ValueError("degenerate triangle")
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    G = ref @ np.linalg.inv(T)
    return 0.5 * abs(det) * G @ np.asarray(K) @ G.T


def fe_p1_assemble(mesh, spec):
    """P1 stiffness plus lumped-mass reaction on the interior vertices of `mesh`.

    Coefficients are sampled at triangle centroids from ``spec`` (a
    :class:`~amgr.problems.ProblemSpec`).  Unknowns follow the vertex order
    with boundary vertices removed.
    """
    v, t = mesh.vertices, mesh.triangles
    p = v[t]  # (nt, 3, 2)
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    if np.any(np.abs(det) <= 2 * AREA_TOL):
        raise ValueError("mesh contains a degenerate triangle")
    area = 0.5 * np.abs(det)
    # gradients of the barycentric functions: rotate the opposite edge
    opp = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    grad = np.stack([-opp[..., 1], opp[..., 0]], axis=2) / det[:, None, None]
    cx, cy = p.mean(axis=1).T
    k11, k12, k22, c = spec.coefficients(cx, cy)
    Kg = np.stack([k11[:, None] * grad[..., 0] + k12[:, None] * grad[..., 1],
                   k12[:, None] * grad[..., 0] + k22[:, None] * grad[..., 1]], axis=2)
    Ke = area[:, None, None] * np.einsum("eik,ejk->eij", grad, Kg)
    Ke[:, [0, 1, 2], [0, 1, 2]] += (c * area / 3.0)[:, None]

    nv = mesh.n_vertices
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    A = sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(nv, nv))
    keep = mesh.interior
    return canonical(A[keep][:, keep])


def refine(mesh):
    """Split every triangle into four at its edge midpoints."""
    v, t = mesh.vertices, mesh.triangles
    edges, tri_edges, counts = _edges(t)
    nv = v.shape[0]
    mid = 0.5 * (v[edges[:, 0]] + v[edges[:, 1]])
    vertices = np.vstack([v, mid])
    boundary = np.concatenate([mesh.boundary, counts == 1])
    # tri_edges[:, k] is the edge opposite local vertex k
    m0, m1, m2 = (nv + tri_edges[:, k] for k in range(3))
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    triangles = np.concatenate([
        np.stack([a, m2, m1], axis=1),
        np.stack([m2, b, m0], axis=1),
        np.stack([m1, m0, c], axis=1),
        np.stack([m0, m1, m2], axis=1),
    ])
    return TriMesh(vertices, triangles, boundary)


def smooth(mesh, passes=5):
    """Laplacian smoothing of interior vertices.

    A vertex whose move would invert or flatten an adjacent triangle keeps
    its previous position.
    """
    v = mesh.vertices.copy()
    t = mesh.triangles
    edges, _, _ = _edges(t)
    nv = v.shape[0]
    adj = sp.csr_matrix((np.ones(2 * len(edges)),
                         (np.concatenate([edges[:, 0], edges[:, 1]]),
                          np.concatenate([edges[:, 1], edges[:, 0]]))), shape=(nv, nv))
    deg = np.asarray(adj.sum(axis=1)).ravel()
    movable = ~mesh.boundary & (deg > 0)
    tri_of = sp.csr_matrix((np.ones(t.size), (t.ravel(), np.repeat(np.arange(len(t)), 3))),
                           shape=(nv, len(t)))
    for _ in range(passes):
        target = v.copy()
        target[movable] = (adj @ v)[movable] / deg[movable, None]
        old = v.copy()
        v = target
        bad = _signed_areas(v, t) <= AREA_TOL
        while bad.any():
            culprits = np.flatnonzero(np.asarray(tri_of[:, bad].sum(axis=1)).ravel() > 0)
            culprits = culprits[movable[culprits] & np.any(v[culprits] != old[culprits], axis=1)]
            if culprits.size == 0:
                break
            v[culprits] = old[culprits]
            bad = _signed_areas(v, t) <= AREA_TOL
    out = TriMesh(v, t, mesh.boundary.copy())
    if np.any(out.areas <= 0):
        raise AssertionError("smoothing produced an inverted triangle")
    return out


def refine_and_smooth(mesh, levels, passes=5):
    """``levels`` rounds of 1-to-4 refinement, each followed by smoothing."""
    for _ in range(levels):
        mesh = smooth(refine(mesh), passes)
    return mesh


def square_mesh():
    """The unit square split into two triangles."""
    return TriMesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]])


def seed_mesh(n_side, seed=0, jitter=0.3, bounds=(0.0, 1.0)):
    """Delaunay triangulation of a jittered lattice on the square ``bounds``^2.

    ``n_side`` points per side on the boundary; interior lattice points are
    displaced by up to ``jitter`` times the spacing.
    """
    lo, hi = bounds
    rng = np.random.default_rng(seed)
    s = np.linspace(lo, hi, n_side)
    X, Y = np.meshgrid(s, s)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    on_bnd = (X.ravel() == lo) | (X.ravel() == hi) | (Y.ravel() == lo) | (Y.ravel() == hi)
    hspace = (hi - lo) / (n_side - 1)
    pts[~on_bnd] += rng.uniform(-jitter, jitter, size=(int((~on_bnd).sum()), 2)) * hspace
    tri = Delaunay(pts)
    return TriMesh(pts, tri.simplices)


def generated_mesh(n_side=15, levels=1, seed=0, bounds=(0.0, 1.0)):
    """Jittered seed mesh followed by ``levels`` refine-and-smooth rounds."""
    return refine_and_smooth(seed_mesh(n_side, seed, bounds=tuple(bounds)), levels)


def save_mesh(path, mesh):
    """Vertex count, triangle count, coordinates, triangles, boundary indices."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")
        fh.write(" ".join(map(str, np.flatnonzero(mesh.boundary))) + "\n")


def load_mesh(path):
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines()]
    try:
        nv, nt = (int(x) for x in lines[0].split())
        vertices = np.array([[float(x) for x in ln.split()] for ln in lines[1:1 + nv]])
        triangles = np.array([[int(x) for x in ln.split()] for ln in lines[1 + nv:1 + nv + nt]])
        tail = lines[1 + nv + nt] if len(lines) > 1 + nv + nt else ""
        boundary = np.array([int(x) for x in tail.split()], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"malformed mesh file {path}: {exc}") from None
    if vertices.shape != (nv, 2) or triangles.shape != (nt, 3):
        raise ValueError(f"malformed mesh file {path}: counts do not match")
    return TriMesh(vertices, triangles, boundary)
