import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from amgr.mesh import (TriMesh, fe_p1_assemble, generated_mesh, load_mesh, p1_element_stiffness,
                       refine, refine_and_smooth, save_mesh, square_mesh)
from amgr.problems import ProblemSpec, Region
from amgr.sparse import is_symmetric

REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
ISO = ProblemSpec("fe_p1", regions=[Region(0.0, 1.0)])


def structured_mesh(n):
    """Right triangles on an (n+1) x (n+1) lattice, each square cut along its NE diagonal."""
    s = np.linspace(0, 1, n + 1)
    X, Y = np.meshgrid(s, s)
    v = np.column_stack([X.ravel(), Y.ravel()])
    tris = []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            tris += [[a, a + 1, a + n + 2], [a, a + n + 2, a + n + 1]]
    return TriMesh(v, tris)


def test_reference_element():
    K = p1_element_stiffness(REF)
    assert_allclose(K, [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]])
    assert_allclose(K.sum(axis=1), 0, atol=1e-15)


def test_element_scales_with_tensor():
    K = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert_allclose(p1_element_stiffness(REF, 3 * K), 3 * p1_element_stiffness(REF, K))


def test_element_degenerate():
    with pytest.raises(ValueError):
        p1_element_stiffness([[0, 0], [1, 1], [2, 2]])


def test_assembly_matches_elementwise_oracle():
    mesh = generated_mesh(n_side=5, levels=0, seed=3)
    spec = ProblemSpec("fe_p1", regions=[Region(0.4, 0.1, c=2.0)])
    k11, k12, k22, c = spec.coefficients(np.array([0.5]), np.array([0.5]))
    K = np.array([[k11[0], k12[0]], [k12[0], k22[0]]])
    c = c[0]
    nv = mesh.n_vertices
    full = np.zeros((nv, nv))
    for t, area in zip(mesh.triangles, mesh.areas):
        full[np.ix_(t, t)] += p1_element_stiffness(mesh.vertices[t], K)
        full[t, t] += c * area / 3
    keep = mesh.interior
    assert_allclose(fe_p1_assemble(mesh, spec).toarray(), full[np.ix_(keep, keep)], atol=1e-13)


def test_structured_gives_five_point():
    n = 6
    A = fe_p1_assemble(structured_mesh(n), ISO).toarray()
    i = 2 * (n - 1) + 2
    row = A[i].reshape(n - 1, n - 1)
    expected = np.zeros((n - 1, n - 1))
    expected[2, 2] = 4
    expected[1, 2] = expected[3, 2] = expected[2, 1] = expected[2, 3] = -1
    assert_allclose(row, expected, atol=1e-13)


def test_refine_square():
    m = refine(square_mesh())
    assert (m.n_vertices, m.n_triangles) == (9, 8)
    assert m.interior.size == 1
    assert_allclose(m.areas.sum(), 1.0)


def test_refinement_growth_and_areas():
    m0 = generated_mesh(n_side=6, levels=0)
    m3 = refine_and_smooth(m0, 3)
    assert m3.n_triangles == 4 ** 3 * m0.n_triangles
    assert np.all(m3.areas > 0)
    assert_allclose(m3.areas.sum(), 1.0)
    assert refine_and_smooth(m0, 0) is m0


def test_boundary_detection_and_orientation():
    m = TriMesh(REF, [[0, 2, 1]])  # clockwise input is flipped
    assert m.areas[0] > 0
    assert m.boundary.all()


def test_invalid_meshes():
    with pytest.raises(ValueError):
        TriMesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])
    with pytest.raises(ValueError):
        TriMesh(REF, [[0, 1, 3]])


def test_generated_mesh_matrix():
    m = generated_mesh(n_side=8, levels=1)
    A = fe_p1_assemble(m, ISO)
    assert A.shape[0] == m.interior.size
    assert is_symmetric(A)
    assert np.linalg.eigvalsh(A.toarray()).min() > 0


def test_save_load(tmp_path):
    m = generated_mesh(n_side=6, levels=1)
    save_mesh(tmp_path / "m.txt", m)
    back = load_mesh(tmp_path / "m.txt")
    assert_array_equal(back.vertices, m.vertices)
    assert_array_equal(back.triangles, m.triangles)
    assert_array_equal(back.boundary, m.boundary)


def test_load_malformed(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("3 1\n0 0\n1 0\n")
    with pytest.raises(ValueError):
        load_mesh(p)
