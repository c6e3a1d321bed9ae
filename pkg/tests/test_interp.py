import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose, assert_array_equal

from amgr.coarsen import CoarsenConfig, Partition, geometric_semicoarsen, greedy_partition
from amgr.interp import (InterpConfig, assemble_prolongator, build_interpolation,
                         constant_scaling, interp_pattern, relaxed_vector, truncate_rows)
from amgr.problems import ProblemSpec, Region, build_matrix
from amgr.sparse import extract_submatrix
from amgr.strength import lumped_matrix

from conftest import lap1d, lap2d, random_spd

N = 16


def fe_setup(theta):
    A = lumped_matrix(build_matrix(ProblemSpec("fe_bilinear", N, N, [Region(theta, 1e-6)])))
    part = geometric_semicoarsen(N, N, CoarsenConfig(method="geometric"))
    return A, part


@pytest.mark.parametrize("theta, count", [(0.0, 2), (np.pi / 6, 5)])
def test_pattern_size_away_from_boundary(theta, count):
    A, part = fe_setup(theta)
    S = interp_pattern(extract_submatrix(A, part.f_set, part.f_set),
                       extract_submatrix(A, part.f_set, part.c_set)).tocsr()
    per_row = np.diff(S.indptr)
    ix, iy = part.f_set % N, part.f_set // N
    inner = (ix >= 2) & (ix <= N - 3) & (iy >= 2) & (iy <= N - 3)
    assert np.all(per_row[inner] == count)


class TestTruncation:
    def test_examples(self):
        W = sp.csr_matrix([[0.1, 0.5, 1.0]])
        assert_array_equal(truncate_rows(W, 0.2).toarray(), [[0, 0.5, 1.0]])
        assert_array_equal(truncate_rows(W, 0.0).toarray(), W.toarray())
        assert_array_equal(truncate_rows(sp.csr_matrix([[-2.0, 0.3]]), 0.2).toarray(),
                           [[-2.0, 0.0]])

    def test_keeps_row_max(self, rng):
        W = sp.random(30, 10, density=0.4, random_state=rng, format="csr")
        T = truncate_rows(W, 0.9)
        full = abs(W).max(axis=1).toarray().ravel()
        kept = abs(T).max(axis=1).toarray().ravel()
        assert_array_equal(full, kept)
        assert T.nnz <= W.nnz


class TestScaling:
    def test_constant(self, rng):
        W = sp.random(20, 6, density=0.5, random_state=rng, format="csr") + 0.01 * sp.random(
            20, 6, density=0.2, random_state=rng)
        sv, Ws = constant_scaling(W)
        act = np.asarray(Ws.sum(axis=1)).ravel()
        assert_allclose(act[sv.s != 1.0], 1.0)

    def test_guarded_rows(self):
        W = sp.csr_matrix([[1.0, -1.0], [0.5, 0.0], [0.0, 0.0]])
        sv, Ws = constant_scaling(W)
        assert sv.guard_count == 2
        assert_array_equal(Ws.toarray(), [[1.0, -1.0], [1.0, 0.0], [0.0, 0.0]])

    def test_improved_hits_relaxed_vector(self):
        A = lumped_matrix(lap2d(12))
        part = greedy_partition(A, CoarsenConfig(eta=0.65))
        P, info = build_interpolation(A, part, return_info=True)
        z = relaxed_vector(A)
        W = P[part.f_set][:, :]
        got = W @ z[part.c_set]
        ok = np.ones(part.f_set.size, dtype=bool) if info.guard_count == 0 else info.scaling.s != 1
        assert_allclose(got[ok], z[part.f_set][ok], rtol=1e-12)

    def test_zero_sweeps_is_constant(self, rng):
        A = lumped_matrix(random_spd(40, 0.1, rng))
        part = greedy_partition(A, CoarsenConfig(eta=0.6))
        P1 = build_interpolation(A, part, InterpConfig(scaling="improved_iteration", n_wj=0))
        P2 = build_interpolation(A, part, InterpConfig(scaling="constant"))
        assert_allclose(P1.toarray(), P2.toarray(), rtol=1e-13, atol=1e-15)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            InterpConfig(zeta=1.0)
        with pytest.raises(ValueError):
            InterpConfig(scaling="magic")


def test_identity_on_c(rng):
    A = lumped_matrix(random_spd(50, 0.08, rng))
    part = greedy_partition(A, CoarsenConfig(eta=0.7))
    P = build_interpolation(A, part, InterpConfig(zeta=0.25))
    assert P.shape == (50, part.c_set.size)
    assert_array_equal(P[part.c_set].toarray(), np.eye(part.c_set.size))


def test_diagonal_aff_is_exact():
    # 1D Laplacian with alternating F/C: A_FF is diagonal, so W = -A_FF^{-1} A_FC exactly
    A = lap1d(7)
    part = Partition([0, 2, 4, 6], [1, 3, 5])
    P = build_interpolation(A, part, InterpConfig(scaling="none"))
    A_ff = extract_submatrix(A, part.f_set, part.f_set).toarray()
    A_fc = extract_submatrix(A, part.f_set, part.c_set).toarray()
    assert_allclose(P[part.f_set].toarray(), -np.linalg.solve(A_ff, A_fc), atol=1e-15)
    assert_allclose(P[[2]].toarray(), [[0.5, 0.5, 0.0]])


def test_all_coarse():
    P = assemble_prolongator(sp.csr_matrix((0, 3)), Partition([], [0, 1, 2]))
    assert_array_equal(P.toarray(), np.eye(3))
