import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose, assert_array_equal

from amgr.problems import ProblemSpec, Region, build_matrix
from amgr.strength import StrengthConfig, lump, lumped_matrix, strong_connections

from conftest import random_spd

N = 8
CENTER = (N // 2) * N + N // 2
OFFSETS = {"N": N, "S": -N, "E": 1, "W": -1, "NE": N + 1, "NW": N - 1, "SE": -N + 1,
           "SW": -N - 1}


def fe(theta):
    return build_matrix(ProblemSpec("fe_bilinear", N, N, [Region(theta, 1e-6)]))


def strong_dirs(S, i):
    cols = S.indices[S.indptr[i]:S.indptr[i + 1]]
    return {k for k, off in OFFSETS.items() if i + off in cols}


def test_gamma_validated():
    with pytest.raises(ValueError):
        StrengthConfig(gamma=0.0)
    with pytest.raises(ValueError):
        StrengthConfig(gamma=1.5)


@pytest.mark.parametrize("theta, expected", [
    (0.0, {"N", "S"}),
    (np.pi / 6, {"N", "S", "NE", "SW"}),
    (np.pi / 4, {"NE", "SW"}),
])
def test_fe_stencil_directions(theta, expected):
    S = strong_connections(fe(theta))
    # every interior row, not only the centre
    for iy in range(1, N - 1):
        for ix in range(1, N - 1):
            assert strong_dirs(S, iy * N + ix) == expected


def test_diagonal_has_no_strong():
    S = strong_connections(sp.diags([1.0, 2.0, 3.0], format="csr"))
    assert S.nnz == 0


def test_only_negative_offdiagonals():
    A = sp.csr_matrix(np.array([[4.0, 1.0, 2.0], [1.0, 4.0, -1.0], [2.0, -1.0, 4.0]]))
    S = strong_connections(A)
    assert_array_equal(S.toarray(), [[0, 0, 0], [0, 0, 1], [0, 1, 0]])


def test_lump_weak_positive():
    # row 1 is [-1, 4, -1, +0.5] with diagonal 4
    A = sp.csr_matrix(np.array([[1.0, 0, 0, 0], [-1.0, 4.0, -1.0, 0.5],
                                [0, 0, 1.0, 0], [0, 0, 0, 1.0]]))
    Ahat = lump(A, strong_connections(A))
    assert_allclose(Ahat.toarray()[1], [-1.0, 4.5, -1.0, 0.0])
    assert Ahat[1, 3] == 0.0


def test_lump_all_strong_is_identity():
    A = sp.csr_matrix(np.array([[2.0, -1.0], [-1.0, 2.0]]))
    assert_array_equal(lumped_matrix(A).toarray(), A.toarray())


def test_fe_theta0_reduces_to_vertical_stencil():
    Ahat = lumped_matrix(fe(0.0))
    row = Ahat[CENTER].toarray().ravel()
    nz = {int(j) - CENTER for j in np.flatnonzero(row)}
    assert nz == {-N, 0, N}
    assert abs(row.sum()) < 1e-13 * abs(row).max()


def test_row_sums_preserved(rng):
    for _ in range(20):
        A = random_spd(40, 0.1, rng)
        A = sp.csr_matrix(A + sp.random(40, 40, density=0.05, random_state=rng))
        Ahat = lumped_matrix(A)
        rs, rh = np.asarray(A.sum(axis=1)).ravel(), np.asarray(Ahat.sum(axis=1)).ravel()
        scale = np.asarray(abs(A).sum(axis=1)).ravel()
        assert np.all(np.abs(rs - rh) <= 1e-13 * scale)


def test_pattern_subset_and_diagonal(rng):
    A = random_spd(50, 0.1, rng)
    Ahat = lumped_matrix(A)
    allowed = (abs(A) + sp.identity(50)).astype(bool)
    extra = Ahat.astype(bool).astype(int) - Ahat.astype(bool).multiply(allowed).astype(int)
    assert extra.nnz == 0 or not extra.toarray().any()
    assert np.all(np.diff(Ahat.indptr) >= 1)


def test_idempotent(rng):
    for theta in (0.0, np.pi / 6, np.pi / 4):
        Ahat = lumped_matrix(fe(theta))
        again = lumped_matrix(Ahat)
        assert_allclose(again.toarray(), Ahat.toarray(), atol=1e-14)
