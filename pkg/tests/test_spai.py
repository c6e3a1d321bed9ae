import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from amgr.spai import pattern_of, spai

from conftest import lap1d, random_spd


def dense_oracle(A, B, S):
    """Column-wise least squares with numpy on the dense blocks."""
    A, B, S = A.toarray(), B.toarray(), S.toarray().astype(bool)
    M = np.zeros(S.shape)
    for j in range(S.shape[1]):
        rows = np.flatnonzero(S[:, j])
        if rows.size:
            M[rows, j] = np.linalg.lstsq(A[:, rows], B[:, j], rcond=None)[0]
    return M


def test_identity():
    I = sp.identity(3, format="csr")
    assert_array_equal(spai(I, I, I).toarray(), np.eye(3))


def test_diagonal_exact():
    A = sp.diags([2.0, 4.0], format="csr")
    assert_allclose(spai(A, sp.identity(2), sp.identity(2)).toarray(), np.diag([0.5, 0.25]))


def test_full_pattern_exact(rng):
    A = random_spd(8, 0.5, rng)
    M = spai(A, sp.identity(8), np.ones((8, 8)))
    assert_allclose(M.toarray(), np.linalg.inv(A.toarray()), atol=1e-10)


def test_diagonal_pattern_on_laplacian():
    # one unknown per column: m_jj = <a_j, e_j> / |a_j|^2
    A = lap1d(3)
    M = spai(A, sp.identity(3), sp.identity(3)).toarray()
    assert_allclose(np.diag(M), [2 / 5, 2 / 6, 2 / 5])


def test_pattern_containment(rng):
    A = random_spd(30, 0.1, rng)
    S = sp.random(30, 30, density=0.1, random_state=rng, format="csr")
    M = spai(A, sp.identity(30), S)
    extra = pattern_of(M).astype(int) - pattern_of(M).multiply(pattern_of(S)).astype(int)
    assert not extra.toarray().any()


@given(st.integers(2, 25), st.integers(0, 10**6))
def test_matches_dense_oracle(n, seed):
    rng = np.random.default_rng(seed)
    A = random_spd(n, 0.3, rng)
    B = sp.random(n, 4, density=0.4, random_state=rng, format="csr")
    S = sp.random(n, 4, density=0.3, random_state=rng, format="csr")
    M = spai(A, B, S).toarray()
    ref = dense_oracle(A, B, S)
    scale = max(abs(ref).max(), 1.0)
    assert_allclose(M, ref, atol=1e-10 * scale)


def test_residual_monotone_in_pattern(rng):
    A = random_spd(25, 0.15, rng)
    I = sp.identity(25, format="csr")
    small = pattern_of(A)
    large = pattern_of(A @ A)
    r_small = np.linalg.norm((I - A @ spai(A, I, small)).toarray())
    r_large = np.linalg.norm((I - A @ spai(A, I, large)).toarray())
    assert r_large <= r_small + 1e-12


def test_scaling_covariance(rng):
    A = random_spd(20, 0.2, rng)
    B = sp.random(20, 5, density=0.3, random_state=rng, format="csr")
    S = pattern_of(A @ abs(B))
    M = spai(A, B, S).toarray()
    assert_allclose(spai(3.0 * A, B, S).toarray(), M / 3.0, rtol=1e-10, atol=1e-14)
    assert_allclose(spai(A, 2.0 * B, S).toarray(), 2.0 * M, rtol=1e-10, atol=1e-14)


def test_counters():
    # columns 0 and 1 of A are identical, so a pattern using both is rank deficient
    A = sp.csr_matrix(np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
    B = sp.csr_matrix(np.ones((2, 2)))
    S = sp.csr_matrix(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 0.0]]))
    M, info = spai(A, B, S, return_info=True)
    assert info.rank_deficient == 1
    assert info.empty_columns == 1
    assert_allclose(M.toarray()[:2, 0], [0.5, 0.5])  # minimum-norm solution
    assert M[:, 1].nnz == 0


def test_shape_errors():
    with pytest.raises(ValueError):
        spai(lap1d(3), sp.identity(4), sp.identity(3))
    with pytest.raises(ValueError):
        spai(lap1d(3), sp.identity(3), sp.identity(4))
