import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from amgr.coarsen import (CoarsenConfig, GeometricParams, Partition, SAParams, dominance_measure,
                          geometric_semicoarsen, greedy_partition, is_feasible, load_partition,
                          repair, sa_partition, save_partition)
from amgr.sparse import extract_submatrix

from conftest import lap1d, lap2d, random_spd


def brute_force_max_f(A, eta):
    """Largest feasible |F| by enumerating all 2^n subsets."""
    n = A.shape[0]
    best = 0
    for mask in itertools.product((False, True), repeat=n):
        f = np.flatnonzero(mask)
        if f.size > best and np.all(dominance_measure(A, f) >= eta):
            best = f.size
    return best


def sa_cfg(eta, seed=0, **kw):
    return CoarsenConfig(eta=eta, method="annealed", sa_params=SAParams(seed=seed, **kw))


class TestPartition:
    def test_cover_and_disjoint(self):
        with pytest.raises(ValueError):
            Partition([0, 1], [1, 2])
        with pytest.raises(ValueError):
            Partition([0], [2])

    def test_round_trip(self, tmp_path):
        p = Partition([0, 2, 3], [1, 4])
        save_partition(tmp_path / "p.txt", p)
        q = load_partition(tmp_path / "p.txt")
        assert_array_equal(p.f_set, q.f_set)
        assert_array_equal(p.c_set, q.c_set)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            CoarsenConfig(eta=0.5)
        with pytest.raises(ValueError):
            CoarsenConfig(method="random")
        with pytest.raises(ValueError):
            CoarsenConfig(geometric_params=GeometricParams(factor=1))


class TestDominance:
    def test_singleton(self, rng):
        A = random_spd(10, 0.3, rng)
        assert dominance_measure(A, [4])[0] == 1.0

    def test_laplacian_all_f(self):
        eta = dominance_measure(lap1d(5), np.arange(5))
        assert_allclose(eta, [2 / 3, 0.5, 0.5, 0.5, 2 / 3])


class TestGreedy:
    def test_diagonal_keeps_one_c(self):
        p = greedy_partition(sp.diags(np.arange(1.0, 6.0), format="csr"), CoarsenConfig())
        assert p.f_set.size == 4 and p.c_set.size == 1

    def test_n5_feasible(self):
        A = lap1d(5)
        p = greedy_partition(A, CoarsenConfig(eta=0.55))
        assert is_feasible(A, p, 0.55)
        # lowest-index tie-breaking stops one short of the optimum here
        assert brute_force_max_f(A, 0.55) == 4
        assert_array_equal(p.f_set, [0, 2, 4])

    def test_eta_one_gives_independent_set(self, rng):
        for _ in range(5):
            A = random_spd(30, 0.1, rng)
            p = greedy_partition(A, CoarsenConfig(eta=1.0))
            block = extract_submatrix(A, p.f_set, p.f_set)
            assert (block - sp.diags(block.diagonal())).nnz == 0 or \
                not (block - sp.diags(block.diagonal())).toarray().any()

    @given(st.integers(2, 40), st.floats(0.51, 1.0), st.integers(0, 2**31 - 1))
    def test_feasible_and_deterministic(self, n, eta, seed):
        A = random_spd(n, 0.2, np.random.default_rng(seed))
        p = greedy_partition(A, CoarsenConfig(eta=eta))
        assert is_feasible(A, p, eta)
        q = greedy_partition(A, CoarsenConfig(eta=eta))
        assert_array_equal(p.c_set, q.c_set)


class TestAnnealing:
    def test_zero_steps_returns_repaired_init(self):
        A = lap1d(7)
        init = Partition.from_c_mask(np.zeros(7, dtype=bool))  # all F, infeasible
        p = sa_partition(A, sa_cfg(0.55, steps_per_subdomain=0), init)
        r = repair(A, init, 0.55)
        assert_array_equal(p.c_set, r.c_set)
        assert is_feasible(A, p, 0.55)

    def test_beats_greedy_n7(self):
        A = lap1d(7)
        g = greedy_partition(A, CoarsenConfig(eta=0.55))
        s = sa_partition(A, sa_cfg(0.55, seed=3))
        assert s.f_set.size >= g.f_set.size

    def test_n5_optimal(self):
        A = lap1d(5)
        assert sa_partition(A, sa_cfg(0.55)).f_set.size == brute_force_max_f(A, 0.55)

    def test_seed_determinism(self):
        A = lap2d(6)
        p = sa_partition(A, sa_cfg(0.65, seed=11, sweeps=3))
        q = sa_partition(A, sa_cfg(0.65, seed=11, sweeps=3))
        assert_array_equal(p.c_set, q.c_set)

    @given(st.integers(2, 30), st.floats(0.51, 0.9), st.integers(0, 1000))
    def test_always_feasible(self, n, eta, seed):
        A = random_spd(n, 0.25, np.random.default_rng(seed))
        p = sa_partition(A, sa_cfg(eta, seed=seed, sweeps=2, steps_per_subdomain=200))
        assert is_feasible(A, p, eta)
        assert p.c_set.size >= 1


class TestGeometric:
    @pytest.mark.parametrize("n, n_c", [(16, 80), (32, 320)])
    def test_semicoarsen_by_three(self, n, n_c):
        p = geometric_semicoarsen(n, n, CoarsenConfig(method="geometric"))
        assert p.c_set.size == n_c
        assert (n * n + n_c) / (n * n) == 1.3125

    def test_factor_two(self):
        cfg = CoarsenConfig(method="geometric",
                            geometric_params=GeometricParams(factor=2, offset=1))
        p = geometric_semicoarsen(4, 4, cfg)
        assert p.c_set.size == 8
        assert_array_equal(np.unique(p.c_set // 4), [1, 3])

    def test_factor_too_large(self):
        cfg = CoarsenConfig(method="geometric", geometric_params=GeometricParams(factor=5))
        with pytest.raises(ValueError):
            geometric_semicoarsen(4, 4, cfg)


@pytest.mark.parametrize("eta", [0.55, 0.65, 0.8])
def test_diagonal_approximation_bounds(eta, rng):
    eps = (2 - 2 * eta) / (2 * eta - 1)
    for A in (lap2d(10), random_spd(200, 0.03, rng), random_spd(400, 0.01, rng)):
        p = greedy_partition(A, CoarsenConfig(eta=eta))
        Aff = extract_submatrix(A, p.f_set, p.f_set).toarray()
        d = (2 - 1 / eta) * np.diag(Aff)
        E = Aff - np.diag(d)
        s = 1 / np.sqrt(d)
        lam = np.linalg.eigvalsh(s[:, None] * E * s[None, :])
        assert lam.min() >= -1e-10
        assert lam.max() <= eps + 1e-10
