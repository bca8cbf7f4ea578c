import numpy as np
import pytest

from netreg._validation import replicate_rng
from netreg.exceptions import (
    ClampingWarning,
    EmptyCommunity,
    InputError,
    IsolatedNodeWarning,
    ZeroDegreeCommunity,
)
from netreg.network import (
    NetworkEstimate,
    average_degree,
    block_laplacian,
    dcbm_probability,
    estimate_dcbm,
    estimate_sbm,
    laplacian,
    network_estimate,
    sample_inhomogeneous_er,
    sbm_probability,
)
from netreg.simulation import ScenarioConfig, default_block_matrix, population
from netreg.spectral import leading_eigvectors


def projector(B):
    return B @ B.T


class TestSampler:
    def test_zero_and_complete(self):
        n = 7
        assert not sample_inhomogeneous_er(np.zeros((n, n)), 0).any()
        A = sample_inhomogeneous_er(np.ones((n, n)), 0)
        np.testing.assert_array_equal(A, np.ones((n, n)) - np.eye(n))

    def test_symmetric_binary_zero_diagonal(self, sbm_small):
        _, P = sbm_small
        A = sample_inhomogeneous_er(P, replicate_rng(1))
        assert np.array_equal(A, A.T)
        assert set(np.unique(A)) <= {0.0, 1.0}
        assert not np.diag(A).any()

    def test_reproducible(self, sbm_small):
        _, P = sbm_small
        a = sample_inhomogeneous_er(P, replicate_rng(5, 3))
        b = sample_inhomogeneous_er(P, replicate_rng(5, 3))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, sample_inhomogeneous_er(P, replicate_rng(5, 4)))

    def test_average_degree_concentrates(self):
        cfg = ScenarioConfig(n=1000, density="sqrt_n")
        pop = population(cfg)
        d_bar = cfg.avg_degree
        ok = 0
        for seed in range(100):
            A = sample_inhomogeneous_er(pop.P, replicate_rng(seed))
            d_hat = average_degree(A)
            # Bernstein: sd of the mean degree is about sqrt(2 d / n)
            ok += abs(d_hat - d_bar) <= 3 * np.sqrt(d_bar / cfg.n) * np.sqrt(2)
            assert 0.8 * d_bar <= d_hat <= 1.2 * d_bar
        assert ok >= 99

    def test_rejects_invalid_probabilities(self):
        with pytest.raises(InputError):
            sample_inhomogeneous_er(np.full((3, 3), 1.5))
        with pytest.raises(InputError):
            sample_inhomogeneous_er(np.array([[0, 0.1], [0.2, 0]]))


class TestBlockModels:
    def test_sbm_single_community(self):
        P = sbm_probability(np.zeros(5, dtype=int), np.array([[0.3]]))
        np.testing.assert_allclose(P, 0.3)

    def test_sbm_rank_and_blocks(self, sbm_small):
        g, P = sbm_small
        assert np.linalg.matrix_rank(P) == 4
        assert P[0, 1] == pytest.approx(0.3) and P[0, -1] == pytest.approx(0.06)

    def test_sbm_permutation(self, sbm_small, rng):
        g, _ = sbm_small
        B = 0.3 * default_block_matrix(4)
        perm = rng.permutation(g.size)
        P = sbm_probability(g, B)
        np.testing.assert_array_equal(sbm_probability(g[perm], B), P[np.ix_(perm, perm)])

    def test_dcbm_reduces_to_sbm(self, sbm_small):
        g, P = sbm_small
        B = 0.3 * default_block_matrix(4)
        np.testing.assert_allclose(dcbm_probability(g, B, np.ones(g.size)), P)

    def test_dcbm_scaling(self, sbm_small, rng):
        g, _ = sbm_small
        B = 0.3 * default_block_matrix(4)
        nu = rng.uniform(0.2, 1, g.size)
        np.testing.assert_allclose(dcbm_probability(g, B, 1.5 * nu),
                                   2.25 * dcbm_probability(g, B, nu))

    def test_dcbm_clamps_with_warning(self, sbm_small):
        g, _ = sbm_small
        with pytest.warns(ClampingWarning):
            P = dcbm_probability(g, default_block_matrix(4), np.full(g.size, 2.0))
        assert P.max() == 1.0

    def test_dcbm_population_nu_range(self):
        pop = population(ScenarioConfig(n=400, network="dcbm", density="sqrt_n"))
        # normalized so each community's degree parameters sum to its size
        sums = np.bincount(pop.communities, weights=pop.nu)
        np.testing.assert_allclose(sums, np.bincount(pop.communities))


class TestEstimateSBM:
    def test_complete_block_divisor(self):
        g = np.repeat([0, 1], 5)
        A = np.zeros((10, 10))
        A[:5, :5] = 1 - np.eye(5)
        est = estimate_sbm(A, g)
        assert est.B[0, 0] == pytest.approx(5 * 4 / 25)
        assert est.B[1, 1] == 0 and est.B[0, 1] == 0

    def test_single_community_density(self, rng):
        A = sample_inhomogeneous_er(np.full((30, 30), 0.2), 1)
        est = estimate_sbm(A, np.zeros(30, dtype=int))
        assert est.B[0, 0] == pytest.approx(A.sum() / 900)

    def test_fixed_point_on_expected_matrix(self, sbm_small):
        g, P = sbm_small
        P0 = P - np.diag(np.diag(P))
        est = estimate_sbm(P0, g)
        n_k = np.bincount(g)
        B = 0.3 * default_block_matrix(4)
        # the diagonal of P is excluded, so the within-block mean shrinks by (n_k - 1) / n_k
        expected = B.copy()
        expected[np.diag_indices(4)] *= (n_k - 1) / n_k
        np.testing.assert_allclose(est.B, expected, atol=1e-12)

    def test_empty_community(self):
        with pytest.raises(EmptyCommunity):
            estimate_sbm(np.zeros((4, 4)), np.array([0, 0, 1, 1]), n_communities=3)

    def test_block_error_bound(self):
        cfg = ScenarioConfig(n=1000, density="n_two_thirds")
        pop = population(cfg)
        B_true = pop.kappa * default_block_matrix(4)
        bound = 4 * 4 * np.sqrt(pop.kappa * np.log(cfg.n)) / cfg.n
        ok = 0
        for seed in range(20):
            A = sample_inhomogeneous_er(pop.P, replicate_rng(seed))
            ok += np.abs(estimate_sbm(A, pop.communities).B - B_true).max() <= bound
        assert ok >= 19

    def test_factored_eigvectors_match_dense(self, sbm_small):
        g, P = sbm_small
        A = sample_inhomogeneous_er(P, 3)
        est = estimate_sbm(A, g)
        fast = est.eigenvectors(4).matrix
        dense = leading_eigvectors(est.matrix, 4).matrix
        np.testing.assert_allclose(projector(fast), projector(dense), atol=1e-10)


class TestEstimateDCBM:
    def test_regular_reduces_to_sbm(self):
        # two disjoint 4-cycles: every degree is 2
        A = np.zeros((8, 8))
        for base in (0, 4):
            for i in range(4):
                j = base + (i + 1) % 4
                A[base + i, j] = A[j, base + i] = 1
        g = np.repeat([0, 1], 4)
        est = estimate_dcbm(A, g)
        np.testing.assert_allclose(est.nu, 1)
        np.testing.assert_allclose(est.matrix, estimate_sbm(A, g).matrix)

    def test_nu_sums_to_community_size(self, sbm_small, rng):
        g, P = sbm_small
        A = sample_inhomogeneous_er(P, 2)
        est = estimate_dcbm(A, g)
        np.testing.assert_allclose(np.bincount(g, weights=est.nu), np.bincount(g), atol=1e-12)

    def test_zero_degree_community(self):
        A = np.zeros((4, 4))
        A[0, 1] = A[1, 0] = 1
        with pytest.raises(ZeroDegreeCommunity):
            estimate_dcbm(A, np.array([0, 0, 1, 1]))

    def test_isolated_node_floor(self):
        A = np.zeros((4, 4))
        A[0, 1] = A[1, 0] = A[2, 3] = A[3, 2] = 1
        A[1, 2] = A[2, 1] = 1
        A[0, 1] = A[1, 0] = 0
        with pytest.warns(IsolatedNodeWarning):
            est = estimate_dcbm(A, np.array([0, 0, 1, 1]))
        assert est.diagnostics["isolated_nodes"] == 1
        assert np.isfinite(est.matrix).all()

    def test_nu_error_rate(self):
        cfg = ScenarioConfig(n=1000, network="dcbm", density="sqrt_n")
        pop = population(cfg)
        rate = np.sqrt(np.log(cfg.n) / cfg.avg_degree)
        for seed in range(5):
            A = sample_inhomogeneous_er(pop.P, replicate_rng(seed))
            nu_hat = estimate_dcbm(A, pop.communities).nu
            assert np.abs(nu_hat - pop.nu).max() <= 3 * rate


class TestLaplacian:
    def test_zero(self):
        np.testing.assert_array_equal(laplacian(np.zeros((3, 3))).matrix, np.zeros((3, 3)))

    def test_path_graph(self):
        A = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
        L = laplacian(A)
        np.testing.assert_array_equal(L.matrix, [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])
        assert L.eigen_direction == "smallest"

    def test_constant_null_vector_and_psd(self, sbm_small):
        A = sample_inhomogeneous_er(sbm_small[1], 4)
        L = laplacian(A).matrix
        np.testing.assert_allclose(L @ np.ones(L.shape[0]), 0, atol=1e-12)
        assert np.linalg.eigvalsh(L).min() > -1e-10

    def test_direction_routing_changes_subspace(self, sbm_small):
        A = sample_inhomogeneous_er(sbm_small[1], 5)
        W_adj = network_estimate(A, "adjacency").eigenvectors(3).matrix
        W_lap = network_estimate(A, "laplacian").eigenvectors(3).matrix
        assert np.abs(projector(W_adj) - projector(W_lap)).max() > 1e-3

    def test_direction_invariant(self):
        with pytest.raises(InputError):
            NetworkEstimate(matrix=np.eye(2), eigen_direction="smallest", source="adjacency")

    def test_block_laplacian(self, sbm_small):
        g, P = sbm_small
        A = sample_inhomogeneous_er(P, 6)
        est = block_laplacian(estimate_sbm(A, g))
        np.testing.assert_allclose(est.matrix.sum(axis=1), 0, atol=1e-12)
        assert est.eigen_direction == "smallest"


class TestAverageDegree:
    def test_complete_graph(self):
        assert average_degree(np.ones((6, 6)) - np.eye(6)) == 5

    def test_empty(self):
        assert average_degree(np.zeros((4, 4))) == 0


def test_dispatch_requires_communities():
    with pytest.raises(InputError):
        network_estimate(np.zeros((3, 3)), "sbm")
    with pytest.raises(InputError):
        network_estimate(np.zeros((3, 3)), "nonsense")
