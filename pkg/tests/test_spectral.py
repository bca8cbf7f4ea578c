import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance
from netreg.exceptions import BadPartition, DegenerateAngle, EigenGapWarning, RankDeficient
from netreg.network import membership_matrix, sbm_probability
from netreg.simulation import ScenarioConfig, default_block_matrix, population
from netreg.spectral import (
    alignment_svd,
    build_projections,
    closed_form_projections,
    leading_eigvectors,
    orthonormal_basis,
    subspace_perturbation,
)


def proj(B):
    return B @ B.T


class TestOrthonormalBasis:
    def test_identity(self):
        np.testing.assert_allclose(orthonormal_basis(np.eye(3)).matrix, np.eye(3), atol=1e-15)

    def test_single_column_scaled(self):
        B = orthonormal_basis(np.array([[2.0], [0.0], [0.0]]))
        np.testing.assert_allclose(B.matrix[:, 0], [1, 0, 0])

    def test_random_spans_input(self, rng):
        X = rng.standard_normal((50, 3))
        B = orthonormal_basis(X).matrix
        np.testing.assert_allclose(B.T @ B, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(B @ (B.T @ X), X, atol=1e-10)

    def test_sign_convention(self, rng):
        B = orthonormal_basis(-rng.standard_normal((20, 4))).matrix
        for col in B.T:
            first = col[np.flatnonzero(np.abs(col) > 1e-12)[0]]
            assert first > 0

    def test_rank_deficient(self, rng):
        X = rng.standard_normal((10, 2))
        X = np.hstack([X, X[:, :1] * 3])
        with pytest.raises(RankDeficient):
            orthonormal_basis(X)

    def test_more_columns_than_rows(self, rng):
        with pytest.raises(RankDeficient):
            orthonormal_basis(rng.standard_normal((2, 3)))

    def test_deterministic(self, rng):
        X = rng.standard_normal((30, 3))
        assert np.array_equal(orthonormal_basis(X).matrix, orthonormal_basis(X.copy()).matrix)


class TestLeadingEigvectors:
    def test_largest(self):
        B = leading_eigvectors(np.diag([3.0, 2.0, 1.0]), 2, "largest")
        np.testing.assert_allclose(proj(B.matrix), np.diag([1, 1, 0]), atol=1e-12)
        np.testing.assert_allclose(B.values, [3, 2])

    def test_smallest(self):
        B = leading_eigvectors(np.diag([3.0, 2.0, 1.0]), 1, "smallest")
        np.testing.assert_allclose(proj(B.matrix), np.diag([0, 0, 1]), atol=1e-12)

    def test_algebraic_order_not_magnitude(self):
        B = leading_eigvectors(np.diag([1.0, -5.0, 0.5]), 1, "largest")
        np.testing.assert_allclose(np.abs(B.matrix[:, 0]), [1, 0, 0])

    def test_eigen_residual(self, rng):
        S = rng.standard_normal((40, 40))
        S = S + S.T
        B = leading_eigvectors(S, 5, "largest")
        for w, lam in zip(B.matrix.T, B.values):
            assert np.linalg.norm(S @ w - lam * w) <= 1e-8 * np.linalg.norm(S, 2)

    def test_gap_warning(self):
        with pytest.warns(EigenGapWarning):
            leading_eigvectors(np.diag([3.0, 2.0, 2.0, 1.0]), 2, "largest")

    def test_sbm_eigenvectors_piecewise_constant(self):
        n, k = 200, 4
        g = np.arange(n) * k // n
        B = 0.05 * default_block_matrix(k)
        P = sbm_probability(g, B)
        W = leading_eigvectors(P, k, "largest").matrix
        # lift of the reduced k x k eigenproblem spans the same space
        F = membership_matrix(g)
        Fn = F / np.sqrt(F.sum(axis=0))
        vals, vecs = np.linalg.eigh(np.diag(np.sqrt(F.sum(0))) @ B @ np.diag(np.sqrt(F.sum(0))))
        lifted = Fn @ vecs
        np.testing.assert_allclose(proj(W), proj(lifted), atol=1e-8)
        for j in range(k):
            for c in range(k):
                block = W[g == c, j]
                assert np.ptp(block) < 1e-8


class TestAlignment:
    def test_identical_spaces(self, rng):
        Q = np.linalg.qr(rng.standard_normal((20, 3)))[0]
        svd = alignment_svd(orthonormal_basis(Q), Q @ np.linalg.qr(rng.standard_normal((3, 3)))[0])
        np.testing.assert_allclose(svd.sigma_hat, 1, atol=1e-12)

    def test_orthogonal_spaces(self, rng):
        Q = np.linalg.qr(rng.standard_normal((20, 5)))[0]
        svd = alignment_svd(Q[:, :2], Q[:, 2:])
        np.testing.assert_allclose(svd.sigma_hat, 0, atol=1e-12)

    def test_diagonal_alignment(self, rng):
        X, S, _ = random_instance(rng, 40, 3, 4, 1)
        svd = alignment_svd(orthonormal_basis(X), leading_eigvectors(S, 4))
        C = svd.Z_hat.T @ svd.W_breve
        k = min(3, 4)
        np.testing.assert_allclose(np.diag(C)[:k], svd.sigma_hat, atol=1e-10)
        off = C - np.diag(np.diag(C)) if C.shape[0] == C.shape[1] else C.copy()
        off[np.arange(k), np.arange(k)] = 0
        assert np.abs(off).max() <= 1e-8
        assert np.all(np.diff(svd.sigma_hat) <= 1e-15)
        assert svd.sigma_hat.max() <= 1.0

    def test_population_design_angles(self):
        pop = population(ScenarioConfig(n=400, density="n_two_thirds"))
        np.testing.assert_allclose(pop.sigma, [1, 0.2, 0.2, 0.2], atol=1e-10)
        assert pop.r == 1


class TestProjections:
    def test_identical_spaces_full_overlap(self, rng):
        Q = np.linalg.qr(rng.standard_normal((15, 3)))[0]
        ps = build_projections(alignment_svd(Q, Q), 3)
        np.testing.assert_allclose(ps.P_R, proj(Q), atol=1e-12)
        np.testing.assert_allclose(ps.P_C, 0, atol=1e-12)
        np.testing.assert_allclose(ps.P_N, 0, atol=1e-12)

    def test_orthogonal_spaces_r0(self, rng):
        Q = np.linalg.qr(rng.standard_normal((15, 5)))[0]
        Z, W = Q[:, :2], Q[:, 2:]
        ps = build_projections(alignment_svd(Z, W), 0)
        np.testing.assert_allclose(ps.P_C, proj(Z), atol=1e-12)
        np.testing.assert_allclose(ps.P_N, proj(W), atol=1e-12)
        P_C, P_N = closed_form_projections(alignment_svd(Z, W), 0, 0)
        np.testing.assert_allclose(P_C, ps.P_C, atol=1e-12)
        np.testing.assert_allclose(P_N, ps.P_N, atol=1e-12)

    def test_random_against_closed_form(self, rng):
        X, S, _ = random_instance(rng, 12, 3, 3, 1)
        svd = alignment_svd(orthonormal_basis(X), leading_eigvectors(S, 3))
        ps = build_projections(svd, 1)
        P_C, P_N = closed_form_projections(svd, 1, 2)
        np.testing.assert_allclose(ps.P_C, P_C, atol=1e-10)
        np.testing.assert_allclose(ps.P_N, P_N, atol=1e-10)

    def test_population_design_closed_form(self):
        pop = population(ScenarioConfig(n=200, density="n_two_thirds"))
        svd = alignment_svd(orthonormal_basis(pop.X), pop.W)
        ps = build_projections(svd, 1)
        P_C, P_N = closed_form_projections(svd, 1, 3)
        np.testing.assert_allclose(ps.P_C, P_C, atol=1e-10)
        np.testing.assert_allclose(ps.P_N, P_N, atol=1e-10)

    def test_hand_computed_single_pair(self):
        z = np.array([1.0, 0.0, 0.0])
        w = np.array([0.5, np.sqrt(0.75), 0.0])
        svd = alignment_svd(z[:, None], w[:, None])
        assert svd.sigma_hat[0] == pytest.approx(0.5)
        P_C, P_N = closed_form_projections(svd, 0, 1)
        # (zz^T - 0.5 zw^T) / 0.75
        expected_C = np.array([[1 - 0.25, -0.5 * np.sqrt(0.75), 0],
                               [0, 0, 0], [0, 0, 0]]) / 0.75
        np.testing.assert_allclose(P_C, expected_C, atol=1e-14)
        np.testing.assert_allclose(build_projections(svd, 0).P_C, expected_C, atol=1e-14)
        np.testing.assert_allclose(P_C @ z, z, atol=1e-14)
        np.testing.assert_allclose(P_C @ w, 0, atol=1e-14)

    def test_degenerate_angle(self, rng):
        Q = np.linalg.qr(rng.standard_normal((10, 2)))[0]
        with pytest.raises(DegenerateAngle):
            build_projections(alignment_svd(Q, Q), 0)

    def test_bad_partition(self, rng):
        X, S, _ = random_instance(rng, 20, 2, 2, 0)
        svd = alignment_svd(orthonormal_basis(X), leading_eigvectors(S, 2))
        with pytest.raises(BadPartition):
            closed_form_projections(svd, 0, 1)
        with pytest.raises(BadPartition):
            closed_form_projections(svd, 0, 3)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(8, 40), st.integers(1, 4), st.integers(1, 4), st.data())
    def test_invariants_property(self, n, p, K, data):
        r = data.draw(st.integers(0, min(p, K)))
        seed = data.draw(st.integers(0, 2 ** 31))
        rng = np.random.default_rng(seed)
        X, S, _ = random_instance(rng, n, p, K, r)
        svd = alignment_svd(orthonormal_basis(X), leading_eigvectors(S, K))
        ps = build_projections(svd, r)
        ps.check_invariants()
        Zc, Wn = ps.Z_C, ps.W_N
        np.testing.assert_allclose(ps.P_N @ Wn, Wn, atol=1e-8)
        np.testing.assert_allclose(ps.P_C @ Wn, 0, atol=1e-8)


def test_subspace_perturbation_trivial(rng):
    Q = np.linalg.qr(rng.standard_normal((30, 6)))[0]
    W, Z = Q[:, :2], Q[:, 2:4]
    assert subspace_perturbation(Z, W, W) == 0
    assert subspace_perturbation(Z, W, Q[:, 4:]) == pytest.approx(0, abs=1e-14)


def test_subspace_perturbation_erdos_renyi():
    from netreg.network import sample_inhomogeneous_er
    from netreg._validation import replicate_rng

    n = 200
    d = n ** (2 / 3)
    P = np.full((n, n), d / (n - 1))
    W = np.ones((n, 1)) / np.sqrt(n)
    z = np.linalg.qr(np.hstack([W, np.random.default_rng(3).standard_normal((n, 1))]))[0][:, 1:]
    # a covariate direction loading 0.2 on the network subspace, as in the
    # eigenspace simulation design
    v = 0.2 * W + np.sqrt(0.96) * z
    bound = 2 * np.sqrt(np.log(n)) / d
    hits = 0
    for seed in range(100):
        A = sample_inhomogeneous_er(P, replicate_rng(seed))
        hits += subspace_perturbation(v, W, leading_eigvectors(A, 1)) <= bound
    assert hits >= 95


def test_weyl_bound_on_singular_values():
    from netreg.network import sample_inhomogeneous_er
    from netreg._validation import replicate_rng

    pop = population(ScenarioConfig(n=300, density="sqrt_n"))
    Z = orthonormal_basis(pop.X)
    for seed in range(10):
        A = sample_inhomogeneous_er(pop.P, replicate_rng(seed))
        W_hat = leading_eigvectors(A, 4)
        tau = subspace_perturbation(Z, pop.W, W_hat)
        sig_hat = alignment_svd(Z, W_hat).sigma_hat
        assert np.all(np.abs(sig_hat - pop.sigma) <= tau + 1e-12)
