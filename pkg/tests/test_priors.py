import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage

from tomores.errors import NumericalError
from tomores.grid import Domain, Grid
from tomores.priors import (GaussianPrior, NoiseModel, augmented_tikhonov_covariance, augmented_tikhonov_prior,
                            laplacian_operator, nullspace_basis, operator_svd, squared_exponential_prior,
                            tikhonov_prior)


class TestNoiseModel:
    def test_iid(self):
        n = NoiseModel.iid(4, 0.3)
        np.testing.assert_array_equal(n.mean, 0)
        np.testing.assert_allclose(n.covariance, 0.09 * np.eye(4))
        assert n.sigma == pytest.approx(0.3)
        np.testing.assert_allclose(n.whitening.T @ n.whitening, np.eye(4) / 0.09)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            NoiseModel.iid(3, 0.0)
        with pytest.raises(ValueError):
            NoiseModel(np.zeros(3), np.eye(2))
        with pytest.raises(NumericalError):
            NoiseModel(np.zeros(2), -np.eye(2)).cholesky


class TestSquaredExponential:
    def test_diagonal_and_corr_length(self):
        g = Grid(Domain.unit_square(), 11, 11)
        p = squared_exponential_prior(g, mu=2.0, sigma_pr=1.5, d_corr=0.2)
        np.testing.assert_allclose(np.diag(p.covariance), 1.5**2 * (1 + 1e-10), rtol=1e-15)
        # nodes 0.2 m apart along x
        j, k = g.index(3, 4), g.index(5, 4)
        assert p.covariance[j, k] == pytest.approx(1.5**2 * np.exp(-1.0), rel=1e-12)
        np.testing.assert_array_equal(p.mean, 2.0)

    def test_double_loop_oracle(self):
        g = Grid(Domain(0.0, 1.0, 0.0, 2.0), 3, 3)
        sigma, d = 0.7, g.hx
        p = squared_exponential_prior(g, sigma_pr=sigma, d_corr=d)
        xy = g.node_coords
        ref = np.empty((9, 9))
        for i in range(9):
            for j in range(9):
                r2 = (xy[i, 0] - xy[j, 0]) ** 2 + (xy[i, 1] - xy[j, 1]) ** 2
                ref[i, j] = sigma**2 * np.exp(-r2 / d**2) + (1e-10 * sigma**2 if i == j else 0.0)
        np.testing.assert_allclose(p.covariance, ref, rtol=1e-14, atol=0)

    def test_stationary(self):
        g = Grid(Domain.unit_square(), 8, 8)
        C = squared_exponential_prior(g, d_corr=0.3).covariance
        # same lattice offset -> same covariance
        assert C[g.index(1, 2), g.index(3, 3)] == C[g.index(4, 5), g.index(6, 6)]

    def test_factorization_consistency(self):
        g = Grid(Domain.unit_square(), 10, 10)
        p = squared_exponential_prior(g, d_corr=0.1)
        L = p.cholesky
        rel = np.linalg.norm(L @ L.T - p.covariance) / np.linalg.norm(p.covariance)
        assert rel < 1e-8

    def test_bad_parameters(self):
        g = Grid(Domain.unit_square(), 3, 3)
        with pytest.raises(ValueError):
            squared_exponential_prior(g, sigma_pr=0.0)
        with pytest.raises(ValueError):
            squared_exponential_prior(g, d_corr=-1.0)

    def test_indefinite_rejected(self):
        with pytest.raises(NumericalError):
            GaussianPrior(np.zeros(2), covariance=np.diag([1.0, -1.0]))


class TestLaplacian:
    def test_kills_constants(self):
        g = Grid(Domain(0, 2, 0, 1), 6, 4)
        np.testing.assert_allclose(laplacian_operator(g) @ np.full(g.n_nodes, 3.7), 0, atol=1e-10)

    def test_kills_ramp_on_interior(self):
        g = Grid(Domain(0, 2, 0, 1), 6, 5)
        xy = g.node_coords
        Lx = laplacian_operator(g) @ (1.0 + 2.0 * xy[:, 0] - 3.0 * xy[:, 1])
        img = Lx.reshape(g.shape)
        np.testing.assert_allclose(img[1:-1, 1:-1], 0, atol=1e-10)
        assert np.abs(img).max() > 1.0  # mirror rows do not annihilate ramps

    def test_convolution_oracle(self):
        g = Grid(Domain(0, 1, 0, 3), 4, 4)
        x = np.random.default_rng(0).normal(size=g.n_nodes)
        stencil = np.array([[0, -1, 0], [-1, 4, -1], [0, -1, 0]], float)
        # mode="mirror" reflects about the edge node, the ghost-node rule
        ref = ndimage.convolve(x.reshape(g.shape), stencil, mode="mirror") / (g.hx * g.hy)
        np.testing.assert_allclose(laplacian_operator(g) @ x, ref.ravel(), rtol=1e-12, atol=1e-12)

    def test_too_small(self):
        with pytest.raises(ValueError):
            laplacian_operator(Grid(Domain.unit_square(), 2, 5))


class TestNullspace:
    def test_laplacian_single_constant_vector(self):
        g = Grid(Domain.unit_square(), 7, 6)
        Q = nullspace_basis(laplacian_operator(g))
        assert Q.shape == (g.n_nodes, 1)
        np.testing.assert_allclose(np.abs(Q[:, 0]), 1 / np.sqrt(g.n_nodes), rtol=1e-10)

    def test_identity_empty(self):
        assert nullspace_basis(np.eye(5)).shape == (5, 0)

    def test_engineered_rank_deficiency(self):
        rng = np.random.default_rng(4)
        V, _ = np.linalg.qr(rng.normal(size=(8, 8)))
        U, _ = np.linalg.qr(rng.normal(size=(8, 8)))
        s = np.array([5.0, 4.0, 3.0, 2.0, 1.0, 0.5, 0.0, 0.0])
        L = U @ np.diag(s) @ V.T
        Q = nullspace_basis(L)
        assert Q.shape == (8, 2)
        np.testing.assert_allclose(Q.T @ Q, np.eye(2), atol=1e-12)
        assert np.abs(L @ Q).max() < 1e-10 * s[0] * 10
        # projector onto the engineered null space
        np.testing.assert_allclose(Q @ Q.T, V[:, 6:] @ V[:, 6:].T, atol=1e-10)

    def test_tolerance_argument(self):
        with pytest.raises(ValueError):
            nullspace_basis(np.eye(3), tol_rel=0.0)
        with pytest.raises(ValueError):
            nullspace_basis(np.eye(3), tol_rel=1.0)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(3, 7), st.integers(3, 7))
    def test_laplacian_residual_bound(self, nx, ny):
        L = laplacian_operator(Grid(Domain.unit_square(), nx, ny))
        svd = operator_svd(L)
        assert np.abs(L @ svd.nullspace).max() < 1e-10 * svd.singular_values[0] * 10


class TestAugmentedTikhonov:
    def test_identity_operator(self):
        C = augmented_tikhonov_covariance(np.eye(6), gamma=2.0, a=17.0)
        np.testing.assert_allclose(C, np.eye(6) / 4.0, atol=1e-15)

    def test_pseudoinverse_identity(self):
        g = Grid(Domain.unit_square(), 6, 6)
        L = laplacian_operator(g)
        gamma = 1.7
        C = augmented_tikhonov_covariance(L, gamma, a=3.0)
        Q = nullspace_basis(L)
        v = np.random.default_rng(1).normal(size=g.n_nodes)
        v -= Q @ (Q.T @ v)
        np.testing.assert_allclose(C @ (gamma**2 * L.T @ L) @ v, v, rtol=1e-8, atol=1e-8 * np.abs(v).max())

    def test_nullspace_variance(self):
        g = Grid(Domain.unit_square(), 5, 5)
        L = laplacian_operator(g)
        Q = nullspace_basis(L)
        for a in (1.0, 2.0, 4.0):
            C = augmented_tikhonov_covariance(L, 0.5, a)
            np.testing.assert_allclose(Q.T @ C @ Q, (a / 0.5) ** 2 * np.eye(1), rtol=1e-10)

    def test_monotone_on_nullspace_constant_on_complement(self):
        g = Grid(Domain.unit_square(), 5, 5)
        L = laplacian_operator(g)
        Q = nullspace_basis(L)
        P = np.eye(g.n_nodes) - Q @ Q.T
        covs = [augmented_tikhonov_covariance(L, 1.0, a) for a in (0.5, 1.0, 10.0, 100.0)]
        q_var = [float(Q[:, 0] @ C @ Q[:, 0]) for C in covs]
        assert all(b > a for a, b in zip(q_var, q_var[1:]))
        for C in covs[1:]:
            np.testing.assert_allclose(P @ C @ P, P @ covs[0] @ P, atol=1e-10)

    def test_closed_form_precision(self):
        g = Grid(Domain.unit_square(), 5, 5)
        p = augmented_tikhonov_prior(laplacian_operator(g), 1.3, 2.0)
        assert p.proper and p.has_exact_precision
        np.testing.assert_allclose(p.covariance @ p.precision, np.eye(g.n_nodes), atol=1e-8)
        W = p.whitening
        np.testing.assert_allclose(W.T @ W, p.precision, rtol=1e-10, atol=1e-8)

    def test_bad_parameters(self):
        with pytest.raises(ValueError):
            augmented_tikhonov_covariance(np.eye(2), 0.0, 1.0)
        with pytest.raises(ValueError):
            augmented_tikhonov_covariance(np.eye(2), 1.0, 0.0)


class TestImproperPrior:
    def test_fields(self):
        g = Grid(Domain.unit_square(), 4, 4)
        L = laplacian_operator(g)
        p = tikhonov_prior(L, gamma=2.0)
        assert not p.proper
        np.testing.assert_allclose(p.precision, 4.0 * L.T @ L)
        np.testing.assert_allclose(p.nullspace.T @ p.nullspace, np.eye(1), atol=1e-12)
        assert np.abs(L @ p.nullspace).max() < 1e-10 * np.linalg.norm(L, 2)
        with pytest.raises(NumericalError):
            p.cholesky

    def test_requires_one_form(self):
        with pytest.raises(ValueError):
            GaussianPrior(np.zeros(2))
        with pytest.raises(ValueError):
            GaussianPrior(np.zeros(2), covariance=np.eye(2), tikhonov=np.eye(2))
