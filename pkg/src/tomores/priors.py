"""Multivariate normal noise and prior models.

Proper priors carry a covariance matrix. Improper (Tikhonov) priors carry
the whitening operator ``L_tik`` and weight ``gamma`` so that the precision
is ``gamma**2 * L_tik.T @ L_tik``; their null space ``Q`` and the
pseudoinverse of ``L_tik`` are stored alongside.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as la
from scipy.spatial.distance import cdist

from .errors import NumericalError
from .grid import Grid


def _symmetrize(M):
    return (M + M.T) / 2


def _cholesky(M, what="covariance"):
    try:
        return la.cholesky(M, lower=True)
    except la.LinAlgError as exc:
        raise NumericalError(f"{what} is not positive definite") from exc


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Additive MVN measurement error with mean ``mean`` and covariance ``covariance``."""

    mean: np.ndarray = field(repr=False)
    covariance: np.ndarray = field(repr=False)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = _symmetrize(np.atleast_2d(np.asarray(self.covariance, dtype=float)))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("noise mean and covariance sizes differ")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @classmethod
    def iid(cls, n_measurements: int, sigma: float) -> "NoiseModel":
        if sigma <= 0:
            raise ValueError("sigma_eps must be positive")
        return cls(np.zeros(n_measurements), sigma**2 * np.eye(n_measurements))

    @property
    def size(self) -> int:
        return self.mean.size

    @property
    def sigma(self) -> float:
        """Root mean diagonal variance (equals sigma_eps for iid noise)."""
        return float(np.sqrt(np.mean(np.diag(self.covariance))))

    @cached_property
    def cholesky(self) -> np.ndarray:
        return _cholesky(self.covariance, "noise covariance")

    @cached_property
    def whitening(self) -> np.ndarray:
        """``L_eps`` with ``L_eps.T @ L_eps = inv(Gamma_eps)``."""
        return la.solve_triangular(self.cholesky, np.eye(self.size), lower=True)

    @cached_property
    def precision(self) -> np.ndarray:
        W = self.whitening
        return W.T @ W


@dataclass(frozen=True, eq=False)
class GaussianPrior:
    """MVN prior, proper or improper.

    Exactly one of ``covariance`` and ``tikhonov`` is set. A proper prior
    may additionally carry an exact ``precision`` when it is known in closed
    form (the augmented Tikhonov covariance); inference then works from the
    precision instead of inverting a badly conditioned covariance.
    """

    mean: np.ndarray = field(repr=False)
    covariance: np.ndarray | None = field(default=None, repr=False)
    precision_matrix: np.ndarray | None = field(default=None, repr=False)
    tikhonov: np.ndarray | None = field(default=None, repr=False)
    gamma: float = 1.0
    nullspace: np.ndarray | None = field(default=None, repr=False)
    tikhonov_pinv: np.ndarray | None = field(default=None, repr=False)
    kind: str = "proper"

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        object.__setattr__(self, "mean", mean)
        if (self.covariance is None) == (self.tikhonov is None):
            raise ValueError("give exactly one of covariance or tikhonov operator")
        if self.covariance is not None:
            cov = _symmetrize(np.asarray(self.covariance, dtype=float))
            if cov.shape != (mean.size, mean.size):
                raise ValueError("prior mean and covariance sizes differ")
            w = la.eigvalsh(cov)
            if w[0] < -1e-10 * max(w[-1], 0.0):
                raise NumericalError(f"prior covariance is indefinite (min eigenvalue {w[0]:.3g})")
            object.__setattr__(self, "covariance", cov)
            if self.precision_matrix is not None:
                object.__setattr__(self, "precision_matrix", _symmetrize(np.asarray(self.precision_matrix, dtype=float)))
        else:
            if self.gamma <= 0:
                raise ValueError("gamma must be positive")
            L = np.asarray(self.tikhonov, dtype=float)
            if L.shape[1] != mean.size:
                raise ValueError("Tikhonov operator width differs from prior size")
            object.__setattr__(self, "tikhonov", L)

    @property
    def size(self) -> int:
        return self.mean.size

    @property
    def proper(self) -> bool:
        return self.covariance is not None

    @property
    def has_exact_precision(self) -> bool:
        return not self.proper or self.precision_matrix is not None

    @cached_property
    def cholesky(self) -> np.ndarray:
        if not self.proper:
            raise NumericalError("improper prior has no covariance factor")
        return _cholesky(self.covariance, "prior covariance")

    @cached_property
    def whitening(self) -> np.ndarray:
        """``L_pr`` with ``L_pr.T @ L_pr`` equal to the prior precision."""
        if not self.proper:
            return self.gamma * self.tikhonov
        if self.precision_matrix is not None:
            return _cholesky(self.precision_matrix, "prior precision").T
        return la.solve_triangular(self.cholesky, np.eye(self.size), lower=True)

    @cached_property
    def precision(self) -> np.ndarray:
        if not self.proper:
            return self.gamma**2 * (self.tikhonov.T @ self.tikhonov)
        if self.precision_matrix is not None:
            return self.precision_matrix
        return _symmetrize(la.cho_solve((self.cholesky, True), np.eye(self.size)))


def squared_exponential_covariance(coords, sigma_pr: float, d_corr: float, jitter: float = 1e-10) -> np.ndarray:
    if sigma_pr <= 0 or d_corr <= 0:
        raise ValueError("sigma_pr and d_corr must be positive")
    d2 = cdist(coords, coords, "sqeuclidean")
    cov = sigma_pr**2 * np.exp(-d2 / d_corr**2)
    cov[np.diag_indices_from(cov)] += jitter * sigma_pr**2
    return cov


def squared_exponential_prior(grid: Grid, mu: float = 0.0, sigma_pr: float = 1.0, d_corr: float = 0.1) -> GaussianPrior:
    """Stationary prior with ``cov_ij = sigma_pr**2 exp(-|r_i - r_j|**2 / d_corr**2)``.

    A diagonal jitter of ``1e-10 * sigma_pr**2`` keeps the matrix
    factorizable.
    """
    cov = squared_exponential_covariance(grid.node_coords, sigma_pr, d_corr)
    return GaussianPrior(mu * np.ones(grid.n_nodes), covariance=cov, kind="sqexp")


def laplacian_operator(grid: Grid) -> np.ndarray:
    """Five-point Laplacian with mirrored ghost nodes, scaled by ``1/(hx*hy)``.

    Every row sums to zero, so constants span the null space. A boundary
    node takes its mirrored neighbor twice.
    """
    nx, ny = grid.nx, grid.ny
    if nx < 3 or ny < 3:
        raise ValueError("the Laplacian needs at least 3 nodes per axis")
    L = np.zeros((grid.n_nodes, grid.n_nodes))
    for iy in range(ny):
        for ix in range(nx):
            j = grid.index(ix, iy)
            L[j, j] = 4.0
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                kx, ky = ix + dx, iy + dy
                if not 0 <= kx < nx:
                    kx = ix - dx
                if not 0 <= ky < ny:
                    ky = iy - dy
                L[j, grid.index(kx, ky)] -= 1.0
    return L / (grid.hx * grid.hy)


@dataclass(frozen=True, eq=False)
class OperatorSVD:
    """Rank split of an operator ``L = U S V^T``."""

    rank: int
    singular_values: np.ndarray = field(repr=False)
    nullspace: np.ndarray = field(repr=False)
    pinv: np.ndarray = field(repr=False)


def operator_svd(L, tol_rel: float = 1e-10) -> OperatorSVD:
    if not 0.0 < tol_rel < 1.0:
        raise ValueError("tol_rel must lie in (0, 1)")
    L = np.atleast_2d(np.asarray(L, dtype=float))
    U, s, Vt = la.svd(L, full_matrices=True)
    n = L.shape[1]
    s_full = np.zeros(n)
    s_full[: s.size] = s
    p = int(np.sum(s_full >= tol_rel * s_full[0])) if s_full[0] > 0 else 0
    Q = Vt[p:].T.copy()
    pinv = (Vt[:p].T / s_full[:p]) @ U[:, :p].T
    return OperatorSVD(p, s_full, Q, pinv)


def nullspace_basis(L, tol_rel: float = 1e-10) -> np.ndarray:
    """Orthonormal basis ``Q`` (columns) of the right null space of ``L``.

    Singular values below ``tol_rel * s_1`` count as zero. A full-rank
    operator gives an ``(N, 0)`` array.
    """
    return operator_svd(L, tol_rel).nullspace


def augmented_tikhonov_covariance(L, gamma: float, a: float, tol_rel: float = 1e-10) -> np.ndarray:
    """Proper stand-in for an improper Tikhonov prior.

    ``pinv(L) pinv(L).T / gamma**2 + (a / gamma)**2 Q Q.T`` where ``Q``
    spans the null space of ``L``; larger ``a`` leaves the null-space
    directions less constrained.
    """
    return augmented_tikhonov_prior(L, gamma, a, tol_rel).covariance


def augmented_tikhonov_prior(L, gamma: float, a: float, tol_rel: float = 1e-10) -> GaussianPrior:
    """Zero-mean proper prior from :func:`augmented_tikhonov_covariance`.

    The precision is attached in closed form,
    ``gamma**2 L.T L + (gamma / a)**2 Q Q.T``.
    """
    if gamma <= 0 or a <= 0:
        raise ValueError("gamma and a must be positive")
    L = np.asarray(L, dtype=float)
    svd = operator_svd(L, tol_rel)
    Q, Lp = svd.nullspace, svd.pinv
    cov = (Lp @ Lp.T + a**2 * (Q @ Q.T)) / gamma**2
    prec = gamma**2 * (L.T @ L) + (gamma / a) ** 2 * (Q @ Q.T)
    return GaussianPrior(np.zeros(L.shape[1]), covariance=_symmetrize(cov), precision_matrix=prec, kind="tikhonov_augmented")


def tikhonov_prior(L, gamma: float = 1.0, tol_rel: float = 1e-10) -> GaussianPrior:
    """Improper zero-mean prior with precision ``gamma**2 L.T L``."""
    L = np.asarray(L, dtype=float)
    svd = operator_svd(L, tol_rel)
    return GaussianPrior(np.zeros(L.shape[1]), tikhonov=L, gamma=gamma, nullspace=svd.nullspace,
                         tikhonov_pinv=svd.pinv, kind="tikhonov")
