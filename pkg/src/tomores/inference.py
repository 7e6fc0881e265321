"""Linear-Gaussian posterior, MAP estimation and the resolution matrix.

Measurement model: ``A x = b + eps``; with the default ``mean(eps) = 0``
the sign of the noise term is immaterial.

Two routes to the posterior are implemented. The precision route factors
``inv(Gamma_pr) + A^T inv(Gamma_eps) A``; it is the only one available for
improper priors. The covariance route works with the ``M x M`` prior
predictive covariance ``A Gamma_pr A^T + Gamma_eps`` and never inverts
``Gamma_pr``, which matters for smooth kernels whose covariance is
numerically singular. Proper priors without a closed-form precision use
the covariance route by default.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import DegeneracyError, NumericalError
from .priors import GaussianPrior, NoiseModel, _symmetrize

_RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PosteriorResult:
    mean: np.ndarray = field(repr=False)
    covariance: np.ndarray = field(repr=False)

    @property
    def variance(self) -> np.ndarray:
        return np.diag(self.covariance).copy()


@dataclass(frozen=True, eq=False)
class ResolutionMatrix:
    R: np.ndarray = field(repr=False)
    A_sharp: np.ndarray = field(repr=False)

    def psf(self, j: int) -> np.ndarray:
        """Reconstructed unit pulse at node ``j`` (column ``j`` of R)."""
        return self.R[:, j].copy()


def _check(A, noise: NoiseModel, prior: GaussianPrior):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("sensitivity matrix must be 2-D")
    if A.shape[0] != noise.size:
        raise ValueError(f"{A.shape[0]} beams but noise model has size {noise.size}")
    if A.shape[1] != prior.size:
        raise ValueError(f"{A.shape[1]} nodes but prior has size {prior.size}")
    return A


def _check_nullspace_probed(A, noise: NoiseModel, prior: GaussianPrior):
    Q = prior.nullspace
    if prior.proper or Q is None or Q.shape[1] == 0:
        return
    WA = noise.whitening @ A
    scale = np.linalg.norm(WA, 2) if WA.size else 0.0
    _, s, Vt = la.svd(WA @ Q)
    s_full = np.zeros(Q.shape[1])
    s_full[: s.size] = s
    k = int(np.argmin(s_full))
    if scale == 0.0 or s_full[k] < 1e-10 * scale:
        direction = Q @ Vt[k]
        constant = np.allclose(direction, direction[0], rtol=1e-6, atol=1e-12)
        desc = "the constant field" if constant else f"null-space direction {k}"
        raise DegeneracyError(
            f"posterior is degenerate: {desc} of the prior is not probed by any beam", direction)


def _use_precision(prior: GaussianPrior, method: str) -> bool:
    if method == "auto":
        return prior.has_exact_precision
    if method not in ("precision", "covariance"):
        raise ValueError(f"unknown method {method!r}")
    if method == "covariance" and not prior.proper:
        raise ValueError("improper priors need the precision route")
    return method == "precision"


def _posterior_precision_factor(A, noise, prior):
    _check_nullspace_probed(A, noise, prior)
    WA = noise.whitening @ A
    P = _symmetrize(prior.precision + WA.T @ WA)
    try:
        return la.cho_factor(P, lower=True)
    except la.LinAlgError as exc:
        raise DegeneracyError("posterior precision is singular") from exc


def prior_predictive_covariance(A, noise: NoiseModel, prior_cov) -> np.ndarray:
    return _symmetrize(A @ prior_cov @ A.T + noise.covariance)


def gain(A, noise: NoiseModel, prior: GaussianPrior, method: str = "auto") -> np.ndarray:
    """Linear map from measurements to MAP, ``Gamma_post A^T inv(Gamma_eps)``."""
    A = _check(A, noise, prior)
    if _use_precision(prior, method):
        cf = _posterior_precision_factor(A, noise, prior)
        return la.cho_solve(cf, A.T @ noise.precision)
    Gb = prior_predictive_covariance(A, noise, prior.covariance)
    try:
        cf = la.cho_factor(Gb, lower=True)
    except la.LinAlgError as exc:
        raise NumericalError("prior predictive covariance is singular") from exc
    return la.cho_solve(cf, A @ prior.covariance).T


def posterior(A, noise: NoiseModel, prior: GaussianPrior, b, method: str = "auto") -> PosteriorResult:
    """Posterior mean and covariance of the linear-Gaussian model.

    Parameters
    ----------
    A : (M, N) array_like or SensitivityMatrix
    noise : NoiseModel
    prior : GaussianPrior
        Improper priors are accepted; if ``A`` does not probe their null
        space a :class:`DegeneracyError` is raised.
    b : (M,) or (M, K) array_like
        Measurements; several columns give several posterior means.
    method : {"auto", "precision", "covariance"}
        Route used to form the posterior, see the module docstring.
    """
    A = _check(A, noise, prior)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != A.shape[0]:
        raise ValueError(f"expected {A.shape[0]} measurements, got {b.shape[0]}")
    resid = b - (noise.mean if b.ndim == 1 else noise.mean[:, None])
    if _use_precision(prior, method):
        cf = _posterior_precision_factor(A, noise, prior)
        cov = _symmetrize(la.cho_solve(cf, np.eye(prior.size)))
        rhs = A.T @ (noise.precision @ resid)
        prior_term = prior.precision @ prior.mean
        mean = la.cho_solve(cf, rhs + (prior_term if b.ndim == 1 else prior_term[:, None]))
        return PosteriorResult(mean, cov)
    K = gain(A, noise, prior, method="covariance")
    mu = prior.mean if b.ndim == 1 else prior.mean[:, None]
    mean = mu + K @ (resid - A @ mu)
    cov = _symmetrize(prior.covariance - K @ (A @ prior.covariance))
    return PosteriorResult(mean, cov)


def _stacked_qr(A, noise, prior):
    K = np.vstack([noise.whitening @ A, prior.whitening])
    Qk, Rk = la.qr(K, mode="economic")
    d = np.abs(np.diag(Rk))
    if d.size == 0 or d.min() <= _RANK_TOL * d.max():
        _check_nullspace_probed(A, noise, prior)
        raise DegeneracyError("stacked least-squares system is rank deficient")
    return Qk, Rk


def map_via_lsq(A, noise: NoiseModel, prior: GaussianPrior, b) -> np.ndarray:
    """MAP as the solution of the whitened, stacked least-squares problem.

    Minimizes ``|L_eps (A x - b + mu_eps)|^2 + |L_pr (x - mu_pr)|^2`` by a
    QR factorization of ``[L_eps A; L_pr]``. ``b`` may hold several
    measurement vectors as columns.
    """
    A = _check(A, noise, prior)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != A.shape[0]:
        raise ValueError(f"expected {A.shape[0]} measurements, got {b.shape[0]}")
    Qk, Rk = _stacked_qr(A, noise, prior)
    resid = b - (noise.mean if b.ndim == 1 else noise.mean[:, None])
    top = noise.whitening @ resid
    bottom = prior.whitening @ prior.mean
    if b.ndim == 2:
        bottom = np.repeat(bottom[:, None], b.shape[1], axis=1)
    return la.solve_triangular(Rk, Qk.T @ np.concatenate([top, bottom]), lower=False)


def augmented_pseudoinverse(A, noise: NoiseModel, prior: GaussianPrior) -> np.ndarray:
    """``A#`` mapping (noise-free, zero-prior-mean) data to the MAP.

    Equal to ``inv(K^T K) K^T [L_eps; 0]`` with ``K = [L_eps A; L_pr]``,
    evaluated through the QR factors of ``K``.
    """
    A = _check(A, noise, prior)
    Qk, Rk = _stacked_qr(A, noise, prior)
    M = A.shape[0]
    return la.solve_triangular(Rk, Qk[:M].T @ noise.whitening, lower=False)


def resolution_matrix(A, noise: NoiseModel, prior: GaussianPrior) -> ResolutionMatrix:
    A_sharp = augmented_pseudoinverse(A, noise, prior)
    return ResolutionMatrix(A_sharp @ np.asarray(A, dtype=float), A_sharp)


def _sample(mean, chol, n_samples, seed):
    if n_samples < 0:
        raise ValueError("n_samples must be >= 0")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_samples, mean.size))
    return mean[None, :] + z @ chol.T


def sample_prior(prior: GaussianPrior, n_samples: int, seed=None) -> np.ndarray:
    """Draws from a proper prior, one per row."""
    if not prior.proper:
        raise NumericalError("cannot sample an improper prior; use augmented_tikhonov_prior")
    return _sample(prior.mean, prior.cholesky, n_samples, seed)


def sample_noise(noise: NoiseModel, n_samples: int, seed=None) -> np.ndarray:
    """Measurement-error draws, one per row."""
    return _sample(noise.mean, noise.cholesky, n_samples, seed)
