"""Covariance of the MAP estimator and a scalar spatial-resolution measure.

The MAP is a linear function of the data, ``x_MAP = K (b - mu_eps) + c``
with gain ``K = Gamma_post A^T inv(Gamma_eps)``. Propagating the prior
predictive distribution of ``b`` through it gives the MAP covariance
``K Gamma_b K^T``. Each column of that matrix is laid back onto the
lattice, Fourier transformed, and thresholded relative to its peak; the
lowest radial frequency of the threshold contour is the cutoff ``f_c`` and
``delta = 1 / (2 f_c)`` the resolution at that node.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .errors import UnsupportedPriorError
from .grid import Grid
from .inference import ResolutionMatrix, _check, gain, prior_predictive_covariance
from .priors import GaussianPrior, NoiseModel, _symmetrize, tikhonov_prior

ZERO_COLUMN = "zero_column"
NO_CROSSING = "no_crossing"


@dataclass(frozen=True, eq=False)
class PriorPredictive:
    mean: np.ndarray = field(repr=False)
    covariance: np.ndarray = field(repr=False)


@dataclass(frozen=True, eq=False)
class MapCovariance:
    covariance: np.ndarray = field(repr=False)
    mean: np.ndarray = field(repr=False)
    mode: str = "proper"


@dataclass(frozen=True, eq=False)
class SpectralColumn:
    """Spectrum magnitude ``amplitudes[v, u]`` on centered frequency axes."""

    amplitudes: np.ndarray = field(repr=False)
    freq_u: np.ndarray = field(repr=False)
    freq_v: np.ndarray = field(repr=False)
    node: int = -1


class Cutoff(NamedTuple):
    frequency: float
    flag: str | None = None


@dataclass(frozen=True, eq=False)
class ResolutionField:
    """Per-node cutoff frequency (1/m) and resolution (m).

    ``flag`` is ``""`` for valid nodes, otherwise ``"zero_column"`` (``f_c``
    and ``delta`` are NaN) or ``"no_crossing"`` (``f_c`` is the Nyquist
    radius and ``delta`` the grid-limited value).
    """

    f_c: np.ndarray = field(repr=False)
    delta: np.ndarray = field(repr=False)
    flag: np.ndarray = field(repr=False)
    threshold: float

    @property
    def valid(self) -> np.ndarray:
        return (self.flag == "") & np.isfinite(self.f_c)


def prior_predictive(A, noise: NoiseModel, prior) -> PriorPredictive:
    """Distribution of measurements implied by prior and noise.

    ``prior`` is a proper :class:`GaussianPrior` or a bare covariance
    matrix (zero prior mean).
    """
    A = np.asarray(A, dtype=float)
    if isinstance(prior, GaussianPrior):
        cov, mu = prior.covariance, prior.mean
        if cov is None:
            raise UnsupportedPriorError("prior predictive needs a materialized prior covariance")
    else:
        cov = np.asarray(prior, dtype=float)
        mu = np.zeros(cov.shape[0])
    if cov.shape != (A.shape[1], A.shape[1]) or A.shape[0] != noise.size:
        raise ValueError("dimension mismatch between A, noise and prior covariance")
    return PriorPredictive(A @ mu + noise.mean, prior_predictive_covariance(A, noise, cov))


def map_covariance(A, noise: NoiseModel, prior: GaussianPrior, method: str = "auto") -> MapCovariance:
    """Covariance and mean of the MAP estimator over the prior predictive.

    Evaluates ``Gamma_post A^T iGe (A Gamma_pr A^T + Gamma_eps) iGe A Gamma_post``
    with ``iGe = inv(Gamma_eps)``. Requires a proper prior; improper
    smoothness priors go through :func:`tikhonov_limit_covariance`.
    """
    if not prior.proper:
        raise UnsupportedPriorError("map_covariance needs a proper prior; use tikhonov_limit_covariance")
    A = _check(A, noise, prior)
    K = gain(A, noise, prior, method=method)
    Gb = prior_predictive_covariance(A, noise, prior.covariance)
    cov = _symmetrize(K @ Gb @ K.T)
    # Gamma_post (A^T iGe A mu_pr + inv(Gamma_pr) mu_pr) == mu_pr
    mean = prior.mean - K @ noise.mean
    return MapCovariance(cov, mean, "proper")


def tikhonov_limit_covariance(A, noise: NoiseModel, L_tik, gamma: float = 1.0, tol_rel: float = 1e-10) -> MapCovariance:
    """Scaled MAP covariance of an improper smoothness prior in the limit.

    The improper prior is made proper by giving its constant null-space
    direction a variance ``(a / gamma)**2``; dividing the resulting MAP
    covariance by ``a**2 / N`` and letting ``a`` grow gives the rank-one
    matrix ``w w^T`` with ``w = K A 1 / gamma``. Only the overall scale is
    lost, which the relative threshold ignores.
    """
    prior = tikhonov_prior(L_tik, gamma, tol_rel)
    Q = prior.nullspace
    if Q.shape[1] != 1:
        raise UnsupportedPriorError(
            f"the limit needs a one-dimensional null space, got dimension {Q.shape[1]}")
    q = Q[:, 0]
    if not np.allclose(q, q[0], rtol=1e-8, atol=1e-12):
        raise UnsupportedPriorError("the null space of the operator is not the constant vector")
    A = _check(A, noise, prior)
    K = gain(A, noise, prior, method="precision")
    w = K @ (A @ np.ones(A.shape[1])) / gamma
    return MapCovariance(np.outer(w, w), -K @ noise.mean, "tikhonov_limit")


def camera_covariance(R, sigma_x: float) -> np.ndarray:
    """Image covariance ``sigma_x**2 R R^T`` of an ideal camera with PSFs ``R``."""
    R = R.R if isinstance(R, ResolutionMatrix) else np.asarray(R, dtype=float)
    return sigma_x**2 * (R @ R.T)


def _frequency_axes(grid: Grid, pad_factor: int):
    fu = np.fft.fftshift(np.fft.fftfreq(pad_factor * grid.nx, d=grid.hx))
    fv = np.fft.fftshift(np.fft.fftfreq(pad_factor * grid.ny, d=grid.hy))
    return fu, fv


def _spectra(grid: Grid, columns, pad_factor: int, window: bool) -> np.ndarray:
    """Centered |DFT| of nodal vectors given as the columns of ``columns``."""
    imgs = np.asarray(columns, dtype=float).T.reshape(-1, grid.ny, grid.nx)
    if window:
        imgs = imgs * np.outer(np.hanning(grid.ny), np.hanning(grid.nx))[None]
    shape = (pad_factor * grid.ny, pad_factor * grid.nx)
    P = np.fft.fft2(imgs, s=shape, axes=(-2, -1))
    return np.abs(np.fft.fftshift(P, axes=(-2, -1)))


def spectral_column(grid: Grid, cov, j: int, pad_factor: int = 4, window: bool = False) -> SpectralColumn:
    """Zero-padded 2-D DFT magnitude of covariance column ``j`` on the lattice."""
    cov = np.asarray(cov)
    if not 0 <= j < grid.n_nodes:
        raise IndexError(f"node index {j} out of range")
    if pad_factor < 1:
        raise ValueError("pad_factor must be >= 1")
    amp = _spectra(grid, cov[:, [j]], pad_factor, window)[0]
    fu, fv = _frequency_axes(grid, pad_factor)
    return SpectralColumn(amp, fu, fv, j)


def _nyquist(fu, fv) -> float:
    du, dv = fu[1] - fu[0], fv[1] - fv[0]
    return float(min(fu.size * du, fv.size * dv) / 2)


def _march(amps, fu, fv, level, n_angles: int):
    """Lowest radius where ``amps`` falls below ``level`` along any ray.

    Rays start at zero frequency and step by half the finest bin spacing
    out to the Nyquist radius; the spectrum is bilinearly interpolated and
    treated as periodic. Returns ``nan`` if no ray crosses.
    """
    du, dv = fu[1] - fu[0], fv[1] - fv[0]
    step = 0.5 * min(du, dv)
    nyq = _nyquist(fu, fv)
    n_steps = int(np.ceil(nyq / step - 1e-9))
    r = np.minimum(step * np.arange(n_steps + 1), nyq)
    theta = 2 * np.pi * np.arange(n_angles) / n_angles
    u = np.cos(theta)[:, None] * r[None, :]
    v = np.sin(theta)[:, None] * r[None, :]
    coords = np.array([(v - fv[0]) / dv, (u - fu[0]) / du])
    prof = ndimage.map_coordinates(amps, coords.reshape(2, -1), order=1, mode="grid-wrap")
    prof = prof.reshape(n_angles, r.size)
    below = prof < level
    crosses = below.any(axis=1)
    if not crosses.any():
        return np.nan
    rows = np.nonzero(crosses)[0]
    k = np.argmax(below[rows], axis=1)
    radii = np.zeros(rows.size)
    inner = k > 0
    if inner.any():
        rr, kk = rows[inner], k[inner]
        p0, p1 = prof[rr, kk - 1], prof[rr, kk]
        radii[inner] = r[kk - 1] + (p0 - level) / (p0 - p1) * (r[kk] - r[kk - 1])
    return float(radii.min())


def _threshold(alpha_th: float, mode: str) -> float:
    if not 0.0 < alpha_th < 1.0:
        raise ValueError("alpha_th must lie in (0, 1)")
    if mode == "squared":
        return alpha_th**2
    if mode == "sqrt":
        return alpha_th
    raise ValueError(f"unknown amplitude mode {mode!r}")


def _cutoff(amps, fu, fv, alpha_th, n_angles, mode) -> Cutoff:
    thr = _threshold(alpha_th, mode)
    if mode == "sqrt":
        amps = np.sqrt(amps)
    peak = float(amps.max())
    if not peak > 0.0:
        return Cutoff(np.nan, ZERO_COLUMN)
    fc = _march(amps, fu, fv, thr * peak, n_angles)
    if np.isnan(fc):
        return Cutoff(_nyquist(fu, fv), NO_CROSSING)
    return Cutoff(fc)


def cutoff_frequency(spec: SpectralColumn, alpha_th: float = 0.2, n_angles: int = 360, mode: str = "squared") -> Cutoff:
    """Cutoff frequency of one spectrum.

    With ``mode="squared"`` the threshold on ``|P|`` is ``alpha_th**2``
    times its maximum; ``mode="sqrt"`` thresholds ``sqrt(|P|)`` at
    ``alpha_th``.
    """
    return _cutoff(spec.amplitudes, spec.freq_u, spec.freq_v, alpha_th, n_angles, mode)


def resolution_field(grid: Grid, cov, alpha_th: float = 0.2, pad_factor: int = 4, n_angles: int = 360,
                     mode: str = "squared", window: bool = False, nodes=None, workers: int = 1) -> ResolutionField:
    """Cutoff frequency and resolution for every node (or for ``nodes``).

    Nodes not listed in ``nodes`` are left as NaN with an empty flag.
    """
    cov = np.asarray(cov, dtype=float)
    thr = _threshold(alpha_th, mode)
    if pad_factor < 1:
        raise ValueError("pad_factor must be >= 1")
    N = grid.n_nodes
    nodes = np.arange(N) if nodes is None else np.atleast_1d(np.asarray(nodes, dtype=int))
    fu, fv = _frequency_axes(grid, pad_factor)
    f_c = np.full(N, np.nan)
    flag = np.full(N, "", dtype=object)

    def work(chunk):
        amps = _spectra(grid, cov[:, chunk], pad_factor, window)
        return chunk, [_cutoff(a, fu, fv, alpha_th, n_angles, mode) for a in amps]

    chunks = [nodes[i:i + 32] for i in range(0, nodes.size, 32)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(c) for c in chunks]
    for chunk, cuts in results:
        for j, c in zip(chunk, cuts):
            f_c[j] = c.frequency
            flag[j] = c.flag or ""
    with np.errstate(divide="ignore"):
        delta = 1.0 / (2.0 * f_c)
    return ResolutionField(f_c, delta, flag.astype(str), thr)


def node_resolution(grid: Grid, cov, j: int, **kwargs) -> tuple[float, str]:
    """``(delta, flag)`` at a single node."""
    rf = resolution_field(grid, cov, nodes=[j], **kwargs)
    return float(rf.delta[j]), str(rf.flag[j])
