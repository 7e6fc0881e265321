"""Experiment drivers behind the command-line subcommands.

Every driver is a pure function of the configuration (seeds included) and
writes CSV files whose first lines are ``#`` comments naming the tool
version and the configuration digest.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .beams import BeamSet, assemble_sensitivity, parallel_projection, project, random_beams, read_beams_csv
from .config import ExperimentConfig
from .errors import ConfigError
from .grid import Domain, Field, Grid, gaussian_phantom, write_field_csv
from .inference import map_via_lsq, posterior, sample_noise, sample_prior
from .io import read_vector, write_pgm, write_table
from .priors import (GaussianPrior, NoiseModel, augmented_tikhonov_prior, laplacian_operator,
                     squared_exponential_prior, tikhonov_prior)
from .resolution import map_covariance, prior_predictive, resolution_field, tikhonov_limit_covariance

log = logging.getLogger(__name__)

UNDERPOWERED_DRAWS = 1000
MC_TOLERANCE = 0.05


@dataclass
class Setup:
    """Everything derived from a configuration before inference."""

    grid: Grid
    fixed_beams: BeamSet
    beams: BeamSet
    A: np.ndarray = field(repr=False)
    phantom: Field = field(repr=False)
    noise: NoiseModel = field(repr=False)

    @property
    def sigma_eps(self) -> float:
        return self.noise.sigma


def build_grid(cfg: ExperimentConfig) -> Grid:
    return Grid(Domain(*map(float, cfg.grid.domain)), cfg.grid.nx, cfg.grid.ny)


def fixed_beams(cfg: ExperimentConfig, grid: Grid, base_dir=".") -> BeamSet:
    beams = BeamSet()
    for p in cfg.beams.projections:
        beams = beams + parallel_projection(grid.domain, p.angle, p.n_beams)
    if cfg.beams.file is not None:
        beams = beams + read_beams_csv(Path(base_dir) / cfg.beams.file)
    return beams


def beam_seed(cfg: ExperimentConfig) -> int:
    return cfg.seed if cfg.beams.seed is None else cfg.beams.seed


def noise_sigma(cfg: ExperimentConfig, grid: Grid, fixed: BeamSet, phantom: Field) -> float:
    """Absolute sigma_eps, or the relative level times the peak noise-free
    projection of the phantom through the fixed (non-random) beams."""
    if cfg.noise.sigma_eps is not None:
        return float(cfg.noise.sigma_eps)
    peak = float(np.max(project(assemble_sensitivity(grid, fixed), phantom)))
    if not peak > 0:
        raise ConfigError("relative noise needs a phantom seen by the fixed beams")
    return cfg.noise.relative * peak


def build_setup(cfg: ExperimentConfig, base_dir=".", n_random: int | None = None, seed: int | None = None) -> Setup:
    grid = build_grid(cfg)
    fixed = fixed_beams(cfg, grid, base_dir)
    n_random = cfg.beams.random if n_random is None else n_random
    seed = beam_seed(cfg) if seed is None else seed
    beams = fixed + random_beams(grid.domain, n_random, seed)
    if len(beams) == 0:
        raise ConfigError("no beams configured")
    phantom = gaussian_phantom(grid, cfg.phantom.center, cfg.phantom.width, cfg.phantom.amplitude)
    sigma = noise_sigma(cfg, grid, fixed if len(fixed) else beams, phantom)
    A = assemble_sensitivity(grid, beams).matrix
    return Setup(grid, fixed, beams, A, phantom, NoiseModel.iid(len(beams), sigma))


def inference_prior(cfg: ExperimentConfig, grid: Grid) -> GaussianPrior:
    p = cfg.prior
    if p.kind == "sqexp":
        return squared_exponential_prior(grid, p.mu, p.sigma_pr, p.d_corr)
    L = np.eye(grid.n_nodes) if p.kind == "tikhonov0" else laplacian_operator(grid)
    return tikhonov_prior(L, p.gamma)


def resolution_prior(cfg: ExperimentConfig, grid: Grid) -> GaussianPrior | None:
    """Proper prior for the MAP covariance, or ``None`` for the a -> inf limit."""
    p = cfg.prior
    if p.kind == "sqexp":
        return squared_exponential_prior(grid, p.mu, p.sigma_pr, p.d_corr)
    if p.kind == "tikhonov0":
        return augmented_tikhonov_prior(np.eye(grid.n_nodes), p.gamma, p.a or 1.0)
    if p.a is None:
        return None
    return augmented_tikhonov_prior(laplacian_operator(grid), p.gamma, p.a)


def resolution_covariance(cfg: ExperimentConfig, grid: Grid, A, noise: NoiseModel, prior_only: bool = False):
    prior = resolution_prior(cfg, grid)
    if prior_only:
        if prior is None:
            raise ConfigError("prior-only mode needs a proper prior; set prior.a for tikhonov2")
        return prior.covariance
    if prior is None:
        return tikhonov_limit_covariance(A, noise, laplacian_operator(grid), cfg.prior.gamma).covariance
    return map_covariance(A, noise, prior).covariance


def _resolution_kwargs(cfg: ExperimentConfig) -> dict:
    r = cfg.resolution
    return dict(alpha_th=r.alpha_th, pad_factor=r.pad_factor, n_angles=r.n_angles, mode=r.mode, window=r.window)


def header(cfg: ExperimentConfig, command: str) -> list[str]:
    return [f"tomores {__version__}", f"command={command}", f"config_sha256={cfg.digest()}"]


def probe_node(cfg: ExperimentConfig, grid: Grid) -> int:
    if cfg.sweep.probe is None:
        return grid.center_node()
    return grid.nearest_node(cfg.sweep.probe)


def run_reconstruct(cfg: ExperimentConfig, out, base_dir=".") -> dict:
    """MAP estimate and posterior variance; synthetic data unless a file is given."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    s = build_setup(cfg, base_dir)
    if cfg.measurements is not None:
        b = read_vector(Path(base_dir) / cfg.measurements)
        if b.size != s.A.shape[0]:
            raise ConfigError(f"measurement file has {b.size} values but there are {s.A.shape[0]} beams")
    else:
        # A x = b + eps
        b = s.A @ s.phantom.values - sample_noise(s.noise, 1, cfg.seed)[0]
    post = posterior(s.A, s.noise, inference_prior(cfg, s.grid), b)
    hdr = header(cfg, "reconstruct")
    estimate = Field(s.grid, post.mean)
    write_field_csv(out / "map_estimate.csv", estimate, hdr)
    write_pgm(out / "map_estimate.pgm", estimate.image())
    write_field_csv(out / "posterior_variance.csv", Field(s.grid, post.variance), hdr)
    return {"map": post.mean, "variance": post.variance, "b": b, "setup": s}


def run_resolution_map(cfg: ExperimentConfig, out, base_dir=".") -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    s = build_setup(cfg, base_dir)
    cov = resolution_covariance(cfg, s.grid, s.A, s.noise, cfg.resolution.prior_only)
    rf = resolution_field(s.grid, cov, **_resolution_kwargs(cfg))
    hdr = header(cfg, "resolution-map")
    xy = s.grid.node_coords
    rows = [(j, xy[j, 0], xy[j, 1], rf.f_c[j], rf.delta[j], rf.flag[j]) for j in range(s.grid.n_nodes)]
    write_table(out / "resolution.csv", ["node_index", "x", "y", "f_c", "delta", "flag"], rows, hdr)
    fc = np.where(np.isfinite(rf.f_c), rf.f_c, 0.0)
    write_field_csv(out / "fc.csv", Field(s.grid, fc), hdr)
    write_pgm(out / "resolution.pgm", rf.delta.reshape(s.grid.shape))
    return {"field": rf, "setup": s, "covariance": cov}


def run_sweep(cfg: ExperimentConfig, out, base_dir=".") -> dict:
    """Resolution at the probe node against total beam count.

    Each count ``c`` uses the fixed beams plus ``c - n_fixed`` random
    beams; repetition ``r`` draws them with seed ``seed + r``, so larger
    counts extend the beam sets of smaller ones. A count of zero reports
    the prior resolution.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    grid = build_grid(cfg)
    fixed = fixed_beams(cfg, grid, base_dir)
    n_fixed = len(fixed)
    counts = sorted(set(int(c) for c in cfg.sweep.counts))
    bad = [c for c in counts if 0 < c < n_fixed]
    if bad:
        raise ConfigError(f"sweep counts {bad} are below the {n_fixed} fixed beams")
    if n_fixed == 0 and any(c > 0 for c in counts):
        raise ConfigError("the sweep needs fixed beams to set the noise level")
    j = probe_node(cfg, grid)
    kw = _resolution_kwargs(cfg)
    prior_cov = resolution_covariance(cfg, grid, None, None, prior_only=True)
    delta_pr = float(resolution_field(grid, prior_cov, nodes=[j], **kw).delta[j])
    rows = []
    for c in counts:
        for r in range(cfg.sweep.repetitions):
            seed = beam_seed(cfg) + r
            if c == 0:
                rows.append((c, 0, r, seed, delta_pr, delta_pr, "prior_only"))
                continue
            s = build_setup(cfg, base_dir, n_random=c - n_fixed, seed=seed)
            cov = resolution_covariance(cfg, grid, s.A, s.noise)
            rf = resolution_field(grid, cov, nodes=[j], **kw)
            rows.append((c, c - n_fixed, r, seed, rf.delta[j], delta_pr, rf.flag[j]))
    hdr = header(cfg, "sweep") + [f"probe_node={j}"]
    write_table(out / "sweep.csv", ["n_beams", "n_random", "repetition", "seed", "delta", "delta_prior", "flag"], rows, hdr)
    summary = []
    for c in counts:
        d = np.array([row[4] for row in rows if row[0] == c])
        summary.append((c, d.mean(), d.min(), d.max(), delta_pr))
    write_table(out / "sweep_summary.csv", ["n_beams", "delta_mean", "delta_min", "delta_max", "delta_prior"], summary, hdr)
    return {"rows": rows, "summary": summary, "delta_prior": delta_pr, "probe": j}


def frobenius_rel(sample, exact) -> float:
    return float(np.linalg.norm(sample - exact) / np.linalg.norm(exact))


def monte_carlo(cfg: ExperimentConfig, s: Setup, prior: GaussianPrior, draws: int, seed: int) -> dict:
    """Sample ``(x, eps)``, form ``b = A x - eps`` and the MAP of every draw.

    The MAP of each draw comes from the stacked least-squares solver, a
    route independent of the closed-form MAP covariance it is compared to.
    """
    sx, se = np.random.SeedSequence(seed).spawn(2)
    x = sample_prior(prior, draws, sx)
    eps = sample_noise(s.noise, draws, se)
    b = x @ s.A.T - eps
    x_map = map_via_lsq(s.A, s.noise, prior, b.T).T
    pp = prior_predictive(s.A, s.noise, prior)
    mc = map_covariance(s.A, s.noise, prior)
    return {
        "gamma_b": frobenius_rel(np.cov(b, rowvar=False), pp.covariance),
        "gamma_map": frobenius_rel(np.cov(x_map, rowvar=False), mc.covariance),
        "b": b, "x_map": x_map, "prior_predictive": pp, "map_covariance": mc,
    }


def run_validate(cfg: ExperimentConfig, out, base_dir=".") -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    s = build_setup(cfg, base_dir)
    prior = resolution_prior(cfg, s.grid)
    if prior is None:
        raise ConfigError("validation needs a proper prior; set prior.a for tikhonov2")
    draws = cfg.validate.draws
    underpowered = draws < UNDERPOWERED_DRAWS
    if underpowered:
        log.warning("only %d draws; Monte Carlo errors are underpowered", draws)
    res = monte_carlo(cfg, s, prior, draws, cfg.seed)
    rows = [(name, draws, res[key], MC_TOLERANCE, int(res[key] < MC_TOLERANCE), int(underpowered))
            for name, key in (("Gamma_b", "gamma_b"), ("Gamma_MAP", "gamma_map"))]
    write_table(out / "montecarlo_report.csv",
                ["quantity", "draws", "frobenius_rel_error", "tolerance", "pass", "underpowered"],
                rows, header(cfg, "validate"))
    return {"rows": rows, **res}
