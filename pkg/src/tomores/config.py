"""JSON experiment configuration shared by all subcommands.

Example::

    {
      "seed": 0,
      "grid": {"nx": 30, "ny": 30, "domain": [0, 1, 0, 1]},
      "beams": {"projections": [{"angle": 0.0, "n_beams": 5},
                                {"angle": 1.5707963267948966, "n_beams": 5}],
                "random": 0},
      "noise": {"relative": 0.01},
      "prior": {"kind": "sqexp", "mu": 0.0, "sigma_pr": 1.0, "d_corr": 0.1},
      "resolution": {"alpha_th": 0.2}
    }

Unknown keys are rejected. Relative paths are resolved against the
directory of the configuration file.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

PRIOR_KINDS = ("sqexp", "tikhonov0", "tikhonov2")


@dataclass
class GridSpec:
    nx: int = 30
    ny: int = 30
    domain: list = field(default_factory=lambda: [0.0, 1.0, 0.0, 1.0])

    def validate(self):
        if self.nx < 3 or self.ny < 3:
            raise ConfigError("grid.nx and grid.ny must be >= 3")
        if len(self.domain) != 4:
            raise ConfigError("grid.domain must be [x_min, x_max, y_min, y_max]")
        x0, x1, y0, y1 = self.domain
        if not (x1 > x0 and y1 > y0):
            raise ConfigError("grid.domain is degenerate")


@dataclass
class ProjectionSpec:
    angle: float = 0.0
    n_beams: int = 5

    def validate(self):
        if self.n_beams < 1:
            raise ConfigError("projection n_beams must be >= 1")


def _default_projections():
    return [ProjectionSpec(0.0, 5), ProjectionSpec(math.pi / 2, 5)]


@dataclass
class BeamSpec:
    projections: list = field(default_factory=_default_projections)
    random: int = 0
    seed: int | None = None
    file: str | None = None

    def validate(self):
        for p in self.projections:
            p.validate()
        if self.random < 0:
            raise ConfigError("beams.random must be >= 0")
        if not self.projections and self.random == 0 and self.file is None:
            raise ConfigError("no beams configured")


@dataclass
class NoiseSpec:
    sigma_eps: float | None = None
    relative: float | None = 0.01

    def validate(self):
        if (self.sigma_eps is None) == (self.relative is None):
            raise ConfigError("give exactly one of noise.sigma_eps and noise.relative")
        value = self.sigma_eps if self.sigma_eps is not None else self.relative
        if not value > 0:
            raise ConfigError("noise level must be positive")


@dataclass
class PriorSpec:
    kind: str = "sqexp"
    mu: float = 0.0
    sigma_pr: float = 1.0
    d_corr: float = 0.1
    gamma: float = 1.0
    a: float | None = None

    def validate(self):
        if self.kind not in PRIOR_KINDS:
            raise ConfigError(f"prior.kind must be one of {PRIOR_KINDS}")
        if self.kind == "sqexp" and not (self.sigma_pr > 0 and self.d_corr > 0):
            raise ConfigError("prior.sigma_pr and prior.d_corr must be positive")
        if self.kind != "sqexp" and not self.gamma > 0:
            raise ConfigError("prior.gamma must be positive")
        if self.a is not None and not self.a > 0:
            raise ConfigError("prior.a must be positive")


@dataclass
class PhantomSpec:
    center: list = field(default_factory=lambda: [0.25, 7.0 / 12.0])
    width: float = 0.15
    amplitude: float = 1.0

    def validate(self):
        if not self.width > 0:
            raise ConfigError("phantom.width must be positive")
        if len(self.center) != 2:
            raise ConfigError("phantom.center must be [x, y]")


@dataclass
class ResolutionSpec:
    alpha_th: float = 0.2
    pad_factor: int = 4
    n_angles: int = 360
    mode: str = "squared"
    window: bool = False
    prior_only: bool = False

    def validate(self):
        if not 0 < self.alpha_th < 1:
            raise ConfigError("resolution.alpha_th must lie in (0, 1)")
        if self.pad_factor < 1 or self.n_angles < 1:
            raise ConfigError("resolution.pad_factor and n_angles must be >= 1")
        if self.mode not in ("squared", "sqrt"):
            raise ConfigError("resolution.mode must be 'squared' or 'sqrt'")


@dataclass
class SweepSpec:
    counts: list = field(default_factory=lambda: [10, 20, 40, 80, 160])
    repetitions: int = 3
    probe: list | None = None

    def validate(self):
        if self.repetitions < 1:
            raise ConfigError("sweep.repetitions must be >= 1")
        if any(c < 0 for c in self.counts):
            raise ConfigError("sweep.counts must be non-negative")
        if self.probe is not None and len(self.probe) != 2:
            raise ConfigError("sweep.probe must be [x, y]")


@dataclass
class ValidateSpec:
    draws: int = 20000

    def validate(self):
        if self.draws < 2:
            raise ConfigError("validate.draws must be >= 2")


_SECTIONS = {
    "grid": GridSpec, "beams": BeamSpec, "noise": NoiseSpec, "prior": PriorSpec,
    "phantom": PhantomSpec, "resolution": ResolutionSpec, "sweep": SweepSpec,
    "validate": ValidateSpec,
}


@dataclass
class ExperimentConfig:
    seed: int = 0
    grid: GridSpec = field(default_factory=GridSpec)
    beams: BeamSpec = field(default_factory=BeamSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    prior: PriorSpec = field(default_factory=PriorSpec)
    phantom: PhantomSpec = field(default_factory=PhantomSpec)
    measurements: str | None = None
    resolution: ResolutionSpec = field(default_factory=ResolutionSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    validate: ValidateSpec = field(default_factory=ValidateSpec)
    output: str = "out"

    def check(self, base_dir=None):
        for name in _SECTIONS:
            getattr(self, name).validate()
        if base_dir is not None:
            for label, p in (("beams.file", self.beams.file), ("measurements", self.measurements)):
                if p is not None and not (Path(base_dir) / p).is_file():
                    raise ConfigError(f"{label}: file {p!r} not found")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in data.items():
            if key in _SECTIONS:
                kwargs[key] = _section(_SECTIONS[key], value, key)
            else:
                kwargs[key] = value
        try:
            cfg = cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cfg.check()


def _section(spec_cls, value, name):
    if not isinstance(value, dict):
        raise ConfigError(f"{name} must be an object")
    known = {f.name for f in dataclasses.fields(spec_cls)}
    unknown = set(value) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    value = dict(value)
    if spec_cls is BeamSpec and "projections" in value:
        value["projections"] = [_section(ProjectionSpec, p, "beams.projections") for p in value["projections"]]
    try:
        return spec_cls(**value)
    except TypeError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def load_config(path) -> tuple[ExperimentConfig, Path]:
    """Parse a config file; returns the config and its base directory."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = ExperimentConfig.from_dict(data)
    cfg.check(path.parent)
    return cfg, path.parent
