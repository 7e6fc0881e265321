"""Imaging domain, regular lattice with bilinear nodal bases, and phantoms.

Nodes are numbered row-major with x varying fastest: ``j = iy * nx + ix``.
Reshaping a nodal vector with ``values.reshape(ny, nx)`` therefore gives an
image whose rows run along y.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError

# Relative tolerance for a point just outside the domain boundary.
_SNAP = 1e-9
# Relative tolerance, in cell units, for a point sitting on a lattice line.
# Only absorbs round-off so interpolation stays accurate off the lines.
_ON_LINE = 1e-12


@dataclass(frozen=True)
class Domain:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError(f"degenerate domain {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def center(self) -> np.ndarray:
        return np.array([(self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2])

    def contains(self, p, tol: float = _SNAP) -> bool:
        x, y = p
        ex, ey = tol * self.width, tol * self.height
        return (self.x_min - ex <= x <= self.x_max + ex) and (self.y_min - ey <= y <= self.y_max + ey)

    @classmethod
    def unit_square(cls, size: float = 1.0) -> "Domain":
        return cls(0.0, size, 0.0, size)


@dataclass(frozen=True, eq=False)
class Grid:
    """Regular ``nx`` by ``ny`` lattice of nodes covering ``domain`` exactly."""

    domain: Domain
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("a grid needs at least two nodes per axis")

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def shape(self) -> tuple[int, int]:
        """Image shape ``(ny, nx)`` of a reshaped nodal vector."""
        return (self.ny, self.nx)

    @property
    def hx(self) -> float:
        return self.domain.width / (self.nx - 1)

    @property
    def hy(self) -> float:
        return self.domain.height / (self.ny - 1)

    @cached_property
    def x(self) -> np.ndarray:
        return self.domain.x_min + self.hx * np.arange(self.nx)

    @cached_property
    def y(self) -> np.ndarray:
        return self.domain.y_min + self.hy * np.arange(self.ny)

    @cached_property
    def node_coords(self) -> np.ndarray:
        xx, yy = np.meshgrid(self.x, self.y)
        return np.column_stack([xx.ravel(), yy.ravel()])

    def index(self, ix: int, iy: int) -> int:
        return iy * self.nx + ix

    def ij(self, j: int) -> tuple[int, int]:
        """Inverse of :meth:`index`, returns ``(ix, iy)``."""
        iy, ix = divmod(int(j), self.nx)
        return ix, iy

    def nearest_node(self, p) -> int:
        ix = int(np.clip(np.rint((p[0] - self.domain.x_min) / self.hx), 0, self.nx - 1))
        iy = int(np.clip(np.rint((p[1] - self.domain.y_min) / self.hy), 0, self.ny - 1))
        return self.index(ix, iy)

    def center_node(self) -> int:
        return self.index(self.nx // 2, self.ny // 2)

    def locate(self, points):
        """Cell indices and local coordinates of points inside the domain.

        Returns ``(ix, iy, fx, fy)`` where ``(ix, iy)`` is the lower-left node
        of the containing cell and ``fx, fy`` lie in ``[0, 1]``. Coordinates
        within ``1e-12`` cell widths of a lattice line are snapped onto it, so
        a point on a grid line gives exactly zero weight to the node one
        spacing away.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        tx = (points[:, 0] - self.domain.x_min) / self.hx
        ty = (points[:, 1] - self.domain.y_min) / self.hy
        if (np.any(tx < -_SNAP) or np.any(tx > self.nx - 1 + _SNAP)
                or np.any(ty < -_SNAP) or np.any(ty > self.ny - 1 + _SNAP)):
            raise DomainError("point outside the grid domain")
        tx = _snap(tx, self.nx - 1)
        ty = _snap(ty, self.ny - 1)
        ix = np.minimum(np.floor(tx).astype(int), self.nx - 2)
        iy = np.minimum(np.floor(ty).astype(int), self.ny - 2)
        return ix, iy, tx - ix, ty - iy

    def bilinear_weights(self, points):
        """Node indices ``(P, 4)`` and bilinear weights ``(P, 4)`` at points."""
        ix, iy, fx, fy = self.locate(points)
        j00 = iy * self.nx + ix
        nodes = np.column_stack([j00, j00 + 1, j00 + self.nx, j00 + self.nx + 1])
        weights = np.column_stack([
            (1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy,
        ])
        return nodes, weights


def _snap(t, t_max):
    t = np.clip(t, 0.0, t_max)
    r = np.rint(t)
    return np.where(np.abs(t - r) < _ON_LINE, r, t)


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n_nodes,):
            raise ValueError(f"expected {self.grid.n_nodes} nodal values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", values)

    def image(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def __call__(self, p):
        return field_eval(self, p)


def basis_eval(grid: Grid, j: int, p) -> float:
    """Value of the bilinear hat function of node ``j`` at point ``p``."""
    if not 0 <= j < grid.n_nodes:
        raise IndexError(f"node index {j} out of range")
    if not grid.domain.contains(p):
        raise DomainError(f"point {tuple(p)} outside domain")
    ix, iy = grid.ij(j)
    tx = _snap((p[0] - grid.domain.x_min) / grid.hx, grid.nx - 1)
    ty = _snap((p[1] - grid.domain.y_min) / grid.hy, grid.ny - 1)
    return float(max(0.0, 1.0 - abs(tx - ix)) * max(0.0, 1.0 - abs(ty - iy)))


def field_eval(field: Field, p):
    """Evaluate the interpolated field at one point or an ``(P, 2)`` array."""
    p = np.asarray(p, dtype=float)
    nodes, weights = field.grid.bilinear_weights(p)
    out = np.sum(field.values[nodes] * weights, axis=1)
    return float(out[0]) if p.ndim == 1 else out


def gaussian_phantom(grid: Grid, center, width: float, amplitude: float = 1.0) -> Field:
    """Isotropic Gaussian bump ``amplitude * exp(-|r - center|^2 / width^2)``."""
    if width <= 0:
        raise ValueError("phantom width must be positive")
    d2 = np.sum((grid.node_coords - np.asarray(center, dtype=float)) ** 2, axis=1)
    return Field(grid, amplitude * np.exp(-d2 / width**2))


def write_field_csv(path, field: Field, header_lines=()):
    """Write ``nx,ny,x_min,x_max,y_min,y_max`` followed by one value per line."""
    g, d = field.grid, field.grid.domain
    lines = [f"# {h}" for h in header_lines]
    lines.append(",".join([str(g.nx), str(g.ny)] + [_fmt(v) for v in (d.x_min, d.x_max, d.y_min, d.y_max)]))
    lines.extend(_fmt(v) for v in field.values)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field_csv(path) -> Field:
    with open(path) as fh:
        rows = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    head = rows[0].split(",")
    nx, ny = int(head[0]), int(head[1])
    grid = Grid(Domain(*map(float, head[2:6])), nx, ny)
    return Field(grid, np.array([float(r) for r in rows[1:]]))


def _fmt(v) -> str:
    return repr(float(v))
