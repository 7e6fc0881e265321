"""Straight measurement beams and the sensitivity matrix.

A beam contributes ``A[i, j] = int a_j(r_i(s)) ds`` over its in-domain
chord. Along a straight chord the bilinear bases are piecewise quadratic
with kinks where the chord crosses lattice lines, so the chord is split at
those crossings and each piece is integrated with composite two-point
Gauss-Legendre, which is exact for the piecewise polynomial integrand.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Domain, Field, Grid

_BLOCK = 64
_GL_NODES = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


@dataclass(frozen=True)
class Beam:
    start: tuple[float, float]
    end: tuple[float, float]

    def __post_init__(self):
        start = tuple(float(v) for v in self.start)
        end = tuple(float(v) for v in self.end)
        if start == end:
            raise ValueError("beam start and end coincide")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)

    @property
    def angle(self) -> float:
        """Direction angle folded into ``[0, pi)``."""
        return float(np.arctan2(self.end[1] - self.start[1], self.end[0] - self.start[0]) % np.pi)

    def clip(self, domain: Domain):
        """In-domain segment as ``(p0, p1)`` arrays, or ``None`` if it misses.

        Liang-Barsky clipping of the segment against the domain rectangle.
        """
        p0 = np.asarray(self.start)
        d = np.asarray(self.end) - p0
        t0, t1 = 0.0, 1.0
        for pk, qk in ((-d[0], p0[0] - domain.x_min), (d[0], domain.x_max - p0[0]),
                       (-d[1], p0[1] - domain.y_min), (d[1], domain.y_max - p0[1])):
            if pk == 0.0:
                if qk < 0.0:
                    return None
                continue
            t = qk / pk
            if pk < 0.0:
                t0 = max(t0, t)
            else:
                t1 = min(t1, t)
        if t1 - t0 <= 1e-12:
            return None
        return p0 + t0 * d, p0 + t1 * d


class BeamSet(tuple):
    """Ordered collection of beams; the order fixes the rows of A."""

    def __new__(cls, beams=()):
        return super().__new__(cls, (b if isinstance(b, Beam) else Beam(*b) for b in beams))

    def __add__(self, other):
        return BeamSet(tuple(self) + tuple(other))

    def as_array(self) -> np.ndarray:
        """``(M, 4)`` array of ``x0, y0, x1, y1``."""
        return np.array([[*b.start, *b.end] for b in self], dtype=float).reshape(-1, 4)

    def chord_lengths(self, domain: Domain) -> np.ndarray:
        out = np.zeros(len(self))
        for i, b in enumerate(self):
            seg = b.clip(domain)
            if seg is not None:
                out[i] = np.linalg.norm(seg[1] - seg[0])
        return out


@dataclass(frozen=True, eq=False)
class SensitivityMatrix:
    matrix: np.ndarray = field(repr=False)
    grid: Grid
    beams: BeamSet

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    @property
    def shape(self):
        return self.matrix.shape

    def zero_columns(self) -> np.ndarray:
        """Boolean mask of nodes whose basis no beam touches (blind spots)."""
        return ~np.any(self.matrix != 0.0, axis=0)


def _breakpoints(p0, p1, grid: Grid) -> np.ndarray:
    """Chord parameters in ``[0, 1]`` at which lattice lines are crossed."""
    ts = [np.array([0.0, 1.0])]
    for axis, lines in ((0, grid.x), (1, grid.y)):
        d = p1[axis] - p0[axis]
        if d != 0.0:
            t = (lines - p0[axis]) / d
            ts.append(t[(t > 0.0) & (t < 1.0)])
    t = np.unique(np.concatenate(ts))
    # merge crossings closer than round-off (corner hits)
    keep = np.concatenate([[True], np.diff(t) > 1e-12])
    t = t[keep]
    t[-1] = 1.0
    return t


def _row(grid: Grid, beam: Beam, quad_step: float) -> np.ndarray:
    row = np.zeros(grid.n_nodes)
    seg = beam.clip(grid.domain)
    if seg is None:
        return row
    p0, p1 = seg
    length = float(np.linalg.norm(p1 - p0))
    t = _breakpoints(p0, p1, grid)
    pieces = np.diff(t) * length
    m = np.maximum(1, np.ceil(pieces / quad_step - 1e-12).astype(int))
    # sub-interval starts (in t) and widths (in t)
    widths = np.repeat(np.diff(t) / m, m)
    offsets = np.concatenate([np.arange(k) for k in m])
    starts = np.repeat(t[:-1], m) + offsets * widths
    tq = (starts[:, None] + widths[:, None] * _GL_NODES[None, :]).ravel()
    wq = np.repeat(widths * length / 2.0, 2)
    points = p0[None, :] + tq[:, None] * (p1 - p0)[None, :]
    nodes, weights = grid.bilinear_weights(points)
    row += np.bincount(nodes.ravel(), weights=(weights * wq[:, None]).ravel(), minlength=grid.n_nodes)
    return row


def assemble_sensitivity(grid: Grid, beams: BeamSet, quad_step: float | None = None) -> SensitivityMatrix:
    """Build the ``M x N`` sensitivity matrix of ``beams`` on ``grid``.

    Parameters
    ----------
    grid : Grid
    beams : BeamSet
        At least one beam. Beams that miss the domain give zero rows.
    quad_step : float, optional
        Maximum quadrature sub-interval length; defaults to
        ``min(hx, hy) / 10`` and may not exceed ``min(hx, hy) / 2``.
    """
    beams = BeamSet(beams)
    if len(beams) == 0:
        raise ValueError("empty beam set")
    h = min(grid.hx, grid.hy)
    if quad_step is None:
        quad_step = h / 10.0
    if not 0.0 < quad_step <= h / 2.0 * (1 + 1e-12):
        raise ValueError(f"quad_step must lie in (0, {h / 2}]")
    A = np.vstack([_row(grid, b, quad_step) for b in beams])
    return SensitivityMatrix(A, grid, beams)


def project(A, x) -> np.ndarray:
    """Noise-free measurements ``b = A x``."""
    A = np.asarray(A)
    x = x.values if isinstance(x, Field) else np.asarray(x, dtype=float)
    if x.shape[0] != A.shape[1]:
        raise ValueError(f"field has {x.shape[0]} values, matrix expects {A.shape[1]}")
    return A @ x


def parallel_projection(domain: Domain, angle: float, n_beams: int) -> BeamSet:
    """``n_beams`` equally spaced parallel chords travelling along ``angle``.

    Offsets are measured along the beam normal from the domain center; the
    spacing is the projected domain extent divided by ``n_beams + 1`` so no
    beam runs along the boundary.
    """
    if n_beams < 1:
        raise ValueError("n_beams must be >= 1")
    d = np.array([np.cos(angle), np.sin(angle)])
    normal = np.array([-d[1], d[0]])
    extent = abs(domain.width * normal[0]) + abs(domain.height * normal[1])
    reach = np.hypot(domain.width, domain.height)
    c = domain.center
    beams = []
    for k in range(1, n_beams + 1):
        offset = -extent / 2 + k * extent / (n_beams + 1)
        origin = c + offset * normal
        seg = Beam(tuple(origin - reach * d), tuple(origin + reach * d)).clip(domain)
        if seg is not None:
            beams.append(Beam(tuple(seg[0]), tuple(seg[1])))
    return BeamSet(beams)


def orthogonal_array(domain: Domain, n_per_projection: int = 5) -> BeamSet:
    """Horizontal plus vertical parallel projections."""
    return parallel_projection(domain, 0.0, n_per_projection) + parallel_projection(domain, np.pi / 2, n_per_projection)


def _boundary_point(domain: Domain, u):
    """Map perimeter coordinates ``u`` in ``[0, P)`` to points and edge ids."""
    w, h = domain.width, domain.height
    edges = np.searchsorted(np.cumsum([w, h, w, h]), u, side="right")
    edges = np.minimum(edges, 3)
    s = u - np.concatenate([[0.0], np.cumsum([w, h, w])])[edges]
    x = np.select([edges == 0, edges == 1, edges == 2], [domain.x_min + s, domain.x_max, domain.x_max - s], domain.x_min)
    y = np.select([edges == 0, edges == 1, edges == 2], [domain.y_min, domain.y_min + s, domain.y_max], domain.y_max - s)
    return np.column_stack([x, y]), edges


def random_beams(domain: Domain, n: int, seed: int) -> BeamSet:
    """``n`` chords between uniform boundary points lying on different edges.

    Candidates are drawn in fixed-size blocks, so the first ``k`` beams for
    a given seed do not depend on ``n``.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = np.random.default_rng(seed)
    perimeter = 2 * (domain.width + domain.height)
    starts, ends = [], []
    have = 0
    while have < n:
        u = rng.uniform(0.0, perimeter, size=(_BLOCK, 2))
        p0, e0 = _boundary_point(domain, u[:, 0])
        p1, e1 = _boundary_point(domain, u[:, 1])
        keep = e0 != e1
        starts.append(p0[keep])
        ends.append(p1[keep])
        have += int(keep.sum())
    if n == 0:
        return BeamSet()
    p0, p1 = np.concatenate(starts)[:n], np.concatenate(ends)[:n]
    return BeamSet(Beam(tuple(a), tuple(b)) for a, b in zip(p0, p1))


def write_beams_csv(path, beams: BeamSet, header_lines=()):
    lines = [f"# {h}" for h in header_lines]
    lines += [",".join(repr(float(v)) for v in row) for row in BeamSet(beams).as_array()]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_beams_csv(path) -> BeamSet:
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return BeamSet(Beam((r[0], r[1]), (r[2], r[3])) for r in data)
