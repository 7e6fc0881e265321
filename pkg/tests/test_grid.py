import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tomores.errors import DomainError
from tomores.grid import (Domain, Field, Grid, basis_eval, field_eval, gaussian_phantom, read_field_csv,
                          write_field_csv)


@pytest.fixture
def grid():
    return Grid(Domain(0.0, 2.0, -1.0, 0.5), 7, 5)


def test_layout(grid):
    assert grid.n_nodes == 35
    assert grid.hx == pytest.approx(2.0 / 6)
    assert grid.hy == pytest.approx(1.5 / 4)
    xy = grid.node_coords
    np.testing.assert_allclose(xy[grid.index(3, 2)], [1.0, -0.25])
    np.testing.assert_allclose(xy[0], [0.0, -1.0])
    np.testing.assert_allclose(xy[-1], [2.0, 0.5])
    assert grid.ij(grid.index(5, 3)) == (5, 3)


def test_invalid_construction():
    with pytest.raises(ValueError):
        Domain(1.0, 1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        Grid(Domain.unit_square(), 1, 4)


class TestBasis:
    def test_nodal_interpolation(self, grid):
        for j in (0, 8, 17, 34):
            assert basis_eval(grid, j, grid.node_coords[j]) == 1.0
            other = (j + 1) % grid.n_nodes
            assert basis_eval(grid, other, grid.node_coords[j]) == 0.0

    def test_edge_midpoint(self, grid):
        j, k = grid.index(2, 1), grid.index(3, 1)
        p = (grid.node_coords[j] + grid.node_coords[k]) / 2
        assert basis_eval(grid, j, p) == pytest.approx(0.5)
        assert basis_eval(grid, k, p) == pytest.approx(0.5)

    def test_cell_center(self, grid):
        corners = [grid.index(2, 1), grid.index(3, 1), grid.index(2, 2), grid.index(3, 2)]
        p = grid.node_coords[corners].mean(axis=0)
        for j in corners:
            assert basis_eval(grid, j, p) == pytest.approx(0.25)

    def test_outside_domain(self, grid):
        with pytest.raises(DomainError):
            basis_eval(grid, 0, (2.5, 0.0))
        with pytest.raises(DomainError):
            field_eval(Field(grid, np.ones(grid.n_nodes)), (0.0, 0.6))

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0, 1), st.floats(0, 1))
    def test_partition_of_unity_and_support(self, u, v):
        g = Grid(Domain(0.0, 2.0, -1.0, 0.5), 7, 5)
        p = (2.0 * u, -1.0 + 1.5 * v)
        w = np.array([basis_eval(g, j, p) for j in range(g.n_nodes)])
        assert abs(w.sum() - 1.0) < 1e-12
        assert np.count_nonzero(w) <= 4
        assert np.all(w >= 0)


class TestFieldEval:
    def test_ones(self, grid):
        f = Field(grid, np.ones(grid.n_nodes))
        pts = np.random.default_rng(0).uniform([0, -1], [2, 0.5], size=(50, 2))
        np.testing.assert_allclose(field_eval(f, pts), 1.0, atol=1e-14)

    def test_unit_vector(self, grid):
        j = grid.index(4, 3)
        f = Field(grid, np.eye(grid.n_nodes)[j])
        assert field_eval(f, grid.node_coords[j]) == 1.0

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 1), st.floats(0, 1))
    def test_reproduces_affine(self, c0, c1, c2, u, v):
        g = Grid(Domain(0.0, 2.0, -1.0, 0.5), 7, 5)
        xy = g.node_coords
        f = Field(g, c0 + c1 * xy[:, 0] + c2 * xy[:, 1])
        p = np.array([2.0 * u, -1.0 + 1.5 * v])
        assert abs(field_eval(f, p) - (c0 + c1 * p[0] + c2 * p[1])) < 1e-12

    def test_near_lattice_line_not_snapped(self):
        g = Grid(Domain(0.0, 2.0, -1.0, 0.5), 7, 5)
        f = Field(g, g.node_coords[:, 0].copy())
        assert field_eval(f, [2e-10, -1.0]) == pytest.approx(2e-10, rel=1e-6)

    def test_rejects_bad_values(self, grid):
        with pytest.raises(ValueError):
            Field(grid, np.ones(3))
        with pytest.raises(ValueError):
            Field(grid, np.full(grid.n_nodes, np.nan))


class TestPhantom:
    def test_peak_and_width(self):
        g = Grid(Domain.unit_square(), 11, 11)
        c = g.node_coords[g.index(4, 6)]
        f = gaussian_phantom(g, c, 0.2, 3.0)
        assert f.values[g.index(4, 6)] == 3.0
        # node 0.2 m to the right of the center
        assert f.values[g.index(6, 6)] == pytest.approx(3.0 * np.exp(-1.0))

    def test_nodal_sum_matches_quadrature(self):
        # Riemann sum of nodal values times cell area against the 2-D
        # integral of the bump computed with scipy's dblquad.
        from scipy.integrate import dblquad

        g = Grid(Domain(-1.0, 1.0, -1.0, 1.0), 81, 81)
        w, amp = 0.15, 2.0
        integral, _ = dblquad(lambda y, x: amp * np.exp(-(x * x + y * y) / w**2), -1, 1, -1, 1)
        f = gaussian_phantom(g, (0.0, 0.0), w, amp)
        assert f.values.sum() == pytest.approx(integral / (g.hx * g.hy), rel=1e-6)
        assert integral == pytest.approx(amp * np.pi * w**2, rel=1e-9)

    def test_bad_width(self):
        with pytest.raises(ValueError):
            gaussian_phantom(Grid(Domain.unit_square(), 3, 3), (0.5, 0.5), 0.0)


def test_csv_roundtrip(tmp_path, grid):
    f = Field(grid, np.random.default_rng(3).normal(size=grid.n_nodes))
    write_field_csv(tmp_path / "f.csv", f, ["hello"])
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "# hello"
    assert lines[1].startswith("7,5,0.0,2.0,-1.0,0.5")
    g = read_field_csv(tmp_path / "f.csv")
    assert (g.grid.nx, g.grid.ny) == (7, 5)
    np.testing.assert_array_equal(g.values, f.values)
