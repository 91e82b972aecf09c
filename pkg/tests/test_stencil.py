"""Tests for the periodic grid and the divergence-form stencil."""

import numpy as np
import pytest

from app.stencil import (
    DivergenceOperator,
    PeriodicGrid,
    backward_div,
    edge_average,
    forward_diff,
    leapfrog_energy,
    node_average,
)


def make_operator(n: int = 24, dim: int = 1, seed: int = 0):
    """Random positive edge coefficients on a periodic grid starting at -1."""
    rng = np.random.default_rng(seed)
    grid = PeriodicGrid([-1.0] * dim, n, 2.0 / n)
    coeffs = [1.0 + rng.random(grid.shape) for _ in range(dim)]
    return grid, DivergenceOperator(coeffs, grid.h)


# --- Grid ---


class TestPeriodicGrid:
    def test_nodes_and_edges(self):
        grid = PeriodicGrid([0.0, 0.0], 4, 0.25)
        assert grid.nodes().shape == (4, 4, 2)
        np.testing.assert_allclose(grid.edges(1)[1, 2], [0.25, 0.625])

    def test_norms_of_constant(self):
        grid = PeriodicGrid([0.0], 10, 0.1)
        ones = np.ones(grid.shape)
        assert grid.l2_norm(ones) == pytest.approx(1.0)
        assert grid.h1_norm(ones) == pytest.approx(1.0)
        assert grid.mean(ones) == 1.0


# --- Difference operators ---


class TestDifferences:
    def test_forward_and_backward_are_adjoint(self):
        rng = np.random.default_rng(1)
        u, phi = rng.random(16), rng.random(16)
        h = 0.1
        lhs = np.dot(forward_diff(u, 0, h), phi)
        assert lhs == pytest.approx(-np.dot(u, backward_div(phi, 0, h)))

    def test_averages_are_adjoint(self):
        rng = np.random.default_rng(2)
        u, phi = rng.random(16), rng.random(16)
        assert np.dot(edge_average(u, 0), phi) == pytest.approx(np.dot(u, node_average(phi, 0)))

    def test_forward_difference_of_linear_function(self):
        x = 0.1 * np.arange(10)
        np.testing.assert_allclose(forward_diff(3.0 * x, 0, 0.1)[:-1], 3.0)


# --- Divergence operator ---


class TestDivergenceOperator:
    def test_annihilates_constants(self):
        _, op = make_operator(dim=2)
        np.testing.assert_allclose(op.apply(np.full((24, 24), 5.0)), 0.0, atol=1e-9)

    def test_symmetric_negative(self):
        rng = np.random.default_rng(3)
        _, op = make_operator(dim=2)
        u, v = rng.random((24, 24)), rng.random((24, 24))
        assert np.sum(op.apply(u) * v) == pytest.approx(np.sum(u * op.apply(v)))
        assert np.sum(op.apply(u) * u) < 0.0

    def test_diagonal(self):
        grid, op = make_operator(n=6, dim=2)
        unit = np.zeros(grid.shape)
        unit[2, 3] = 1.0
        assert op.apply(unit)[2, 3] == pytest.approx(op.diagonal()[2, 3])

    def test_affine_source_is_operator_on_linear_function(self):
        grid, op = make_operator(n=32)
        s = [0.7]
        linear = s[0] * grid.axes[0]
        # The linear function jumps at the periodic seam; compare away from it
        np.testing.assert_allclose(op.apply(linear)[1:-1], op.affine_source(s)[1:-1], atol=1e-9)

    def test_product_rule(self):
        rng = np.random.default_rng(4)
        grid, op = make_operator(n=32)
        v = rng.random(grid.shape)
        y = grid.axes[0]
        lhs = op.apply(y * v)
        rhs = y * op.apply(v) + op.product_term(v, 0)
        np.testing.assert_allclose(lhs[1:-1], rhs[1:-1], atol=1e-9)

    def test_edge_flux(self):
        grid, op = make_operator(n=8)
        flux = op.edge_flux(np.zeros(grid.shape), [2.0], 0)
        np.testing.assert_allclose(flux, 2.0 * op.a[0])

    def test_leapfrog_energy_is_conserved(self):
        rng = np.random.default_rng(5)
        grid, op = make_operator(n=32)
        dt = 0.4 * grid.h / np.sqrt(op.max_coefficient())
        source = op.affine_source([1.0])
        w_prev = np.zeros(grid.shape)
        w = 0.01 * rng.random(grid.shape)
        energies = []
        for _ in range(200):
            w_next = 2.0 * w - w_prev + dt * dt * (op.apply(w) + source)
            energies.append(leapfrog_energy(op, w_next, w, source, dt, grid.cell_volume))
            w_prev, w = w, w_next
        values = np.array([e for e, _ in energies])
        scale = max(s for _, s in energies)
        assert np.max(np.abs(values - values[0])) / scale < 1e-10
