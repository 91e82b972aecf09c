"""Tests for the micro wave solver."""

import numpy as np
import pytest
from pydantic import ValidationError

from app.errors import BoxTooSmall, CflViolation
from app.media import catalog
from app.micro_sim import (
    MicroProblem,
    build_grid,
    check_time_symmetry,
    dump_history_csv,
    energy_drift,
    solve_micro,
)


def make_problem(field=None, **overrides) -> MicroProblem:
    field = field or catalog("periodic-1d")
    values = dict(
        field=field,
        r0=[0.0] * field.dim,
        s=[1.0] * field.dim,
        eps=0.0025,
        eta=0.01,
        tau=0.01,
        pts_per_eps=32,
    )
    values.update(overrides)
    return MicroProblem(**values)


# --- Problem validation ---


class TestMicroProblem:
    def test_eps_above_eta_rejected(self):
        with pytest.raises(ValidationError):
            make_problem(eps=0.02)

    def test_coarse_resolution_rejected(self):
        with pytest.raises(ValidationError):
            make_problem(pts_per_eps=8)

    def test_wrong_dimension_rejected(self):
        with pytest.raises(ValidationError):
            make_problem(r0=[0.0, 0.0])

    def test_min_half_width(self):
        problem = make_problem()
        expected = 0.005 + 0.005 * np.sqrt(problem.field.c2)
        assert problem.min_half_width == pytest.approx(expected)


# --- Grid ---


class TestBuildGrid:
    def test_box_covers_domain_of_dependence(self):
        problem = make_problem()
        grid = build_grid(problem)
        assert grid.n * grid.h >= 2 * problem.min_half_width
        assert grid.n % problem.pts_per_eps == 0
        assert grid.n % 2 == 0
        assert np.min(np.abs(grid.axes[0])) == 0.0

    def test_box_too_small(self):
        with pytest.raises(BoxTooSmall):
            build_grid(make_problem(L=0.001))


# --- Solver ---


class TestSolveMicro:
    def test_constant_medium_stays_linear(self):
        problem = make_problem(field=catalog("constant", 1, 2.0))
        sol = solve_micro(problem)
        np.testing.assert_array_equal(sol.w_final, 0.0)

    def test_energy_is_conserved(self):
        sol = solve_micro(make_problem(), track_energy=True)
        assert energy_drift(sol) < 1e-9

    def test_time_symmetry(self):
        sol = solve_micro(make_problem(), keep_history=True)
        assert check_time_symmetry(sol) < 1e-12

    def test_history_layout(self):
        sol = solve_micro(make_problem(), keep_history=True)
        assert sol.history.shape == (sol.n_steps + 1, sol.grid.n)
        np.testing.assert_array_equal(sol.history[-1], sol.w_final)

    def test_step_hits_half_tau(self):
        sol = solve_micro(make_problem())
        assert sol.dt * sol.n_steps == pytest.approx(0.005)

    def test_cfl_violation_in_2d(self):
        field = catalog("constant", 2, 1.0)
        problem = make_problem(field=field, eps=0.005, pts_per_eps=16, cfl=0.9)
        with pytest.raises(CflViolation):
            solve_micro(problem)

    def test_energy_drift_needs_tracking(self):
        with pytest.raises(ValueError):
            energy_drift(solve_micro(make_problem()))

    def test_dump_history(self, tmp_path):
        sol = solve_micro(make_problem(), keep_history=True)
        path = dump_history_csv(sol, tmp_path / "history.csv")
        lines = path.read_text().splitlines()
        assert len(lines) > sol.grid.n
