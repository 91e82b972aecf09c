"""Leap-frog micro solver for the local wave problem around a macro point.

The deviation w = u - s.x is evolved on a periodic box [-L, L]^d (coordinates
relative to r0) with the forcing div(A s) folded in:

    w_tt = div(A grad w) + div(A s),   w(0) = 0,   w_t(0) = 0.

When a kernel is supplied the space-time kernel average of A grad u is accumulated
while stepping, so the upscaled flux never needs the stored history.
"""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.config import settings
from app.errors import BoxTooSmall, CflViolation
from app.kernels import Kernel, eval_scaled, eval_tensor
from app.media import CoefficientField
from app.models import FluxSampling
from app.stencil import DivergenceOperator, PeriodicGrid, central_diff, leapfrog_energy

logger = logging.getLogger(__name__)


class MicroProblem(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    field: CoefficientField
    r0: list[float]
    s: list[float]
    eps: float
    eta: float
    tau: float
    L: float | None = None  # box half-width; None picks the smallest admissible box
    pts_per_eps: int = Field(default_factory=lambda: settings.pts_per_eps)
    cfl: float = Field(default_factory=lambda: settings.micro_cfl)
    flux_sampling: FluxSampling = Field(
        default_factory=lambda: FluxSampling(settings.flux_sampling)
    )

    @model_validator(mode="after")
    def _check(self) -> MicroProblem:
        d = self.field.dim
        if len(self.r0) != d or len(self.s) != d:
            raise ValueError(f"r0 and s need {d} components")
        if not 0 < self.eps <= self.eta:
            raise ValueError(f"need 0 < eps <= eta, got eps={self.eps}, eta={self.eta}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.pts_per_eps < 16:
            raise ValueError(f"pts_per_eps must be >= 16, got {self.pts_per_eps}")
        if not 0 < self.cfl < 1:
            raise ValueError(f"cfl must lie in (0, 1), got {self.cfl}")
        return self

    @property
    def min_half_width(self) -> float:
        """Domain-of-dependence bound eta/2 + (tau/2) sqrt(c2)."""
        return 0.5 * self.eta + 0.5 * self.tau * math.sqrt(self.field.c2)

    def with_slope(self, s: list[float]) -> MicroProblem:
        return self.model_copy(update={"s": list(s)})


class MicroSolution(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    problem: MicroProblem
    grid: PeriodicGrid
    dt: float
    n_steps: int
    w_final: np.ndarray
    flux: list[float] | None = None
    history: np.ndarray | None = None  # (n_steps + 1,) + grid shape, debug mode only
    energies: list[float] = []
    energy_scales: list[float] = []

    @property
    def h(self) -> float:
        return self.grid.h


def build_grid(problem: MicroProblem) -> PeriodicGrid:
    """Box aligned with the fast period, r0 at a node, half-width >= L."""
    half = problem.min_half_width if problem.L is None else problem.L
    if half < problem.min_half_width - 1e-14:
        raise BoxTooSmall(
            f"box half-width {half} below eta/2 + tau/2 sqrt(c2) = {problem.min_half_width}"
        )
    h = problem.eps / problem.pts_per_eps
    periods = math.ceil(2.0 * half / problem.eps - 1e-9)
    if (periods * problem.pts_per_eps) % 2:
        periods += 1
    n = periods * problem.pts_per_eps
    return PeriodicGrid([-0.5 * n * h] * problem.field.dim, n, h)


def build_operator(problem: MicroProblem, grid: PeriodicGrid) -> DivergenceOperator:
    r0 = np.asarray(problem.r0)
    coeffs = []
    for k in range(grid.dim):
        x = grid.edges(k) + r0
        coeffs.append(problem.field.diagonal(x, x / problem.eps)[..., k])
    return DivergenceOperator(coeffs, grid.h)


def time_step(problem: MicroProblem, op: DivergenceOperator, h: float) -> tuple[float, int]:
    """Step hitting tau/2 exactly, no larger than cfl h / sqrt(c2)."""
    dt_max = problem.cfl * h / math.sqrt(problem.field.c2)
    n_steps = max(math.ceil(0.5 * problem.tau / dt_max - 1e-9), 1)
    dt = 0.5 * problem.tau / n_steps
    # Leap-frog is stable for dt^2 * rho(L) <= 4 with rho(L) <= 4 d max(a) / h^2
    courant = dt * math.sqrt(op.dim * op.max_coefficient()) / h
    if courant >= 1.0:
        raise CflViolation(f"leap-frog unstable: courant number {courant:.3f} >= 1")
    return dt, n_steps


class _FluxAccumulator:
    """Kernel-weighted quadrature of A grad u over the averaging window."""

    def __init__(
        self,
        problem: MicroProblem,
        kernel: Kernel,
        grid: PeriodicGrid,
        op: DivergenceOperator,
        dt: float,
    ):
        self.problem = problem
        self.op = op
        self.h = grid.h
        self.dt = dt
        self.s = problem.s
        half = 0.5 * problem.eta
        # Window slice along each axis: every node within reach of the kernel support
        window = []
        for axis in grid.axes:
            inside = np.nonzero(np.abs(axis) <= half + grid.h)[0]
            window.append(slice(int(inside[0]), int(inside[-1]) + 1))
        self.window = tuple(window)

        self.weights = []
        self.nodal_a = []
        for k in range(grid.dim):
            if problem.flux_sampling == FluxSampling.STAGGERED:
                points = grid.edges(k)[self.window]
            else:
                points = grid.nodes()[self.window]
                x = points + np.asarray(problem.r0)
                self.nodal_a.append(problem.field.diagonal(x, x / problem.eps)[..., k])
            self.weights.append(grid.cell_volume * eval_tensor(kernel, half, points))
        self.time_kernel = lambda t: eval_scaled(kernel, 0.5 * problem.tau, t)
        self.total = np.zeros(grid.dim)

    def add(self, w: np.ndarray, n: int) -> None:
        t = n * self.dt
        # Mirror image t -> -t doubles every level except t = 0
        omega = self.dt * float(self.time_kernel(t)) * (1.0 if n == 0 else 2.0)
        if omega == 0.0:
            return
        for k in range(self.op.dim):
            if self.problem.flux_sampling == FluxSampling.STAGGERED:
                integrand = self.op.edge_flux(w, self.s, k)[self.window]
            else:
                grad = self.s[k] + central_diff(w, k, self.h)[self.window]
                integrand = self.nodal_a[k] * grad
            self.total[k] += omega * float(np.sum(self.weights[k] * integrand))


def solve_micro(
    problem: MicroProblem,
    kernel: Kernel | None = None,
    keep_history: bool = False,
    track_energy: bool = False,
) -> MicroSolution:
    """Leap-frog solve to t = tau/2; accumulates the HMM flux when a kernel is given."""
    grid = build_grid(problem)
    op = build_operator(problem, grid)
    dt, n_steps = time_step(problem, op, grid.h)
    source = op.affine_source(problem.s)

    logger.info(
        f"Micro solve {problem.field.label} r0={problem.r0} eps={problem.eps:.3e}: "
        f"{grid.n}^{grid.dim} nodes, h={grid.h:.3e}, {n_steps} steps of {dt:.3e}"
    )

    accumulator = None
    if kernel is not None:
        accumulator = _FluxAccumulator(problem, kernel, grid, op, dt)
    history = [] if keep_history else None
    energies: list[float] = []
    scales: list[float] = []

    w_prev = np.zeros(grid.shape)
    w = 0.5 * dt * dt * source
    if accumulator is not None:
        accumulator.add(w_prev, 0)
    if history is not None:
        history.extend([w_prev.copy(), w.copy()])
    if track_energy:
        energy, scale = leapfrog_energy(op, w, w_prev, source, dt, grid.cell_volume)
        energies.append(energy)
        scales.append(scale)

    for n in range(1, n_steps):
        if accumulator is not None:
            accumulator.add(w, n)
        w_next = 2.0 * w - w_prev + dt * dt * (op.apply(w) + source)
        if track_energy:
            energy, scale = leapfrog_energy(op, w_next, w, source, dt, grid.cell_volume)
            energies.append(energy)
            scales.append(scale)
        w_prev, w = w, w_next
        if history is not None:
            history.append(w.copy())

    if accumulator is not None:
        accumulator.add(w, n_steps)

    return MicroSolution(
        problem=problem,
        grid=grid,
        dt=dt,
        n_steps=n_steps,
        w_final=w,
        flux=None if accumulator is None else accumulator.total.tolist(),
        history=np.array(history) if history is not None else None,
        energies=energies,
        energy_scales=scales,
    )


def energy_drift(sol: MicroSolution) -> float:
    """Largest deviation of the leap-frog energy relative to the largest term magnitude."""
    if not sol.energies:
        raise ValueError("solution was computed without track_energy=True")
    energies = np.asarray(sol.energies)
    scale = max(max(sol.energy_scales), np.finfo(float).tiny)
    return float(np.max(np.abs(energies - energies[0])) / scale)


def check_time_symmetry(sol: MicroSolution) -> float:
    """Run the scheme backwards from the last two levels down to t = -tau/2.

    Returns max_n |w(-t_n) - w(t_n)| over the stored forward history.
    """
    if sol.history is None:
        raise ValueError("time symmetry check needs a solution computed with keep_history=True")

    op = build_operator(sol.problem, sol.grid)
    source = op.affine_source(sol.problem.s)
    dt2 = sol.dt * sol.dt
    n_steps = sol.n_steps

    w_next, w = sol.history[n_steps], sol.history[n_steps - 1]
    asymmetry = 0.0
    # Level index of `w` walks from n_steps - 1 down to -n_steps
    for level in range(n_steps - 1, -n_steps, -1):
        w_prev = 2.0 * w - w_next + dt2 * (op.apply(w) + source)
        w_next, w = w, w_prev
        mirrored = level - 1
        if mirrored < 0:
            asymmetry = max(asymmetry, float(np.max(np.abs(w - sol.history[-mirrored]))))
    logger.info(f"Time symmetry check: max asymmetry {asymmetry:.3e}")
    return asymmetry


def dump_history_csv(sol: MicroSolution, path: str | Path) -> Path:
    """Write node coordinates and w for every stored step (debug mode)."""
    if sol.history is None:
        raise ValueError("no stored history; solve with keep_history=True")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    nodes = sol.grid.nodes().reshape(-1, sol.grid.dim)
    coord_names = [f"x{k + 1}" for k in range(sol.grid.dim)]

    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["step", "t", *coord_names, "w"])
        for n, level in enumerate(sol.history):
            t = f"{n * sol.dt:.12e}"
            for coords, value in zip(nodes, level.reshape(-1)):
                writer.writerow([n, t, *(f"{c:.12e}" for c in coords), f"{value:.12e}"])
    logger.info(f"Wrote micro history ({len(sol.history)} steps) to {path}")
    return path
