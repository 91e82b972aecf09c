"""HMM macro solver: leap-frog on a coarse grid with homogeneous Dirichlet data.

    U^{n+1} = 2 U^n - U^{n-1} + dt^2 (div_H F + f^n)

Edge fluxes come from micro simulations (flux_mode = hmm) or from the homogenized
tensor (flux_mode = reference). Both are linear in the local slope, so each edge
carries a row of an effective matrix computed once and reused every step.
"""

from __future__ import annotations

import csv
import logging
import math
from collections.abc import Callable
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.config import settings
from app.errors import CflViolation, FluxError
from app.homog_ref import homogenized_tensor
from app.kernels import construct_kernel
from app.media import CoefficientField
from app.micro_sim import MicroProblem
from app.models import FluxMode
from app.upscale import effective_matrix

logger = logging.getLogger(__name__)

SourceFn = Callable[[float, np.ndarray], np.ndarray]
DataFn = Callable[[np.ndarray], np.ndarray]

# Decimal places used when rounding cache keys
CACHE_DIGITS = 10


class MacroConfig(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    field: CoefficientField
    domain: list[tuple[float, float]]
    H: float
    dt: float
    T: float
    f: SourceFn | None = None
    g: DataFn | None = None
    h: DataFn | None = None
    flux_mode: FluxMode = FluxMode.REFERENCE
    cfl: float = Field(default_factory=lambda: settings.macro_cfl)
    snapshot_times: list[float] = []

    # Micro parameters (hmm mode)
    eps: float | None = None
    eta: float | None = None
    tau: float | None = None
    p: int = Field(default_factory=lambda: settings.kernel_p)
    q: int = Field(default_factory=lambda: settings.kernel_q)
    pts_per_eps: int = Field(default_factory=lambda: settings.pts_per_eps)
    micro_cfl: float = Field(default_factory=lambda: settings.micro_cfl)

    # Reference mode
    cell_n: int | None = None

    jobs: int = Field(default_factory=lambda: settings.jobs)

    @model_validator(mode="after")
    def _check(self) -> MacroConfig:
        if len(self.domain) != self.field.dim:
            raise ValueError(
                f"domain has {len(self.domain)} intervals for a {self.field.dim}D field"
            )
        for a, b in self.domain:
            cells = (b - a) / self.H
            if b <= a or abs(cells - round(cells)) > 1e-9 * max(cells, 1.0):
                raise ValueError(f"interval ({a}, {b}) is not a whole number of cells of H")
        if self.dt <= 0 or self.T < 0:
            raise ValueError("need dt > 0 and T >= 0")
        if self.flux_mode == FluxMode.HMM and (self.eps is None or self.eta is None):
            raise ValueError("hmm flux mode needs eps and eta")
        return self

    @property
    def dim(self) -> int:
        return self.field.dim


class MacroGrid:
    """Nodes including the boundary; interior nodes carry the unknowns."""

    def __init__(self, cfg: MacroConfig):
        self.H = cfg.H
        self.dim = cfg.dim
        self.cells = [round((b - a) / cfg.H) for a, b in cfg.domain]
        self.axes = [a + cfg.H * np.arange(n + 1) for (a, _), n in zip(cfg.domain, self.cells)]
        self.shape = tuple(n + 1 for n in self.cells)
        self.interior = tuple(slice(1, n) for n in self.cells)

    def nodes(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def edge_points(self, k: int) -> np.ndarray:
        """Midpoints of the edges along axis k, shape = node shape with axis k shortened."""
        nodes = self.nodes()
        lower = [slice(None)] * self.dim
        lower[k] = slice(0, -1)
        points = nodes[tuple(lower)].copy()
        points[..., k] += 0.5 * self.H
        return points

    def needed_edges(self, k: int) -> tuple[slice, ...]:
        """Edges whose flux enters an interior update (interior along the other axes)."""
        return tuple(slice(None) if j == k else slice(1, self.cells[j]) for j in range(self.dim))


class MacroState(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    U_prev: np.ndarray
    U: np.ndarray
    n: int = 1
    t: float = 0.0
    # Effective-matrix rows per direction: edge array shape + (d,)
    edge_rows: list[np.ndarray]
    flux_cache: dict[tuple, np.ndarray] = {}


class Trajectory(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    axes: list[np.ndarray]
    times: list[float]
    snapshots: list[np.ndarray]
    final: np.ndarray
    dt: float
    energies: list[float] = []


def check_cfl(cfg: MacroConfig) -> None:
    limit = cfg.cfl * cfg.H / math.sqrt(cfg.field.c2)
    if cfg.dt > limit * (1.0 + 1e-12):
        raise CflViolation(f"macro dt={cfg.dt} exceeds cfl*H/sqrt(c2) = {limit:.4e}")


# --- Slopes ---


def _stencil(k: int, across_offsets: tuple[int, ...], dim: int, H: float):
    """Offsets and least-squares weights for the plane fit around a k-edge."""
    offsets = []
    rows = []
    for across in across_offsets:
        for along in (0, 1):
            offset = [0] * dim
            offset[k] = along
            if dim == 2:
                offset[1 - k] = across
            relative = np.array(offset, dtype=float) * H
            relative[k] -= 0.5 * H
            offsets.append(tuple(offset))
            rows.append([1.0, *relative])
    design = np.array(rows)
    weights = np.linalg.pinv(design)[1:]
    return offsets, weights


def local_slope(U: np.ndarray, edge: tuple[float, ...], H: float) -> np.ndarray:
    """Gradient across one edge given by its half-index location.

    In 1D edge = (i + 0.5,) gives (U[i+1] - U[i]) / H. In 2D exactly one component is a
    half-integer; the slope is the gradient of the least-squares plane through the
    6-point stencil, shifted to a one-sided stencil on boundary rows.
    """
    dim = U.ndim
    halves = [j for j, v in enumerate(edge) if abs(v - math.floor(v) - 0.5) < 1e-12]
    if len(halves) != 1:
        raise ValueError(f"edge {edge} must have exactly one half-integer component")
    k = halves[0]
    base = [int(math.floor(v)) for v in edge]
    if not 0 <= base[k] < U.shape[k] - 1:
        raise IndexError(f"edge {edge} outside the grid")

    if dim == 1:
        return np.array([(U[base[0] + 1] - U[base[0]]) / H])

    other = 1 - k
    j = base[other]
    last = U.shape[other] - 1
    if not 0 <= j <= last:
        raise IndexError(f"edge {edge} outside the grid")
    if 0 < j < last:
        across = (-1, 0, 1)
    elif j == 0:
        across = (0, 1, 2)
    else:
        across = (-2, -1, 0)

    offsets, weights = _stencil(k, across, dim, H)
    values = np.array([U[base[0] + o[0], base[1] + o[1]] for o in offsets])
    return weights @ values


def edge_slopes(U: np.ndarray, H: float) -> list[np.ndarray]:
    """Slopes on every needed edge, per direction; shape edge array + (d,)."""
    dim = U.ndim
    if dim == 1:
        return [((U[1:] - U[:-1]) / H)[:, None]]

    n1, n2 = U.shape[0] - 1, U.shape[1] - 1
    out = []
    for k in range(2):
        edge_shape = (n1, n2 + 1) if k == 0 else (n1 + 1, n2)
        slopes = np.zeros(edge_shape + (2,))
        offsets, weights = _stencil(k, (-1, 0, 1), 2, H)
        across_len = (n2 if k == 0 else n1) - 1
        values = []
        for o in offsets:
            if k == 0:
                values.append(U[o[0] : o[0] + n1, 1 + o[1] : 1 + o[1] + across_len])
            else:
                values.append(U[1 + o[0] : 1 + o[0] + across_len, o[1] : o[1] + n2])
        stack = np.stack(values, axis=-1)
        fitted = stack @ weights.T
        if k == 0:
            slopes[:, 1:n2] = fitted
        else:
            slopes[1:n1, :] = fitted
        out.append(slopes)
    return out


# --- Effective flux rows ---


def _reference_row(field: CoefficientField, x: np.ndarray, n: int | None) -> np.ndarray:
    return homogenized_tensor(field, x.tolist(), n).matrix()


def _hmm_matrix(cfg: MacroConfig, x: np.ndarray) -> np.ndarray:
    problem = MicroProblem(
        field=cfg.field,
        r0=x.tolist(),
        s=[0.0] * cfg.dim,
        eps=cfg.eps,
        eta=cfg.eta,
        tau=cfg.tau or cfg.eta,
        pts_per_eps=cfg.pts_per_eps,
        cfl=cfg.micro_cfl,
    )
    return effective_matrix(problem, construct_kernel(cfg.p, cfg.q))


def _cache_key(cfg: MacroConfig, x: np.ndarray) -> tuple:
    if cfg.field.x_independent:
        if cfg.flux_mode == FluxMode.REFERENCE:
            return ("x-independent",)
        # The micro problem only sees the fast phase r0/eps mod 1
        return tuple(np.round(np.mod(x / cfg.eps, 1.0), CACHE_DIGITS).tolist())
    return tuple(np.round(x, CACHE_DIGITS).tolist())


def build_edge_rows(
    cfg: MacroConfig, grid: MacroGrid, cache: dict[tuple, np.ndarray]
) -> list[np.ndarray]:
    """Effective matrices at every needed edge, filling the cache by a parallel map."""
    wanted: dict[tuple, np.ndarray] = {}
    per_direction = []
    for k in range(grid.dim):
        points = grid.edge_points(k)[grid.needed_edges(k)]
        flat = points.reshape(-1, grid.dim)
        keys = [_cache_key(cfg, x) for x in flat]
        for key, x in zip(keys, flat):
            if key not in cache and key not in wanted:
                wanted[key] = x
        per_direction.append((points.shape[:-1], keys))

    if wanted:
        logger.info(
            f"Computing {len(wanted)} {cfg.flux_mode.value} flux matrices with {cfg.jobs} jobs"
        )
        if cfg.flux_mode == FluxMode.REFERENCE:
            tasks = (delayed(_reference_row)(cfg.field, x, cfg.cell_n) for x in wanted.values())
        else:
            tasks = (delayed(_hmm_matrix)(cfg, x) for x in wanted.values())
        results = Parallel(n_jobs=cfg.jobs)(tasks)
        # Insertion happens here, after the map, in the calling thread
        for key, matrix in zip(wanted, results):
            cache[key] = np.asarray(matrix)

    rows = []
    for k, (shape, keys) in enumerate(per_direction):
        full_shape = grid.edge_points(k).shape[:-1]
        row = np.zeros(full_shape + (grid.dim,))
        row[grid.needed_edges(k)] = np.array([cache[key][k] for key in keys]).reshape(
            shape + (grid.dim,)
        )
        rows.append(row)
    return rows


# --- Time stepping ---


def divergence(state_rows: list[np.ndarray], U: np.ndarray, grid: MacroGrid) -> np.ndarray:
    """div_H F on interior nodes, raising FluxError at the first bad edge."""
    slopes = edge_slopes(U, grid.H)
    out = np.zeros(tuple(n - 1 for n in grid.cells))
    for k in range(grid.dim):
        flux = np.sum(state_rows[k] * slopes[k], axis=-1)
        needed = flux[grid.needed_edges(k)]
        if not np.all(np.isfinite(needed)):
            bad = np.argwhere(~np.isfinite(needed))[0]
            location = grid.edge_points(k)[grid.needed_edges(k)][tuple(bad)]
            raise FluxError("non-finite flux", tuple(location.tolist()))
        if grid.dim == 1:
            out += (flux[1:] - flux[:-1]) / grid.H
        elif k == 0:
            out += (flux[1:, 1:-1] - flux[:-1, 1:-1]) / grid.H
        else:
            out += (flux[1:-1, 1:] - flux[1:-1, :-1]) / grid.H
    return out


def _source(cfg: MacroConfig, grid: MacroGrid, t: float) -> np.ndarray:
    if cfg.f is None:
        return 0.0
    interior_nodes = grid.nodes()[grid.interior]
    return np.broadcast_to(cfg.f(t, interior_nodes), interior_nodes.shape[:-1])


def init_first_step(cfg: MacroConfig, cache: dict[tuple, np.ndarray] | None = None) -> MacroState:
    """U^0 = g and the Taylor step U^1 = g + dt h + dt^2/2 (div F(grad g) + f(0))."""
    check_cfl(cfg)
    grid = MacroGrid(cfg)
    cache = {} if cache is None else cache
    rows = build_edge_rows(cfg, grid, cache)
    nodes = grid.nodes()

    U0 = np.zeros(grid.shape)
    if cfg.g is not None:
        U0[grid.interior] = np.broadcast_to(cfg.g(nodes), grid.shape)[grid.interior]
    velocity = np.zeros(grid.shape)
    if cfg.h is not None:
        velocity[grid.interior] = np.broadcast_to(cfg.h(nodes), grid.shape)[grid.interior]

    acceleration = divergence(rows, U0, grid) + _source(cfg, grid, 0.0)
    U1 = np.zeros(grid.shape)
    U1[grid.interior] = (
        U0[grid.interior] + cfg.dt * velocity[grid.interior] + 0.5 * cfg.dt**2 * acceleration
    )
    return MacroState(U_prev=U0, U=U1, n=1, t=cfg.dt, edge_rows=rows, flux_cache=cache)


def step_macro(state: MacroState, cfg: MacroConfig) -> MacroState:
    grid = MacroGrid(cfg)
    acceleration = divergence(state.edge_rows, state.U, grid) + _source(cfg, grid, state.t)
    U_next = np.zeros_like(state.U)
    U_next[grid.interior] = (
        2.0 * state.U[grid.interior] - state.U_prev[grid.interior] + cfg.dt**2 * acceleration
    )
    return state.model_copy(
        update={"U_prev": state.U, "U": U_next, "n": state.n + 1, "t": state.t + cfg.dt}
    )


def macro_energy(state: MacroState, cfg: MacroConfig) -> float:
    """Source-free leap-frog energy between the two stored levels."""
    grid = MacroGrid(cfg)
    volume = grid.H**grid.dim
    velocity = (state.U - state.U_prev)[grid.interior] / cfg.dt
    work = divergence(state.edge_rows, state.U_prev, grid)
    return float(volume * (0.5 * np.sum(velocity**2) - 0.5 * np.sum(state.U[grid.interior] * work)))


def run_macro(cfg: MacroConfig) -> Trajectory:
    """Step to T; snapshots at the levels nearest to cfg.snapshot_times."""
    grid = MacroGrid(cfg)
    if cfg.T == 0:
        state = init_first_step(cfg)
        return Trajectory(
            axes=grid.axes, times=[0.0], snapshots=[state.U_prev], final=state.U_prev, dt=cfg.dt
        )

    n_steps = max(math.ceil(cfg.T / cfg.dt - 1e-9), 1)
    cfg = cfg.model_copy(update={"dt": cfg.T / n_steps})
    snapshot_steps = {min(round(t / cfg.dt), n_steps): t for t in cfg.snapshot_times}

    state = init_first_step(cfg)
    times, snapshots, energies = [], [], [macro_energy(state, cfg)]
    if 0 in snapshot_steps:
        times.append(0.0)
        snapshots.append(state.U_prev.copy())

    logger.info(f"Macro run {cfg.flux_mode.value}: {grid.shape} nodes, {n_steps} steps")
    for n in range(1, n_steps):
        if n in snapshot_steps:
            times.append(n * cfg.dt)
            snapshots.append(state.U.copy())
        state = step_macro(state, cfg)
        energies.append(macro_energy(state, cfg))

    if n_steps in snapshot_steps:
        times.append(cfg.T)
        snapshots.append(state.U.copy())
    return Trajectory(
        axes=grid.axes, times=times, snapshots=snapshots, final=state.U, dt=cfg.dt,
        energies=energies,
    )


def l2_norm(U: np.ndarray, H: float) -> float:
    return float(np.sqrt(H**U.ndim * np.sum(U * U)))


def l2_error(traj: Trajectory, exact: DataFn) -> float:
    """Final-time discrete L2 error against exact(x) on the node grid."""
    nodes = np.stack(np.meshgrid(*traj.axes, indexing="ij"), axis=-1)
    H = float(traj.axes[0][1] - traj.axes[0][0])
    return l2_norm(traj.final - exact(nodes), H)


def write_snapshots_csv(traj: Trajectory, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    nodes = np.stack(np.meshgrid(*traj.axes, indexing="ij"), axis=-1).reshape(-1, len(traj.axes))
    items = [(f"{t:.12e}", u) for t, u in zip(traj.times, traj.snapshots)]
    items.append(("final", traj.final))
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["t", *(f"x{k + 1}" for k in range(len(traj.axes))), "U"])
        for label, snapshot in items:
            for coords, value in zip(nodes, snapshot.reshape(-1)):
                writer.writerow([label, *(f"{c:.12e}" for c in coords), f"{value:.12e}"])
    return path
