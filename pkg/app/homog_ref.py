"""Reference engine: periodic cell problems and the homogenized tensor A0(x).

The cell problems div_y(A grad chi_l + A e_l) = 0 are discretized with the same
conservative stencil as the micro solver, so a cell grid with N = pts_per_eps is the
exact discrete limit of the staggered micro flux.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.sparse.linalg import LinearOperator, cg

from app.config import settings
from app.errors import SolverNonConvergence
from app.media import CoefficientField
from app.models import FluxMode, FluxVector
from app.stencil import DivergenceOperator, PeriodicGrid, forward_diff

logger = logging.getLogger(__name__)


class CellSolution(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    x: list[float]
    n: int
    grid: PeriodicGrid
    operator: DivergenceOperator
    correctors: list[np.ndarray]  # zero-mean periodic grid functions, one per direction
    residual: float
    iterations: int


class HomogenizedTensor(BaseModel):
    x: list[float]
    a0: list[list[float]]
    eigenvalues: list[float]
    n: int
    tol: float

    def matrix(self) -> np.ndarray:
        return np.asarray(self.a0)


def default_cell_n(dim: int) -> int:
    return settings.cell_n_1d if dim == 1 else settings.cell_n_2d


def cell_operator(
    field: CoefficientField, x: list[float], n: int
) -> tuple[PeriodicGrid, DivergenceOperator]:
    grid = PeriodicGrid([0.0] * field.dim, n, 1.0 / n)
    slow = np.asarray(x, dtype=float)
    coeffs = [field.diagonal(slow, grid.edges(k))[..., k] for k in range(field.dim)]
    return grid, DivergenceOperator(coeffs, grid.h)


def solve_cell(
    field: CoefficientField,
    x: list[float],
    n: int | None = None,
    tol: float | None = None,
) -> CellSolution:
    """Solve the d cell problems at slow point x with preconditioned CG.

    Args:
        field: Coefficient; must be diagonal.
        x: Slow point where A(x, .) is frozen.
        n: Cell grid points per axis (>= 32); defaults from settings.
        tol: Required residual in the discrete L2 norm.

    Raises:
        SolverNonConvergence: if any corrector misses the residual tolerance.
    """
    n = n or default_cell_n(field.dim)
    tol = tol or settings.cell_tol
    if n < 32:
        raise ValueError(f"cell grid needs N >= 32, got {n}")

    grid, op = cell_operator(field, x, n)
    shape = grid.shape
    size = grid.n**grid.dim
    scale = np.sqrt(grid.cell_volume)

    negative_l = LinearOperator(
        (size, size), matvec=lambda v: -op.apply(v.reshape(shape)).ravel(), dtype=float
    )
    inverse_diag = 1.0 / (-op.diagonal().ravel())
    jacobi = LinearOperator((size, size), matvec=lambda v: inverse_diag * v, dtype=float)

    correctors = []
    worst_residual = 0.0
    total_iterations = 0
    for ell in range(field.dim):
        unit = np.zeros(field.dim)
        unit[ell] = 1.0
        rhs = op.affine_source(unit).ravel()
        rhs -= rhs.mean()

        iterations = 0

        def count(_xk):
            nonlocal iterations
            iterations += 1

        # Euclidean stopping threshold matching 0.1 * tol in the discrete norm
        chi, info = cg(
            negative_l,
            rhs,
            rtol=0.0,
            atol=0.1 * tol / scale,
            maxiter=settings.cell_max_iter,
            M=jacobi,
            callback=count,
        )
        chi -= chi.mean()
        residual = scale * float(np.linalg.norm(rhs - negative_l.matvec(chi)))
        if residual > tol:
            raise SolverNonConvergence(
                f"cell problem {ell + 1} at x={list(x)} did not converge (cg info={info})",
                iterations,
                residual,
            )
        correctors.append(chi.reshape(shape))
        worst_residual = max(worst_residual, residual)
        total_iterations += iterations

    logger.info(
        f"Cell solve {field.label} x={list(x)} N={n}: {total_iterations} CG iterations, "
        f"residual {worst_residual:.2e}"
    )
    return CellSolution(
        x=[float(v) for v in x],
        n=n,
        grid=grid,
        operator=op,
        correctors=correctors,
        residual=worst_residual,
        iterations=total_iterations,
    )


def tensor_from_cell(sol: CellSolution, field: CoefficientField) -> HomogenizedTensor:
    """A0_ij = cell mean of a_i (delta_ij + D+_i chi_j), symmetrized."""
    d = sol.grid.dim
    a0 = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            gradient = forward_diff(sol.correctors[j], i, sol.grid.h) + (1.0 if i == j else 0.0)
            a0[i, j] = np.mean(sol.operator.a[i] * gradient)
    a0 = 0.5 * (a0 + a0.T)
    eigenvalues = np.linalg.eigvalsh(a0)
    if eigenvalues[0] < field.c1 - 1e-8 or eigenvalues[-1] > field.c2 + 1e-8:
        logger.warning(
            f"A0 eigenvalues {eigenvalues.tolist()} outside [{field.c1}, {field.c2}] "
            f"for {field.label}"
        )
    return HomogenizedTensor(
        x=sol.x,
        a0=a0.tolist(),
        eigenvalues=eigenvalues.tolist(),
        n=sol.n,
        tol=sol.residual,
    )


def homogenized_tensor(
    field: CoefficientField, x: list[float], n: int | None = None
) -> HomogenizedTensor:
    return tensor_from_cell(solve_cell(field, x, n), field)


def homogenized_flux(t: HomogenizedTensor, s: list[float]) -> FluxVector:
    """F_hat = A0(x) s."""
    value = t.matrix() @ np.asarray(s, dtype=float)
    return FluxVector(
        value=value.tolist(),
        r0=t.x,
        slope=[float(v) for v in s],
        source=FluxMode.REFERENCE,
        resolution=t.n,
    )


def cell_means(field: CoefficientField, x: list[float], n: int) -> tuple[np.ndarray, np.ndarray]:
    """Harmonic and arithmetic cell means of each diagonal entry (Voigt-Reuss bounds)."""
    grid = PeriodicGrid([0.0] * field.dim, n, 1.0 / n)
    a = field.diagonal(np.asarray(x, dtype=float), grid.nodes())
    axes = tuple(range(field.dim))
    harmonic = 1.0 / np.mean(1.0 / a, axis=axes)
    arithmetic = np.mean(a, axis=axes)
    return harmonic, arithmetic


def dump_correctors_csv(sol: CellSolution, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    nodes = sol.grid.nodes().reshape(-1, sol.grid.dim)
    columns = [c.reshape(-1) for c in sol.correctors]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(
            [f"y{k + 1}" for k in range(sol.grid.dim)]
            + [f"chi{k + 1}" for k in range(len(columns))]
        )
        for row, coords in enumerate(nodes):
            writer.writerow(
                [f"{c:.12e}" for c in coords] + [f"{col[row]:.12e}" for col in columns]
            )
    return path
