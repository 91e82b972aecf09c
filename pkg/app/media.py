"""Locally periodic coefficients A(x, y), the built-in catalog, and validation.

Points are arrays whose last axis is the spatial dimension d, so every coefficient
function is vectorized over arbitrary leading shapes.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict

from app.config import settings
from app.errors import CoefficientError, ValidationFailure
from app.models import ValidationReport

logger = logging.getLogger(__name__)

PointFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

TWO_PI = 2.0 * np.pi
# Step for finite-difference slow derivatives when no analytic form is given
FD_STEP = 1e-5


class CoefficientField(BaseModel):
    """A(x, y) = diag(a_1, ..., a_d) + off-diagonal part, 1-periodic in y.

    `diag` returns (..., d); `diag_grad` returns (..., d, d) with [..., j, k] = d/dx_j a_k;
    `diag_hess` returns (..., d, d, d) with [..., i, j, k] = d2/dx_i dx_j a_k.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    label: str
    dim: int
    c1: float
    c2: float
    diag: PointFn
    diag_grad: PointFn | None = None
    diag_hess: PointFn | None = None
    off_diag: PointFn | None = None
    x_independent: bool = False

    def eval(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x, y = _as_points(x, self.dim), _as_points(y, self.dim)
        d = self.diag(x, y)
        matrix = d[..., :, None] * np.eye(self.dim)
        if self.off_diag is not None:
            matrix = matrix + self.off_diag(x, y)
        return matrix

    def diagonal(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Diagonal entries; the grid solvers only handle diagonal tensors."""
        if self.off_diag is not None:
            raise CoefficientError(f"{self.label}: grid operators need a diagonal coefficient")
        return self.diag(_as_points(x, self.dim), _as_points(y, self.dim))

    def diagonal_grad(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x, y = _as_points(x, self.dim), _as_points(y, self.dim)
        if self.diag_grad is not None:
            return self.diag_grad(x, y)
        return _fd_grad(self.diag, x, y, self.dim)

    def diagonal_hess(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x, y = _as_points(x, self.dim), _as_points(y, self.dim)
        if self.diag_hess is not None:
            return self.diag_hess(x, y)
        columns = []
        for j in range(self.dim):
            column = lambda xx, yy, j=j: self.diagonal_grad(xx, yy)[..., j, :]  # noqa: E731
            columns.append(_fd_grad(column, x, y, self.dim))
        return np.stack(columns, axis=-2)

    def slow_grad(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Full matrices dA/dx_j stacked as (..., d, d, d) with j on axis -3."""
        x, y = _as_points(x, self.dim), _as_points(y, self.dim)
        grad = self.diagonal_grad(x, y)[..., :, :, None] * np.eye(self.dim)
        if self.off_diag is not None:
            grad = grad + _fd_grad(self.off_diag, x, y, self.dim)
        return grad

    def shifted(self, r0: np.ndarray | float, gamma: np.ndarray | float = 0.0) -> CoefficientField:
        """The coefficient (x, y) -> A(x + r0, y + gamma)."""
        r0 = np.broadcast_to(np.asarray(r0, dtype=float), (self.dim,)).copy()
        gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (self.dim,)).copy()

        def wrap(fn: PointFn | None) -> PointFn | None:
            if fn is None:
                return None
            return lambda x, y: fn(x + r0, y + gamma)

        return self.model_copy(
            update={
                "label": f"{self.label}@{r0.round(12).tolist()}",
                "diag": wrap(self.diag),
                "diag_grad": wrap(self.diag_grad),
                "diag_hess": wrap(self.diag_hess),
                "off_diag": wrap(self.off_diag),
            }
        )


def _as_points(p: np.ndarray | float, dim: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if dim == 1 and (p.ndim == 0 or p.shape[-1] != 1):
        p = p[..., None]
    return p


def _fd_grad(fn: PointFn, x: np.ndarray, y: np.ndarray, dim: int) -> np.ndarray:
    """Central differences in x; derivative index inserted before fn's trailing axis."""
    parts = []
    for j in range(dim):
        step = np.zeros(dim)
        step[j] = FD_STEP
        parts.append((fn(x + step, y) - fn(x - step, y)) / (2.0 * FD_STEP))
    leading = len(np.broadcast_shapes(x.shape, y.shape)) - 1
    return np.stack(parts, axis=leading)


def scalar_field(
    label: str,
    dim: int,
    a: PointFn,
    c1: float,
    c2: float,
    a_grad: PointFn | None = None,
    a_hess: PointFn | None = None,
    x_independent: bool = False,
) -> CoefficientField:
    """Build the field a(x, y) I from a scalar function and its slow derivatives.

    a returns (...); a_grad returns (..., d); a_hess returns (..., d, d).
    """
    ones = np.ones(dim)

    def diag(x, y):
        return a(x, y)[..., None] * ones

    diag_grad = None
    if a_grad is not None:

        def diag_grad(x, y):
            return a_grad(x, y)[..., :, None] * ones

    diag_hess = None
    if a_hess is not None:

        def diag_hess(x, y):
            return a_hess(x, y)[..., :, :, None] * ones

    return CoefficientField(
        label=label,
        dim=dim,
        c1=c1,
        c2=c2,
        diag=diag,
        diag_grad=diag_grad,
        diag_hess=diag_hess,
        x_independent=x_independent,
    )


# --- Catalog ---


def _zeros_grad(x, y):
    return np.zeros(np.broadcast_shapes(x.shape, y.shape))


def _zeros_hess(x, y):
    shape = np.broadcast_shapes(x.shape, y.shape)
    return np.zeros(shape + (shape[-1],))


def _periodic_1d(x, y):
    return 1.1 + 0.5 * (np.sin(0.1) + np.sin(TWO_PI * y[..., 0] + 2.0)) + 0.0 * x[..., 0]


def _locally_periodic_1d(x, y):
    return 1.1 + 0.5 * (np.sin(TWO_PI * x[..., 0] + 0.1) + np.sin(TWO_PI * y[..., 0] + 2.0))


def _locally_periodic_1d_grad(x, y):
    g = np.pi * np.cos(TWO_PI * x[..., 0] + 0.1) + 0.0 * y[..., 0]
    return g[..., None]


def _locally_periodic_1d_hess(x, y):
    h = -2.0 * np.pi**2 * np.sin(TWO_PI * x[..., 0] + 0.1) + 0.0 * y[..., 0]
    return h[..., None, None]


def _fig2_1d(x, y):
    return 1.1 + 0.5 * (np.sin(TWO_PI * x[..., 0]) + np.sin(TWO_PI * y[..., 0]))


def _fig2_1d_grad(x, y):
    return (np.pi * np.cos(TWO_PI * x[..., 0]) + 0.0 * y[..., 0])[..., None]


def _fig2_1d_hess(x, y):
    return (-2.0 * np.pi**2 * np.sin(TWO_PI * x[..., 0]) + 0.0 * y[..., 0])[..., None, None]


def _periodic_2d(x, y):
    value = (1.5 + np.sin(TWO_PI * y[..., 0])) * (1.5 + np.sin(TWO_PI * y[..., 1]))
    return value + 0.0 * x[..., 0]


def _locally_periodic_2d(x, y):
    c = np.cos(TWO_PI * y[..., 0])
    return 1.5 + np.sin(TWO_PI * y[..., 0]) + np.sin(TWO_PI * x[..., 1]) * c


def _locally_periodic_2d_grad(x, y):
    c = np.cos(TWO_PI * y[..., 0])
    d2 = TWO_PI * np.cos(TWO_PI * x[..., 1]) * c
    return np.stack([np.zeros_like(d2), d2], axis=-1)


def _locally_periodic_2d_hess(x, y):
    c = np.cos(TWO_PI * y[..., 0])
    h22 = -(TWO_PI**2) * np.sin(TWO_PI * x[..., 1]) * c
    out = np.zeros(h22.shape + (2, 2))
    out[..., 1, 1] = h22
    return out


CATALOG_NAMES = (
    "constant",
    "periodic-1d",
    "locally-periodic-1d",
    "fig2-1d",
    "periodic-2d",
    "locally-periodic-2d",
)


def catalog(name: str, dim: int = 1, value: float | None = None) -> CoefficientField:
    """Return a built-in coefficient by name.

    Args:
        name: One of CATALOG_NAMES.
        dim: Dimension, only used by "constant" (the other entries fix their own).
        value: The constant a of "constant"; defaults to settings.constant_coefficient.
    """
    if name == "constant":
        a_value = settings.constant_coefficient if value is None else value
        if a_value <= 0:
            raise CoefficientError(f"constant coefficient must be positive, got {a_value}")
        return scalar_field(
            "constant",
            dim,
            lambda x, y: np.full(np.broadcast_shapes(x.shape, y.shape)[:-1], a_value),
            c1=a_value,
            c2=a_value,
            a_grad=_zeros_grad,
            a_hess=_zeros_hess,
            x_independent=True,
        )
    if name == "periodic-1d":
        return scalar_field(
            name, 1, _periodic_1d, 0.6, 1.7, _zeros_grad, _zeros_hess, x_independent=True
        )
    if name == "locally-periodic-1d":
        return scalar_field(
            name, 1, _locally_periodic_1d, 0.1, 2.1,
            _locally_periodic_1d_grad, _locally_periodic_1d_hess,
        )
    if name == "fig2-1d":
        return scalar_field(name, 1, _fig2_1d, 0.1, 2.1, _fig2_1d_grad, _fig2_1d_hess)
    if name == "periodic-2d":
        return scalar_field(
            name, 2, _periodic_2d, 0.25, 6.25, _zeros_grad, _zeros_hess, x_independent=True
        )
    if name == "locally-periodic-2d":
        return scalar_field(
            name, 2, _locally_periodic_2d, 1.5 - np.sqrt(2.0), 1.5 + np.sqrt(2.0),
            _locally_periodic_2d_grad, _locally_periodic_2d_hess,
        )
    raise CoefficientError(f"unknown coefficient {name!r}; known: {', '.join(CATALOG_NAMES)}")


# --- Validation ---


def validate(field: CoefficientField, samples: int = 16) -> ValidationReport:
    """Sample A on a tensor grid of slow points in [0,1)^d and fast points in [0,1)^d.

    Raises ValidationFailure at the first non-positive-definite sample.
    """
    if samples < 16:
        raise ValueError(f"validate needs at least 16 samples per axis, got {samples}")

    axis = np.arange(samples) / samples
    grid = np.array(list(itertools.product(axis, repeat=field.dim)))
    x = grid[:, None, :]
    y = grid[None, :, :]

    matrices = field.eval(x, y)
    symmetry = float(np.max(np.abs(matrices - np.swapaxes(matrices, -1, -2))))
    eigenvalues = np.linalg.eigvalsh(0.5 * (matrices + np.swapaxes(matrices, -1, -2)))
    lowest = eigenvalues[..., 0]

    if np.min(lowest) <= 0.0:
        i, j = np.unravel_index(np.argmin(lowest), lowest.shape)
        bad_x, bad_y = tuple(grid[i].tolist()), tuple(grid[j].tolist())
        raise ValidationFailure(
            f"{field.label}: not positive definite at x={bad_x}, y={bad_y} "
            f"(eigenvalue {lowest[i, j]:.3e})",
            x=bad_x,
            y=bad_y,
        )

    periodicity = 0.0
    for j in range(field.dim):
        shifted = field.eval(x, y + np.eye(field.dim)[j])
        periodicity = max(periodicity, float(np.max(np.abs(shifted - matrices))))

    report = ValidationReport(
        label=field.label,
        samples=samples,
        c1_estimate=float(np.min(lowest)),
        c2_estimate=float(np.max(eigenvalues[..., -1])),
        symmetry_violation=symmetry,
        periodicity_violation=periodicity,
    )
    logger.info(
        f"Validated {field.label}: c1~{report.c1_estimate:.4f}, c2~{report.c2_estimate:.4f}, "
        f"periodicity {report.periodicity_violation:.1e}"
    )
    return report
