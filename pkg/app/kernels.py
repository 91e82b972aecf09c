"""Averaging kernels with compact support, vanishing moments and C^q smoothness.

A kernel of class (p, q) is K(x) = P(x) (1 - x^2)^(q+1) on [-1, 1] and zero outside,
with P an even polynomial of degree <= p fitted so that K has unit mass and its even
moments 2, 4, ... <= p vanish. Odd moments vanish by symmetry.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable

import numpy as np
from numpy.polynomial import polynomial as npoly
from pydantic import BaseModel, ConfigDict
from scipy import integrate, special

from app.errors import KernelConstructionError

logger = logging.getLogger(__name__)

# Points per period of the integrand for the periodic-average quadrature
POINTS_PER_PERIOD = 64
MIN_QUAD_POINTS = 4097


class Kernel(BaseModel):
    """Immutable kernel description; coeffs are the ascending coefficients of P."""

    model_config = ConfigDict(frozen=True)

    p: int
    q: int
    coeffs: tuple[float, ...]

    def __call__(self, x: np.ndarray | float) -> np.ndarray:
        return evaluate(self, x)


def construct_kernel(p: int, q: int) -> Kernel:
    """Fit the even polynomial factor of a (p, q) kernel.

    Args:
        p: Largest vanishing moment index (>= 1).
        q: Smoothness order (>= 0); K and its first q derivatives vanish at +-1.

    Returns:
        The kernel with unit mass and moments 1..p equal to zero.
    """
    if p < 1 or q < 0:
        raise ValueError(f"kernel needs p >= 1 and q >= 0, got p={p}, q={q}")

    m = p // 2
    n = q + 1
    # int_{-1}^{1} x^(2k) (1 - x^2)^n dx = B(k + 1/2, n + 1)
    idx = np.arange(m + 1)
    gram = special.beta(idx[:, None] + idx[None, :] + 0.5, n + 1)
    rhs = np.zeros(m + 1)
    rhs[0] = 1.0
    try:
        even = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise KernelConstructionError(f"moment system for (p={p}, q={q}) is singular") from exc

    coeffs = np.zeros(2 * m + 1)
    coeffs[0::2] = even
    logger.debug(f"Kernel (p={p}, q={q}) coefficients {coeffs.tolist()}")
    return Kernel(p=p, q=q, coeffs=tuple(float(c) for c in coeffs))


def evaluate(k: Kernel, x: np.ndarray | float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1.0
    xi = np.where(inside, x, 0.0)
    values = npoly.polyval(xi, k.coeffs) * (1.0 - xi * xi) ** (k.q + 1)
    return np.where(inside, values, 0.0)


def derivative(k: Kernel, order: int, x: np.ndarray | float) -> np.ndarray:
    """Evaluate K^(order) from the factored form P (1 - x)^n (1 + x)^n.

    The weight derivatives keep their (1 -+ x) factors, so derivatives up to order q
    are exactly zero at the support boundary.
    """
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) <= 1.0
    xi = np.where(inside, x, 0.0)
    n = k.q + 1

    def weight_derivative(j: int) -> np.ndarray:
        total = np.zeros_like(xi)
        for i in range(j + 1):
            if i > n or j - i > n:
                continue
            left = (-1) ** i * math.perm(n, i) * (1.0 - xi) ** (n - i)
            right = math.perm(n, j - i) * (1.0 + xi) ** (n - (j - i))
            total += math.comb(j, i) * left * right
        return total

    values = np.zeros_like(xi)
    for j in range(order + 1):
        p_deriv = npoly.polyder(k.coeffs, order - j) if order - j > 0 else np.asarray(k.coeffs)
        values += math.comb(order, j) * npoly.polyval(xi, p_deriv) * weight_derivative(j)
    return np.where(inside, values, 0.0)


def eval_scaled(k: Kernel, eta: float, x: np.ndarray | float) -> np.ndarray:
    """K_eta(x) = K(x / eta) / eta, supported on [-eta, eta]."""
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    return evaluate(k, np.asarray(x, dtype=float) / eta) / eta


def eval_tensor(k: Kernel, eta: float, points: np.ndarray) -> np.ndarray:
    """Tensor-product scaled kernel over the last axis of points (shape (..., d))."""
    return np.prod(eval_scaled(k, eta, points), axis=-1)


def moment(k: Kernel, r: int, quad_points: int) -> float:
    """Composite Simpson approximation of the r-th moment of K."""
    if r < 0 or quad_points < 2:
        raise ValueError(f"moment needs r >= 0 and quad_points >= 2, got r={r}, {quad_points}")
    t = np.linspace(-1.0, 1.0, quad_points)
    return float(integrate.simpson(evaluate(k, t) * t**r, x=t))


def moment_table(k: Kernel, quad_points: int = 10_001) -> list[tuple[int, float]]:
    """Moments r = 0..p+1; the last row shows the first non-vanishing moment."""
    return [(r, moment(k, r, quad_points)) for r in range(k.p + 2)]


def periodic_average_test(
    k: Kernel,
    eta: float,
    eps: float,
    f: Callable[[np.ndarray], np.ndarray],
) -> float:
    """Return |int K_eta(t) f(t/eps) dt - mean(f)| for a 1-periodic f.

    Both integrals use the trapezoid rule; the convolution is resolved with
    POINTS_PER_PERIOD points per eps-period.
    """
    if not 0 < eps <= eta:
        raise ValueError(f"need 0 < eps <= eta, got eps={eps}, eta={eta}")

    n = max(math.ceil(2.0 * eta / eps * POINTS_PER_PERIOD) + 1, MIN_QUAD_POINTS)
    t = np.linspace(-eta, eta, n)
    average = integrate.trapezoid(eval_scaled(k, eta, t) * f(t / eps), x=t)

    # Trapezoid on a periodic grid is exact for trigonometric polynomials
    cell = np.arange(MIN_QUAD_POINTS) / MIN_QUAD_POINTS
    mean = float(np.mean(f(cell)))
    return float(abs(average - mean))
