"""Periodic grids and the conservative second-order divergence-form stencil.

Edge arrays are indexed by their left node: entry i along axis k lives at
x_i + (h/2) e_k. All differences wrap around (periodic box).
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np


class PeriodicGrid:
    """Uniform grid with n nodes per axis starting at `lower`, spacing h."""

    def __init__(self, lower: Sequence[float], n: int, h: float):
        self.lower = np.asarray(lower, dtype=float)
        self.dim = len(self.lower)
        self.n = n
        self.h = h
        self.axes = [self.lower[k] + h * np.arange(n) for k in range(self.dim)]

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape (n,)*d + (d,)."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def edges(self, k: int) -> np.ndarray:
        """Midpoints of the edges along axis k, same layout as nodes()."""
        shift = np.zeros(self.dim)
        shift[k] = 0.5 * self.h
        return self.nodes() + shift

    def mean(self, v: np.ndarray) -> float:
        return float(np.mean(v))

    def l2_norm(self, v: np.ndarray) -> float:
        return float(np.sqrt(self.cell_volume * np.sum(v * v)))

    def h1_norm(self, v: np.ndarray) -> float:
        total = np.sum(v * v)
        for k in range(self.dim):
            dv = forward_diff(v, k, self.h)
            total += np.sum(dv * dv)
        return float(np.sqrt(self.cell_volume * total))


def forward_diff(w: np.ndarray, k: int, h: float) -> np.ndarray:
    """D+_k: nodes to k-edges."""
    return (np.roll(w, -1, axis=k) - w) / h


def backward_div(phi: np.ndarray, k: int, h: float) -> np.ndarray:
    """D-_k: k-edges to nodes."""
    return (phi - np.roll(phi, 1, axis=k)) / h


def central_diff(w: np.ndarray, k: int, h: float) -> np.ndarray:
    return (np.roll(w, -1, axis=k) - np.roll(w, 1, axis=k)) / (2.0 * h)


def edge_average(v: np.ndarray, k: int) -> np.ndarray:
    """E_k: nodes to k-edges."""
    return 0.5 * (v + np.roll(v, -1, axis=k))


def node_average(phi: np.ndarray, k: int) -> np.ndarray:
    """E'_k: k-edges to nodes."""
    return 0.5 * (phi + np.roll(phi, 1, axis=k))


class DivergenceOperator:
    """L w = sum_k D-_k(a_k D+_k w) for diagonal coefficients sampled on edges.

    The operator is symmetric negative semi-definite and annihilates constants.
    """

    def __init__(self, edge_coeffs: Sequence[np.ndarray], h: float):
        self.a = [np.asarray(a, dtype=float) for a in edge_coeffs]
        self.h = h
        self.dim = len(self.a)

    def apply(self, w: np.ndarray) -> np.ndarray:
        out = np.zeros_like(w)
        for k in range(self.dim):
            out += backward_div(self.a[k] * forward_diff(w, k, self.h), k, self.h)
        return out

    def affine_source(self, s: Sequence[float]) -> np.ndarray:
        """Discrete div(A s): the operator applied to the linear function s.x."""
        out = np.zeros(self.a[0].shape)
        for k in range(self.dim):
            out += backward_div(self.a[k] * s[k], k, self.h)
        return out

    def edge_flux(self, w: np.ndarray, s: Sequence[float], k: int) -> np.ndarray:
        """a_k (s_k + D+_k w) on the k-edges."""
        return self.a[k] * (s[k] + forward_diff(w, k, self.h))

    def product_term(self, v: np.ndarray, k: int) -> np.ndarray:
        """D-_k(a_k E_k v) + E'_k(a_k D+_k v), so that L[y_k v] = y_k L[v] + product_term."""
        flux = self.a[k] * edge_average(v, k)
        return backward_div(flux, k, self.h) + node_average(
            self.a[k] * forward_diff(v, k, self.h), k
        )

    def diagonal(self) -> np.ndarray:
        out = np.zeros(self.a[0].shape)
        for k in range(self.dim):
            out -= (self.a[k] + np.roll(self.a[k], 1, axis=k)) / self.h**2
        return out

    def max_coefficient(self) -> float:
        return float(max(np.max(a) for a in self.a))


def leapfrog_energy(
    op: DivergenceOperator,
    w_next: np.ndarray,
    w: np.ndarray,
    source: np.ndarray | None,
    dt: float,
    cell_volume: float,
) -> tuple[float, float]:
    """Conserved leap-frog quadratic form between levels n and n+1.

    Returns (energy, scale) where scale is the sum of term magnitudes, used to
    express drift relative to the energy actually in motion.
    """
    velocity = (w_next - w) / dt
    kinetic = 0.5 * np.sum(velocity * velocity)
    potential = -0.5 * np.sum(w_next * op.apply(w))
    work = 0.0 if source is None else -0.5 * np.sum(source * (w_next + w))
    energy = cell_volume * (kinetic + potential + work)
    scale = cell_volume * (abs(kinetic) + abs(potential) + abs(work))
    return float(energy), float(scale)
