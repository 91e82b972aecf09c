"""Numerical realization of the epsilon-expansion of the micro problem.

In the fast variables the micro problem reads

    v_tt = div(A(eps y, y) grad v),   v(0) = s.y,   v_t(0) = 0,

and v = sum_m eps^m / m! v_m with v_0 = s.y + v_00 and v_m forced by the slow Taylor
terms of A. Every quantity here is computed on the same periodic grid and with the same
leap-frog step as the eps-dependent problem, so the truncated expansion is the Taylor
expansion of the discrete solution itself.

The first-order term splits into periodic parts, v_1 = v_10 + sum_j y_j v_11j, whose
kernel time averages d_00, d_11j, d_10 feed the flux decomposition
F = F_0 + eps F_1 + delta + E_tail.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from app.config import settings
from app.errors import BoxTooSmall, CflViolation, HorizonTooShort
from app.homog_ref import CellSolution, homogenized_tensor
from app.kernels import Kernel, eval_scaled, eval_tensor
from app.media import CoefficientField
from app.micro_sim import MicroProblem
from app.models import FluxSampling
from app.stencil import (
    DivergenceOperator,
    PeriodicGrid,
    backward_div,
    edge_average,
    forward_diff,
    node_average,
)
from app.upscale import hmm_flux

logger = logging.getLogger(__name__)

# Highest expansion order with slow derivatives available (gradient and Hessian)
MAX_ORDER = 2
# Snapshots kept per box solve (the final level is always kept)
MAX_SNAPSHOTS = 200


class ExpansionTerm(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    label: str
    order: int
    axes: list[np.ndarray]
    times: list[float]
    values: np.ndarray  # (len(times),) + grid shape
    valid_radius: float = math.inf  # |y| beyond this sees the periodic seam

    def final(self) -> np.ndarray:
        return self.values[-1]


class QuasiPolynomialTerms(BaseModel):
    """Periodic parts of v_0 and v_1 on the unit cell at every time level."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    system: CellSystem
    dt: float
    times: np.ndarray
    v00: np.ndarray
    v11: list[np.ndarray]
    v10_tilde: np.ndarray
    g: np.ndarray
    mean_forcing: np.ndarray
    max_cell_mean: float


class TimeAverage(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    d00: np.ndarray
    d11: list[np.ndarray]
    d10: np.ndarray
    g_avg: float
    eps: float
    tau: float
    p: int
    q: int


class FluxDecomposition(BaseModel):
    eps: float
    eta: float
    flux: list[float]
    f0: list[float]
    eps_f1: list[float]
    delta: list[float]
    tail: list[float]
    reference: list[float]  # A0 s on the matched cell grid


# --- Box solves for v, v_0, v_1, v_2 ---


class ScaledBox:
    """Periodic box [-L, L]^d in the fast variable with edge data of A(eps y, y)."""

    def __init__(
        self,
        field: CoefficientField,
        L: float,
        t_final: float,
        n_per_unit: int | None = None,
        cfl: float | None = None,
    ):
        n_per_unit = n_per_unit or settings.pts_per_eps
        cfl = cfl or settings.micro_cfl
        if abs(L * n_per_unit - round(L * n_per_unit)) > 1e-9:
            raise ValueError(f"L * n_per_unit must be an integer, got L={L}, n={n_per_unit}")
        self.field = field
        self.dim = field.dim
        self.L = L
        self.grid = PeriodicGrid([-L] * field.dim, round(2 * L * n_per_unit), 1.0 / n_per_unit)
        self.edges = [self.grid.edges(k) for k in range(self.dim)]

        zero = np.zeros(self.dim)
        self.a0 = [field.diagonal(zero, e)[..., k] for k, e in enumerate(self.edges)]
        self.slow = [[], []]
        for k, e in enumerate(self.edges):
            grad = field.diagonal_grad(zero, e)[..., :, k]
            hess = field.diagonal_hess(zero, e)[..., :, :, k]
            self.slow[0].append(np.einsum("...j,...j->...", e, grad))
            self.slow[1].append(np.einsum("...i,...j,...ij->...", e, e, hess))

        dt_max = cfl * self.grid.h / math.sqrt(field.c2)
        self.n_steps = max(math.ceil(t_final / dt_max - 1e-9), 1)
        self.dt = t_final / self.n_steps
        if self.dt * math.sqrt(self.dim * field.c2) >= self.grid.h:
            raise CflViolation(f"expansion solve unstable at dt={self.dt:.3e}")

    def coefficients(self, eps: float) -> list[np.ndarray]:
        return [self.field.diagonal(eps * e, e)[..., k] for k, e in enumerate(self.edges)]

    def window(self, half_width: float) -> tuple[slice, ...]:
        inside = np.nonzero(np.abs(self.grid.axes[0]) <= half_width + 1e-12)[0]
        return (slice(int(inside[0]), int(inside[-1]) + 1),) * self.dim

    def linear_part(self, s: list[float]) -> np.ndarray:
        nodes = self.grid.nodes()
        return np.einsum("...k,k->...", nodes, np.asarray(s, dtype=float))


def _taylor_forcing(box: ScaledBox, s: list[float], order: int, w: list[np.ndarray]) -> np.ndarray:
    """G_m = sum_{j<m} C(m, j) div(d^{m-j}A/d eps^{m-j} grad v_j) on the box."""
    h = box.grid.h
    total = np.zeros(box.grid.shape)
    for j in range(order):
        factor = math.comb(order, j)
        for k in range(box.dim):
            grad = forward_diff(w[j], k, h) + (s[k] if j == 0 else 0.0)
            total += factor * backward_div(box.slow[order - j - 1][k] * grad, k, h)
    return total


def _march_hierarchy(box: ScaledBox, s: list[float], m: int, record):
    """Leap-frog v_0 - s.y, v_1, ..., v_m together; record(n, levels) sees every level."""
    op = DivergenceOperator(box.a0, box.grid.h)
    source = op.affine_source(s)
    dt2 = box.dt * box.dt

    def forcing(levels):
        return [source] + [_taylor_forcing(box, s, order, levels) for order in range(1, m + 1)]

    prev = [np.zeros(box.grid.shape) for _ in range(m + 1)]
    record(0, prev)
    cur = [0.5 * dt2 * f for f in forcing(prev)]
    record(1, cur)
    for n in range(1, box.n_steps):
        rhs = forcing(cur)
        nxt = [2.0 * c - p + dt2 * (op.apply(c) + f) for c, p, f in zip(cur, prev, rhs)]
        prev, cur = cur, nxt
        record(n + 1, cur)


def _march_scaled(box: ScaledBox, s: list[float], eps: float, record) -> None:
    """Leap-frog the eps-dependent problem for w = v - s.y."""
    op = DivergenceOperator(box.coefficients(eps), box.grid.h)
    source = op.affine_source(s)
    dt2 = box.dt * box.dt
    prev = np.zeros(box.grid.shape)
    record(0, prev)
    cur = 0.5 * dt2 * source
    record(1, cur)
    for n in range(1, box.n_steps):
        prev, cur = cur, 2.0 * cur - prev + dt2 * (op.apply(cur) + source)
        record(n + 1, cur)


def solve_hierarchy(
    field: CoefficientField,
    s: list[float],
    m: int,
    L: float,
    t_final: float,
    n_per_unit: int | None = None,
) -> list[ExpansionTerm]:
    """v_0, ..., v_m marched together on the box [-L, L]^d."""
    if not 0 <= m <= MAX_ORDER:
        raise ValueError(f"expansion order must be in 0..{MAX_ORDER}, got {m}")
    reach = t_final * math.sqrt(field.c2)
    if L <= reach:
        raise BoxTooSmall(f"box half-width {L} inside the domain of dependence {reach:.3f}")
    box = ScaledBox(field, L, t_final, n_per_unit)
    stride = max(math.ceil(box.n_steps / MAX_SNAPSHOTS), 1)
    times: list[float] = []
    stored: list[list[np.ndarray]] = [[] for _ in range(m + 1)]

    def record(n, levels):
        if n % stride == 0 or n == box.n_steps:
            times.append(n * box.dt)
            for order, level in enumerate(levels):
                stored[order].append(level.copy())

    _march_hierarchy(box, s, m, record)
    linear = box.linear_part(s)
    terms = []
    for order in range(m + 1):
        values = np.array(stored[order])
        if order == 0:
            values = values + linear
        terms.append(
            ExpansionTerm(label=f"v{order}", order=order, axes=box.grid.axes, times=times,
                          values=values, valid_radius=L - reach)
        )
    logger.info(
        f"Expansion box {field.label}: L={L}, {box.grid.n}^{box.dim} nodes, "
        f"{box.n_steps} steps, orders 0..{m}"
    )
    return terms


def solve_v0(
    field: CoefficientField,
    s: list[float],
    L: float,
    t_final: float,
    n_per_unit: int | None = None,
) -> ExpansionTerm:
    """v_0 = s.y + v_00 with the slow variable frozen at 0."""
    return solve_hierarchy(field, s, 0, L, t_final, n_per_unit)[0]


def solve_vm(
    field: CoefficientField,
    s: list[float],
    m: int,
    L: float,
    t_final: float,
    n_per_unit: int | None = None,
) -> ExpansionTerm:
    """v_m with zero data and forcing G_m built from the slow derivatives of A at 0."""
    if m < 1:
        raise ValueError("solve_vm needs m >= 1; use solve_v0 for the leading term")
    return solve_hierarchy(field, s, m, L, t_final, n_per_unit)[m]


def v00_of(term: ExpansionTerm, s: list[float]) -> np.ndarray:
    """v_00 = v_0 - s.y at every stored time."""
    nodes = np.stack(np.meshgrid(*term.axes, indexing="ij"), axis=-1)
    return term.values - np.einsum("...k,k->...", nodes, np.asarray(s, dtype=float))


def expansion_errors(
    field: CoefficientField,
    s: list[float],
    orders: list[int],
    eps_list: list[float],
    L: float = 3.0,
    window: float = 1.5,
    t_final: float = 1.0,
    n_per_unit: int | None = None,
) -> dict[int, list[float]]:
    """E_m(eps) = max over t <= t_final and |y| <= window of |v - sum_{k<=m} eps^k/k! v_k|."""
    top = max(orders)
    if top > MAX_ORDER or min(orders) < 0:
        raise ValueError(f"orders must lie in 0..{MAX_ORDER}")
    if L <= window + t_final * math.sqrt(field.c2):
        raise BoxTooSmall("error window is not shielded from the periodic seam")

    box = ScaledBox(field, L, t_final, n_per_unit)
    win = box.window(window)
    history: list[list[np.ndarray]] = [[] for _ in range(top + 1)]

    def keep_terms(n, levels):
        for order, level in enumerate(levels):
            history[order].append(level[win].copy())

    _march_hierarchy(box, s, top, keep_terms)
    terms = [np.array(h) for h in history]

    errors: dict[int, list[float]] = {m: [] for m in orders}
    for eps in eps_list:
        worst = dict.fromkeys(orders, 0.0)

        def compare(n, w, eps=eps, worst=worst):
            level = w[win]
            for m in orders:
                partial = sum(eps**k / math.factorial(k) * terms[k][n] for k in range(m + 1))
                worst[m] = max(worst[m], float(np.max(np.abs(level - partial))))

        _march_scaled(box, s, eps, compare)
        for m in orders:
            errors[m].append(worst[m])
        logger.info(f"Expansion errors at eps={eps:.3e}: {[worst[m] for m in orders]}")
    return errors


def expansion_error(
    field: CoefficientField,
    s: list[float],
    m: int,
    eps_list: list[float],
    **kwargs,
) -> list[float]:
    return expansion_errors(field, s, [m], eps_list, **kwargs)[m]


def periodic_remainder(term: ExpansionTerm) -> np.ndarray:
    """v(t_final, y) minus its values on [0, 1)^d tiled over the box.

    The periodic part of a quasi-polynomial (including any constant offset) cancels, leaving
    the terms that grow with |y|.
    """
    values = term.final()
    base = values
    for axis_index, axis in enumerate(term.axes):
        n = round(1.0 / (axis[1] - axis[0]))
        origin = int(np.argmin(np.abs(axis)))
        idx = origin + (np.arange(axis.size) - origin) % n
        base = np.take(base, idx, axis=axis_index)
    return values - base


def growth_exponent(term: ExpansionTerm, radii: list[float]) -> float:
    """Log-log slope of max_{|y| <= R} |v - tiled base cell| against R."""
    if max(radii) > term.valid_radius:
        raise BoxTooSmall(
            f"radius {max(radii)} reaches past the seam-free region |y| <= "
            f"{term.valid_radius:.3f} of {term.label}"
        )
    values = np.abs(periodic_remainder(term))
    nodes = np.stack(np.meshgrid(*term.axes, indexing="ij"), axis=-1)
    distance = np.max(np.abs(nodes), axis=-1)
    envelope = [float(np.max(values[distance <= r])) for r in radii]
    slope, _ = np.polyfit(np.log(radii), np.log(envelope), 1)
    return float(slope)


# --- Quasi-polynomial decomposition on the unit cell ---


class CellSystem:
    """Edge data of A(0, y) and its slow gradient on the periodic unit cell."""

    def __init__(self, field: CoefficientField, s: list[float], n: int):
        self.field = field
        self.s = [float(v) for v in s]
        self.dim = field.dim
        self.grid = PeriodicGrid([0.0] * field.dim, n, 1.0 / n)
        zero = np.zeros(field.dim)
        edges = [self.grid.edges(k) for k in range(self.dim)]
        self.op = DivergenceOperator(
            [field.diagonal(zero, e)[..., k] for k, e in enumerate(edges)], self.grid.h
        )
        # slow_grad[k][..., j] = d/dx_j a_k on the k-edges
        self.slow_grad = [field.diagonal_grad(zero, e)[..., :, k] for k, e in enumerate(edges)]
        self.source = self.op.affine_source(self.s)

    def f11(self, j: int, v00: np.ndarray) -> np.ndarray:
        """div(d_{x_j}A (s + grad v00))."""
        h = self.grid.h
        out = np.zeros(self.grid.shape)
        for k in range(self.dim):
            grad = self.s[k] + forward_diff(v00, k, h)
            out += backward_div(self.slow_grad[k][..., j] * grad, k, h)
        return out

    def f10(self, v00: np.ndarray) -> np.ndarray:
        """(div_x A).(s + grad v00), averaged back to the nodes."""
        out = np.zeros(self.grid.shape)
        for j in range(self.dim):
            grad = self.s[j] + forward_diff(v00, j, self.grid.h)
            out += node_average(self.slow_grad[j][..., j] * grad, j)
        return out

    def coupling(self, v11: list[np.ndarray]) -> np.ndarray:
        """M[v11] = sum_j div(A e_j v11_j) + e_j.A grad v11_j."""
        return sum(self.op.product_term(v11[j], j) for j in range(self.dim))


def quasi_poly_decompose(
    field: CoefficientField,
    s: list[float],
    t_final: float,
    n: int | None = None,
    cfl: float | None = None,
) -> QuasiPolynomialTerms:
    """Solve the periodic systems for v_00, v_11j and the mean-free part of v_10.

    The mean of the v_10 forcing drives g'' = mean(M[v11] + f10), integrated with
    an adaptive Runge-Kutta method on a cubic spline of the sampled forcing.
    """
    n = n or settings.pts_per_eps
    cfl = cfl or settings.micro_cfl
    system = CellSystem(field, s, n)
    d = field.dim
    dt_max = cfl * system.grid.h / math.sqrt(field.c2)
    n_steps = max(math.ceil(t_final / dt_max - 1e-9), 1)
    dt = t_final / n_steps
    dt2 = dt * dt

    def forcings(v00, v11):
        f11 = [system.f11(j, v00) for j in range(d)]
        f10 = system.coupling(v11) + system.f10(v00)
        mean = float(np.mean(f10))
        return f11, f10 - mean, mean

    zero = np.zeros(system.grid.shape)
    v00 = [zero, 0.5 * dt2 * system.source]
    f11, f10, mean = forcings(zero, [zero] * d)
    v11 = [[zero, 0.5 * dt2 * f] for f in f11]
    v10 = [zero, 0.5 * dt2 * f10]
    means = [mean]
    max_mean = 0.0

    for _ in range(1, n_steps):
        current_v11 = [history[-1] for history in v11]
        f11, f10, mean = forcings(v00[-1], current_v11)
        means.append(mean)
        v00.append(2.0 * v00[-1] - v00[-2] + dt2 * (system.op.apply(v00[-1]) + system.source))
        for j in range(d):
            history = v11[j]
            update = system.op.apply(history[-1]) + f11[j]
            history.append(2.0 * history[-1] - history[-2] + dt2 * update)
        v10.append(2.0 * v10[-1] - v10[-2] + dt2 * (system.op.apply(v10[-1]) + f10))
        max_mean = max(
            max_mean,
            abs(float(np.mean(v00[-1]))),
            abs(float(np.mean(v10[-1]))),
            *(abs(float(np.mean(history[-1]))) for history in v11),
        )

    _, _, mean = forcings(v00[-1], [history[-1] for history in v11])
    means.append(mean)

    times = dt * np.arange(n_steps + 1)
    g = _integrate_mean(times, np.asarray(means))
    if max_mean > 1e-10:
        logger.warning(f"Cell means drifted to {max_mean:.2e} in the quasi-polynomial solve")

    logger.info(
        f"Quasi-polynomial solve {field.label}: N={n}, {n_steps} steps to t={t_final}, "
        f"g(t_final)={g[-1]:.4e}"
    )
    return QuasiPolynomialTerms(
        system=system,
        dt=dt,
        times=times,
        v00=np.array(v00),
        v11=[np.array(history) for history in v11],
        v10_tilde=np.array(v10),
        g=g,
        mean_forcing=np.asarray(means),
        max_cell_mean=max_mean,
    )


def _integrate_mean(times: np.ndarray, forcing: np.ndarray) -> np.ndarray:
    """g'' = forcing(t), g(0) = g'(0) = 0, sampled at `times`."""
    if len(times) < 2:
        return np.zeros(len(times))
    spline = CubicSpline(times, forcing)
    solution = solve_ivp(
        lambda t, y: [y[1], float(spline(t))],
        (times[0], times[-1]),
        [0.0, 0.0],
        method="RK45",
        t_eval=times,
        rtol=1e-10,
        atol=1e-12,
        max_step=float(times[1] - times[0]),
    )
    return solution.y[0]


def tile(cell: np.ndarray, axes: list[np.ndarray], n: int) -> np.ndarray:
    """Periodic extension of a unit-cell grid function onto box nodes."""
    index = [np.mod(np.rint(axis * n).astype(int), n) for axis in axes]
    return cell[np.ix_(*index)]


def reconstruct_v1(
    terms: QuasiPolynomialTerms, axes: list[np.ndarray], level: int = -1
) -> np.ndarray:
    """v_1 = v~_10 + g + sum_j y_j v_11j on box nodes at one time level."""
    n = terms.system.grid.n
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    out = tile(terms.v10_tilde[level], axes, n) + terms.g[level]
    for j, history in enumerate(terms.v11):
        out = out + nodes[..., j] * tile(history[level], axes, n)
    return out


def reconstruction_error(
    field: CoefficientField,
    s: list[float],
    L: float,
    t_final: float,
    n_per_unit: int | None = None,
) -> float:
    """Relative max difference on [-L/2, L/2]^d between the direct and quasi-polynomial v_1."""
    n_per_unit = n_per_unit or settings.pts_per_eps
    direct = solve_vm(field, s, 1, L, t_final, n_per_unit)
    terms = quasi_poly_decompose(field, s, t_final, n_per_unit)
    rebuilt = reconstruct_v1(terms, direct.axes)
    inside = np.max(np.abs(np.stack(np.meshgrid(*direct.axes, indexing="ij"), -1)), -1) <= L / 2
    scale = max(float(np.max(np.abs(direct.final()[inside]))), np.finfo(float).tiny)
    return float(np.max(np.abs(rebuilt - direct.final())[inside]) / scale)


# --- Local time averages ---


def time_weights(terms: QuasiPolynomialTerms, kernel: Kernel, eps: float, tau: float) -> np.ndarray:
    """Trapezoid weights of K over [-tau/2, tau/2] in fast time, mirrored onto t >= 0."""
    horizon = 0.5 * tau / eps
    if terms.times[-1] < horizon - 1e-9:
        raise HorizonTooShort(
            f"cell histories reach t={terms.times[-1]:.3f}, averages need {horizon:.3f}"
        )
    used = terms.times[terms.times <= horizon + 1e-12]
    weights = terms.dt * eval_scaled(kernel, horizon, used)
    weights[1:] *= 2.0
    return weights


def time_averages(
    terms: QuasiPolynomialTerms, kernel: Kernel, eps: float, tau: float
) -> TimeAverage:
    """d_00, d_11j, d_10 = kernel averages of v_00, v_11j, v~_10 at t = 0."""
    weights = time_weights(terms, kernel, eps, tau)
    used = len(weights)

    def average(history: np.ndarray) -> np.ndarray:
        return np.tensordot(weights, history[:used], axes=1)

    return TimeAverage(
        d00=average(terms.v00),
        d11=[average(history) for history in terms.v11],
        d10=average(terms.v10_tilde),
        g_avg=float(weights @ terms.g[:used]),
        eps=eps,
        tau=tau,
        p=kernel.p,
        q=kernel.q,
    )


def residuals(avg: TimeAverage, terms: QuasiPolynomialTerms) -> dict[str, float]:
    """L2 residuals of the elliptic equations satisfied by the time averages."""
    system = terms.system
    grid = system.grid
    op = system.op
    r00 = op.apply(avg.d00) + system.source
    r11 = [op.apply(avg.d11[j]) + system.f11(j, avg.d00) for j in range(system.dim)]
    r10 = op.apply(avg.d10) + system.coupling(avg.d11) + system.f10(avg.d00)
    r10 = r10 - np.mean(r10)
    return {
        "d00": grid.l2_norm(r00),
        "d11": max(grid.l2_norm(r) for r in r11),
        "d10": grid.l2_norm(r10),
    }


def corrector_error(avg: TimeAverage, cell: CellSolution, s: list[float]) -> float:
    """H1 distance on the cell between d_00 and sum_l s_l chi_l."""
    target = sum(s_l * chi for s_l, chi in zip(s, cell.correctors))
    return cell.grid.h1_norm(avg.d00 - target)


# --- Flux decomposition ---


def flux_decomposition(
    field: CoefficientField,
    s: list[float],
    eps: float,
    eta: float,
    kernel: Kernel,
    r0: list[float] | None = None,
    terms: QuasiPolynomialTerms | None = None,
    n: int | None = None,
) -> FluxDecomposition:
    """Split the HMM flux at r0 into F_0, eps F_1, delta and the remainder.

    Terms computed elsewhere must come from the field shifted to (r0, r0/eps mod 1).
    """
    n = n or settings.pts_per_eps
    r0 = r0 if r0 is not None else [0.0] * field.dim
    d = field.dim
    gamma = np.mod(np.asarray(r0, dtype=float) / eps, 1.0)
    local = field.shifted(r0, gamma)
    if terms is None:
        terms = quasi_poly_decompose(local, s, 0.5 * eta / eps, n)
    avg = time_averages(terms, kernel, eps, eta)

    h = eps / n
    reach = math.ceil(0.5 * eta / h) + 1
    index_axis = np.arange(-reach, reach + 1)
    index = np.stack(np.meshgrid(*([index_axis] * d), indexing="ij"), axis=-1)
    x = index * h
    cell_index = tuple(np.mod(index[..., j], n) for j in range(d))

    f0 = np.zeros(d)
    f1 = np.zeros(d)
    delta = np.zeros(d)
    for k in range(d):
        xe = x.copy()
        xe[..., k] += 0.5 * h
        weights = h**d * eval_tensor(kernel, 0.5 * eta, xe)
        a = local.diagonal(xe, xe / eps)[..., k]
        grad00 = forward_diff(avg.d00, k, terms.system.grid.h)[cell_index]
        grad10 = forward_diff(avg.d10, k, terms.system.grid.h)[cell_index]
        mean11 = edge_average(avg.d11[k], k)[cell_index]
        f0[k] = np.sum(weights * a * (s[k] + grad00))
        f1[k] = np.sum(weights * a * (grad10 + mean11))
        slow = sum(
            xe[..., j] * forward_diff(avg.d11[j], k, terms.system.grid.h)[cell_index]
            for j in range(d)
        )
        delta[k] = np.sum(weights * a * slow)

    problem = MicroProblem(
        field=field,
        r0=list(r0),
        s=list(s),
        eps=eps,
        eta=eta,
        tau=eta,
        pts_per_eps=n,
        flux_sampling=FluxSampling.STAGGERED,
    )
    flux = np.asarray(hmm_flux(problem, kernel).value)
    reference = homogenized_tensor(local, [0.0] * d, n).matrix() @ np.asarray(s, dtype=float)
    tail = flux - f0 - eps * f1 - delta
    logger.info(
        f"Flux decomposition eps={eps:.3e}: F0={f0.tolist()}, eps*F1={(eps * f1).tolist()}, "
        f"delta={delta.tolist()}, tail={tail.tolist()}"
    )
    return FluxDecomposition(
        eps=eps,
        eta=eta,
        flux=flux.tolist(),
        f0=f0.tolist(),
        eps_f1=(eps * f1).tolist(),
        delta=delta.tolist(),
        tail=tail.tolist(),
        reference=reference.tolist(),
    )


QuasiPolynomialTerms.model_rebuild()
