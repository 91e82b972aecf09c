"""HMM flux by space-time kernel averaging of the micro flux, and its upscaling error."""

from __future__ import annotations

import logging

import numpy as np

from app.errors import FluxError, MetadataMismatch
from app.kernels import Kernel
from app.micro_sim import MicroProblem, solve_micro
from app.models import FluxMode, FluxVector

logger = logging.getLogger(__name__)


def flux_cap(problem: MicroProblem) -> float:
    """Sanity cap c2 |s|_1 (1 + c2/c1) on every flux component."""
    field = problem.field
    return field.c2 * float(np.sum(np.abs(problem.s))) * (1.0 + field.c2 / field.c1)


def hmm_flux(problem: MicroProblem, kernel: Kernel) -> FluxVector:
    """F(r0) = int int K_eta(x) K_tau(t) A grad u dx dt over the micro solution."""
    sol = solve_micro(problem, kernel)
    value = np.asarray(sol.flux)

    if not np.all(np.isfinite(value)):
        raise FluxError(f"non-finite micro flux {value.tolist()}", tuple(problem.r0))
    cap = flux_cap(problem)
    if np.max(np.abs(value)) > cap + 1e-12:
        raise FluxError(
            f"micro flux {value.tolist()} exceeds sanity cap {cap:.3e}", tuple(problem.r0)
        )

    logger.info(f"HMM flux at r0={problem.r0}, s={problem.s}: {value.tolist()}")
    return FluxVector(
        value=value.tolist(),
        r0=list(problem.r0),
        slope=list(problem.s),
        source=FluxMode.HMM,
        eps=problem.eps,
        eta=problem.eta,
        tau=problem.tau,
        p=kernel.p,
        q=kernel.q,
        resolution=problem.pts_per_eps,
    )


def effective_matrix(problem: MicroProblem, kernel: Kernel) -> np.ndarray:
    """Columns F(r0, e_l); F(r0, s) is this matrix times s because the micro problem is linear."""
    d = problem.field.dim
    columns = []
    for ell in range(d):
        unit = [0.0] * d
        unit[ell] = 1.0
        columns.append(hmm_flux(problem.with_slope(unit), kernel).value)
    return np.array(columns).T


def upscaling_error(f: FluxVector, ref: FluxVector) -> float:
    """|F - F_hat|_inf for two fluxes at the same point and slope."""
    if len(f.value) != len(ref.value):
        raise MetadataMismatch(f"flux dimensions differ: {len(f.value)} vs {len(ref.value)}")
    if not np.allclose(f.r0, ref.r0, rtol=0.0, atol=1e-12):
        raise MetadataMismatch(f"fluxes at different points: {f.r0} vs {ref.r0}")
    if not np.allclose(f.slope, ref.slope, rtol=0.0, atol=1e-12):
        raise MetadataMismatch(f"fluxes for different slopes: {f.slope} vs {ref.slope}")
    return float(np.max(np.abs(np.asarray(f.value) - np.asarray(ref.value))))
