"""Upscaling-error sweeps: |F - F_hat| over a schedule of eps values."""

from __future__ import annotations

import logging

from joblib import Parallel, delayed

from app.config import settings
from app.errors import ConfigError, HmmError, SweepFailure
from app.homog_ref import HomogenizedTensor, homogenized_flux, homogenized_tensor
from app.kernels import construct_kernel
from app.media import catalog
from app.micro_sim import MicroProblem
from app.models import ConvergenceRecord, ExperimentConfig, ScaleSchedule, SweepVariable
from app.upscale import hmm_flux, upscaling_error

logger = logging.getLogger(__name__)

MIN_SURVIVORS = 4
# Cell problems need at least this many points per axis
MIN_CELL_N = 32


def default_levels(dim: int) -> int:
    return 6 if dim == 1 else 4


def eps_schedule(cfg: ExperimentConfig) -> list[float]:
    """Explicit eps list, or the dyadic default eta * 2^-k for k = 1..levels."""
    if cfg.eps:
        return sorted(cfg.eps, reverse=True)
    levels = cfg.levels or default_levels(cfg.dim)
    return [cfg.eta * 2.0**-k for k in range(1, levels + 1)]


def scales(cfg: ExperimentConfig, eps: float) -> tuple[float, float]:
    """(eta, tau) for one sweep point."""
    if cfg.schedule == ScaleSchedule.COUPLED:
        eta = eps ** (1.0 - cfg.beta)
        return eta, eta
    return cfg.eta, cfg.tau if cfg.tau is not None else cfg.eta


def reference_n(cfg: ExperimentConfig) -> int:
    """Cell grid for F_hat; defaults to the micro resolution."""
    if cfg.reference_n is not None:
        return cfg.reference_n
    if cfg.pts_per_eps < MIN_CELL_N:
        logger.warning(
            f"pts_per_eps={cfg.pts_per_eps} is below the cell minimum; "
            f"reference uses N={MIN_CELL_N} and is no longer matched"
        )
        return MIN_CELL_N
    return cfg.pts_per_eps


def sweep_point(
    cfg: ExperimentConfig, eps: float, tensor: HomogenizedTensor
) -> ConvergenceRecord | str:
    """One sweep point; failures come back as a message instead of raising."""
    eta, tau = scales(cfg, eps)
    try:
        field = catalog(cfg.coefficient, cfg.dim, cfg.constant_value)
        kernel = construct_kernel(cfg.p, cfg.q)
        problem = MicroProblem(
            field=field,
            r0=cfg.r0,
            s=cfg.slope,
            eps=eps,
            eta=eta,
            tau=tau,
            pts_per_eps=cfg.pts_per_eps,
            cfl=cfg.cfl,
            flux_sampling=cfg.flux_sampling,
        )
        error = upscaling_error(hmm_flux(problem, kernel), homogenized_flux(tensor, cfg.slope))
    except (HmmError, ValueError) as e:
        return f"eps={eps:.4e}: {e}"

    return ConvergenceRecord(
        sweep_var=eps / eta if cfg.sweep_var == SweepVariable.ALPHA else eps,
        error=error,
        eps=eps,
        eta=eta,
        tau=tau,
        p=cfg.p,
        q=cfg.q,
        pts_per_eps=cfg.pts_per_eps,
        coefficient=cfg.coefficient,
        dim=cfg.dim,
        r0=cfg.r0,
        slope=cfg.slope,
        label=cfg.label or cfg.coefficient,
    )


def sweep(cfg: ExperimentConfig, jobs: int | None = None) -> list[ConvergenceRecord]:
    """Upscaling errors over the eps schedule, sorted by sweep_var.

    Raises:
        SweepFailure: if fewer than four points are requested or survive.
    """
    jobs = jobs or settings.jobs
    schedule = eps_schedule(cfg)
    if len(schedule) < MIN_SURVIVORS:
        raise SweepFailure(f"sweep needs {MIN_SURVIVORS} points, got {len(schedule)}")

    field = catalog(cfg.coefficient, cfg.dim, cfg.constant_value)
    if field.dim != cfg.dim:
        raise ConfigError(f"{cfg.coefficient} is {field.dim}D but the sweep has dim={cfg.dim}")
    tensor = homogenized_tensor(field, cfg.r0, reference_n(cfg))
    logger.info(
        f"Sweep {cfg.name} ({cfg.coefficient}, {cfg.dim}D): {len(schedule)} points, "
        f"A0={tensor.a0}, jobs={jobs}"
    )

    results = Parallel(n_jobs=jobs)(delayed(sweep_point)(cfg, eps, tensor) for eps in schedule)

    records = []
    for result in results:
        if isinstance(result, str):
            logger.warning(f"Excluded sweep point {result}")
        else:
            records.append(result)
    if len(records) < MIN_SURVIVORS:
        raise SweepFailure(
            f"only {len(records)} of {len(schedule)} sweep points succeeded for {cfg.name}"
        )
    return sorted(records, key=lambda r: r.sweep_var)
