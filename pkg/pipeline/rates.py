"""Least-squares convergence rates in log-log coordinates."""

from __future__ import annotations

import logging

import numpy as np

from app.config import settings
from app.errors import RateFitError
from app.models import ConvergenceRecord, RateFit

logger = logging.getLogger(__name__)

MIN_POINTS = 3


def fit_slope(x: list[float], y: list[float], max_residual: float | None = None) -> RateFit:
    """Fit log y = slope log x + intercept over positive pairs."""
    max_residual = settings.rate_residual_flag if max_residual is None else max_residual
    log_x = np.log(np.asarray(x, dtype=float))
    log_y = np.log(np.asarray(y, dtype=float))
    if len(log_x) < MIN_POINTS:
        raise RateFitError(f"need {MIN_POINTS} points, got {len(log_x)}", "too few points")

    slope, intercept = np.polyfit(log_x, log_y, 1)
    residual = float(np.max(np.abs(log_y - np.polyval([slope, intercept], log_x))))
    flagged = residual > max_residual
    if flagged:
        logger.warning(f"Rate fit slope {slope:.3f} has log residual {residual:.3f}")
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        residual=residual,
        n_used=len(log_x),
        flagged=flagged,
    )


def fit_rate(
    records: list[ConvergenceRecord],
    floor: float | None = None,
    max_residual: float | None = None,
    fit_points: int | None = None,
) -> RateFit:
    """Slope of error against sweep_var, ignoring points at or under the error floor.

    fit_points keeps only that many of the smallest sweep_var values, so a fit can skip the
    pre-asymptotic end of a sweep.
    """
    floor = settings.error_floor if floor is None else floor
    usable = [r for r in records if r.error > floor and r.sweep_var > 0]
    if records and not usable:
        raise RateFitError(f"all {len(records)} errors are under the floor {floor:.1e}", "floor")
    if len(usable) < MIN_POINTS:
        raise RateFitError(
            f"{len(usable)} of {len(records)} points above the floor {floor:.1e}",
            "too few points",
        )
    if fit_points is not None:
        usable = sorted(usable, key=lambda r: r.sweep_var)[:fit_points]
        if len(usable) < MIN_POINTS:
            raise RateFitError(
                f"fit window of {fit_points} leaves {len(usable)} points", "too few points"
            )
    return fit_slope(
        [r.sweep_var for r in usable], [r.error for r in usable], max_residual=max_residual
    )
