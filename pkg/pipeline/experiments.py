"""Named experiments: convergence sweeps and the expansion studies, written as CSV."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from app.errors import ConfigError, RateFitError
from app.expansion_lab import (
    corrector_error,
    expansion_errors,
    flux_decomposition,
    growth_exponent,
    quasi_poly_decompose,
    residuals,
    solve_hierarchy,
    solve_v0,
    time_averages,
    v00_of,
)
from app.homog_ref import solve_cell
from app.kernels import construct_kernel
from app.media import catalog
from app.models import ConvergenceRecord, ExpansionConfig, ExpansionExperiment, ExperimentConfig
from pipeline.emit import emit_series, slope_footer, write_table
from pipeline.rates import fit_slope
from pipeline.sweep import sweep

logger = logging.getLogger(__name__)


def fit_windows(configs: list[ExperimentConfig]) -> dict[str, int | None]:
    return {cfg.label or cfg.coefficient: cfg.fit_points for cfg in configs}


def run_convergence(
    configs: list[ExperimentConfig], jobs: int | None = None
) -> dict[str, list[ConvergenceRecord]]:
    """Sweep every config; series sharing an output path go to <stem>-<label>.csv files."""
    by_output: dict[str, dict[str, list[ConvergenceRecord]]] = {}
    windows = fit_windows(configs)
    for cfg in configs:
        records = sweep(cfg, jobs)
        label = cfg.label or cfg.coefficient
        by_output.setdefault(cfg.output, {})[label] = records
    results = {}
    for output, series in by_output.items():
        emit_series(series, output, windows)
        results.update(series)
    return results


def _footer(name: str, x: list[float], y: list[float]) -> str:
    usable = [(a, b) for a, b in zip(x, y) if b > 0]
    try:
        fit = fit_slope([a for a, _ in usable], [b for _, b in usable])
    except RateFitError as e:
        return f"{slope_footer(None, e.reason.replace(' ', '-'))} quantity={name}"
    return f"{slope_footer(fit)} quantity={name}"


def _require_1d(field) -> None:
    if field.dim != 1:
        raise ConfigError(f"profile experiments are 1D, {field.label} is {field.dim}D")


def _fig2(cfg: ExpansionConfig) -> Path:
    field = catalog(cfg.coefficient)
    errors = expansion_errors(
        field,
        cfg.slope,
        cfg.orders,
        cfg.eps,
        cfg.box_half_width,
        cfg.window,
        cfg.t_final,
        cfg.pts_per_eps,
    )
    rows = [[eps, *(errors[m][i] for m in cfg.orders)] for i, eps in enumerate(cfg.eps)]
    footer = [_footer(f"E{m}", cfg.eps, errors[m]) for m in cfg.orders]
    return write_table(cfg.output, ["eps", *(f"E{m}" for m in cfg.orders)], rows, footer)


def _fig3(cfg: ExpansionConfig) -> Path:
    field = catalog(cfg.coefficient)
    _require_1d(field)
    v0 = solve_v0(field, cfg.slope, cfg.box_half_width, cfg.t_final, cfg.pts_per_eps)
    v00 = v00_of(v0, cfg.slope)[-1]
    rows = zip(v0.axes[0], v0.final(), v00)
    footer = [f"# t={v0.times[-1]:.6f} max_abs_v00={float(np.max(np.abs(v00))):.6e}"]
    return write_table(cfg.output, ["y", "v0", "v00"], rows, footer)


def _fig4(cfg: ExpansionConfig) -> Path:
    field = catalog(cfg.coefficient)
    _require_1d(field)
    terms = solve_hierarchy(field, cfg.slope, 2, cfg.box_half_width, cfg.t_final, cfg.pts_per_eps)
    v1, v2 = terms[1], terms[2]
    footer = [
        f"# growth_exponent_v1={growth_exponent(v1, cfg.radii):.6f}",
        f"# growth_exponent_v2={growth_exponent(v2, cfg.radii):.6f}",
    ]
    rows = zip(v1.axes[0], v1.final(), v2.final())
    return write_table(cfg.output, ["y", "v1", "v2"], rows, footer)


def _time_averages(cfg: ExpansionConfig) -> Path:
    field = catalog(cfg.coefficient)
    kernel = construct_kernel(cfg.p, cfg.q)
    # alpha = eps / tau with tau = 1: the fast horizon is 1 / (2 alpha)
    terms = quasi_poly_decompose(field, cfg.slope, 0.5 / min(cfg.alphas), cfg.pts_per_eps)
    cell = solve_cell(field, [0.0] * field.dim, cfg.pts_per_eps)
    rows = []
    for alpha in cfg.alphas:
        avg = time_averages(terms, kernel, alpha, 1.0)
        res = residuals(avg, terms)
        rows.append(
            [alpha, res["d00"], res["d11"], res["d10"], corrector_error(avg, cell, cfg.slope)]
        )
    footer = [
        _footer("residual_d00", cfg.alphas, [r[1] for r in rows]),
        _footer("corrector_h1", cfg.alphas, [r[4] for r in rows]),
    ]
    header = ["alpha", "residual_d00", "residual_d11", "residual_d10", "corrector_h1"]
    return write_table(cfg.output, header, rows, footer)


def _flux_decomp(cfg: ExpansionConfig) -> Path:
    field = catalog(cfg.coefficient)
    kernel = construct_kernel(cfg.p, cfg.q)
    # r0 = 0 keeps the fast phase at zero for every eps, so one history serves all alphas
    terms = quasi_poly_decompose(field, cfg.slope, 0.5 / min(cfg.alphas), cfg.pts_per_eps)
    rows = []
    for alpha in cfg.alphas:
        eps = alpha * cfg.eta
        dec = flux_decomposition(
            field, cfg.slope, eps, cfg.eta, kernel, terms=terms, n=cfg.pts_per_eps
        )
        f0_error = float(np.max(np.abs(np.subtract(dec.f0, dec.reference))))
        f1 = float(np.max(np.abs(dec.eps_f1))) / eps
        rows.append(
            [
                alpha,
                f0_error,
                f1,
                float(np.max(np.abs(dec.delta))),
                float(np.max(np.abs(dec.tail))),
                dec.flux,
            ]
        )
    footer = [
        _footer("f0_error", cfg.alphas, [r[1] for r in rows]),
        _footer("f1", cfg.alphas, [r[2] for r in rows]),
    ]
    header = ["alpha", "f0_error", "f1", "delta", "tail", "flux"]
    return write_table(cfg.output, header, rows, footer)


RUNNERS = {
    ExpansionExperiment.FIG2: _fig2,
    ExpansionExperiment.FIG3: _fig3,
    ExpansionExperiment.FIG4: _fig4,
    ExpansionExperiment.TIME_AVERAGES: _time_averages,
    ExpansionExperiment.FLUX_DECOMP: _flux_decomp,
}


def run_expansion(cfg: ExpansionConfig) -> Path:
    logger.info(f"Expansion experiment {cfg.experiment.value} on {cfg.coefficient}")
    path = RUNNERS[cfg.experiment](cfg)
    logger.info(f"Wrote {path}")
    return path
