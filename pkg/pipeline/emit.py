"""Deterministic CSV emission for sweep records and experiment tables."""

from __future__ import annotations

import csv
import logging
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path

from app.config import settings
from app.errors import RateFitError
from app.models import ConvergenceRecord, RateFit
from pipeline.rates import fit_rate

logger = logging.getLogger(__name__)

RECORD_COLUMNS = [
    "sweep_var",
    "error",
    "eps",
    "eta",
    "tau",
    "p",
    "q",
    "pts_per_eps",
    "coefficient",
    "dim",
    "r0",
    "slope",
    "label",
]


def fmt(value) -> str:
    """Fixed formatting: 10 significant digits for reals, ';'-joined vectors."""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.10e}"
    if isinstance(value, (list, tuple)):
        return ";".join(fmt(v) for v in value)
    return str(value)


def slope_footer(fit: RateFit | None, reason: str = "") -> str:
    if fit is None:
        return f"# fitted_slope=nan reason={reason}"
    flag = " flagged=true" if fit.flagged else ""
    return (
        f"# fitted_slope={fit.slope:.6f} intercept={fit.intercept:.6f} "
        f"residual={fit.residual:.6f} n_used={fit.n_used}{flag}"
    )


def output_path(path: str | Path) -> Path:
    """Relative paths land under settings.output_dir."""
    path = Path(path)
    return path if path.is_absolute() else Path(settings.output_dir) / path


def write_table(
    path: str | Path,
    header: Sequence[str],
    rows: Iterable[Sequence],
    footer: Sequence[str] = (),
) -> Path:
    path = output_path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
        for line in footer:
            f.write(line + "\n")
    return path


def emit(
    records: list[ConvergenceRecord], path: str | Path, fit_points: int | None = None
) -> Path:
    """One row per record, sorted by sweep_var, plus a fitted-slope footer."""
    ordered = sorted(records, key=lambda r: r.sweep_var)
    rows = [[getattr(r, column) for column in RECORD_COLUMNS] for r in ordered]
    footer: list[str] = []
    if ordered:
        try:
            footer.append(slope_footer(fit_rate(ordered, fit_points=fit_points)))
        except RateFitError as e:
            footer.append(slope_footer(None, e.reason.replace(" ", "-")))
    path = write_table(path, RECORD_COLUMNS, rows, footer)
    logger.info(f"Wrote {len(ordered)} records to {path}")
    return path


def emit_series(
    series: dict[str, list[ConvergenceRecord]],
    base_path: str | Path,
    fit_points: Mapping[str, int | None] | None = None,
) -> list[Path]:
    """One file per label: <stem>-<label><suffix>; fit_points gives per-label fit windows."""
    fit_points = fit_points or {}
    base = Path(base_path)
    paths = []
    for label in sorted(series):
        target = base.with_name(f"{base.stem}-{label}{base.suffix or '.csv'}")
        paths.append(emit(series[label], target, fit_points.get(label)))
    return paths
