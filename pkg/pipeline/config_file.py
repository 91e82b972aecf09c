"""Experiment config files: flat INI sections validated into pydantic models.

    [convergence.periodic]
    coefficient = periodic-1d
    eta = 0.01
    q = 6

Keys match the model fields; list fields take comma-separated values. Macro source
and data expressions are sympy expressions in t, x (and y in 2D).
"""

from __future__ import annotations

import configparser
import math
from pathlib import Path
from typing import get_args, get_origin

import numpy as np
import sympy as sp
from pydantic import BaseModel, ValidationError

from app.config import settings
from app.errors import ConfigError
from app.macro_sim import MacroConfig
from app.media import catalog
from app.models import ExpansionConfig, ExperimentConfig, MacroFileConfig

COORDINATES = ("x", "y")


def read_config(path: str | Path) -> configparser.ConfigParser:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys such as H and T are case sensitive
    try:
        parser.read(path)
    except configparser.Error as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    return parser


def _is_list(annotation) -> bool:
    if get_origin(annotation) is list:
        return True
    return any(get_origin(arg) is list for arg in get_args(annotation))


def parse_section[M: BaseModel](model: type[M], section: str, items: dict[str, str]) -> M:
    """Validate one section; errors name the section and the offending key."""
    fields = model.model_fields
    values: dict[str, object] = {}
    for key, raw in items.items():
        name = key.replace("-", "_")
        if name not in fields:
            raise ConfigError(f"[{section}] unknown key {key!r}")
        text = raw.strip()
        if _is_list(fields[name].annotation):
            values[name] = [v.strip() for v in text.split(",") if v.strip()]
        elif text.lower() in ("", "none"):
            values[name] = None
        else:
            values[name] = text
    try:
        return model(**values)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(part) for part in first["loc"]) or "section"
        raise ConfigError(f"[{section}] {where}: {first['msg']}") from e


def sections(parser: configparser.ConfigParser, kind: str) -> list[str]:
    """Sections named `kind` or `kind.<label>`, in file order."""
    return [s for s in parser.sections() if s == kind or s.startswith(f"{kind}.")]


def load_experiments(path: str | Path) -> list[ExperimentConfig]:
    parser = read_config(path)
    names = sections(parser, "convergence")
    if not names:
        raise ConfigError(f"{path} has no [convergence] section")
    configs = []
    for name in names:
        cfg = parse_section(ExperimentConfig, name, dict(parser[name]))
        label = name.partition(".")[2]
        configs.append(cfg.model_copy(update={"name": name, "label": cfg.label or label}))
    return configs


def _load_single[M: BaseModel](path: str | Path, kind: str, model: type[M]) -> M:
    parser = read_config(path)
    if kind not in parser:
        raise ConfigError(f"{path} has no [{kind}] section")
    return parse_section(model, kind, dict(parser[kind]))


def load_macro(path: str | Path) -> MacroFileConfig:
    return _load_single(path, "macro", MacroFileConfig)


def load_expansion(path: str | Path) -> ExpansionConfig:
    return _load_single(path, "expansion", ExpansionConfig)


# --- Expressions ---


def compile_expression(text: str, dim: int):
    """f(t, points) for a sympy expression in t and the first `dim` coordinates."""
    t = sp.Symbol("t")
    coords = sp.symbols(COORDINATES[:dim])
    try:
        expr = sp.sympify(text)
    except (sp.SympifyError, SyntaxError, TypeError) as e:
        raise ConfigError(f"cannot parse expression {text!r}: {e}") from e
    allowed = {t, *coords}
    unknown = expr.free_symbols - allowed
    if unknown:
        names = ", ".join(sorted(str(s) for s in unknown))
        raise ConfigError(f"expression {text!r} uses unknown symbols: {names}")
    fn = sp.lambdify((t, *coords), expr, "numpy")

    def evaluate(time: float, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        value = fn(time, *(points[..., k] for k in range(dim)))
        return np.broadcast_to(np.asarray(value, dtype=float), points.shape[:-1])

    return evaluate


def to_macro_config(mc: MacroFileConfig, jobs: int = 1) -> tuple[MacroConfig, object | None]:
    """Build the solver config and, if given, the exact final-time solution x -> u(T, x)."""
    field = catalog(mc.coefficient, mc.dim, mc.constant_value)
    if field.dim != mc.dim:
        raise ConfigError(f"[macro] {mc.coefficient} is {field.dim}D but dim={mc.dim}")
    source = compile_expression(mc.source, mc.dim)
    initial = compile_expression(mc.initial, mc.dim)
    velocity = compile_expression(mc.velocity, mc.dim)
    dt = mc.dt if mc.dt is not None else settings.macro_cfl * mc.H / math.sqrt(field.c2)
    try:
        cfg = MacroConfig(
            field=field,
            domain=list(zip(mc.lower, mc.upper)),
            H=mc.H,
            dt=dt,
            T=mc.T,
            f=source,
            g=lambda x: initial(0.0, x),
            h=lambda x: velocity(0.0, x),
            flux_mode=mc.flux_mode,
            snapshot_times=mc.snapshot_times,
            eps=mc.eps,
            eta=mc.eta,
            tau=mc.tau,
            p=mc.p,
            q=mc.q,
            pts_per_eps=mc.pts_per_eps,
            cell_n=mc.cell_n,
            jobs=jobs,
        )
    except ValidationError as e:
        raise ConfigError(f"[macro] {e.errors()[0]['msg']}") from e

    exact = None
    if mc.exact is not None:
        solution = compile_expression(mc.exact, mc.dim)
        exact = lambda x: solution(mc.T, x)  # noqa: E731
    return cfg, exact
