"""Command-line entry point.

Usage:
    hmmwave kernel check --p 3 --q 6
    hmmwave cell-solve --coeff periodic-2d --x 0 0 --n 128
    hmmwave upscale --coeff locally-periodic-1d --r0 0.3 --s 1 --eps 0.0025 --eta 0.01
    hmmwave macro-run --config experiments.ini
    hmmwave expansion --experiment fig2 --config experiments.ini
    hmmwave convergence --config experiments.ini --jobs 4
"""

from __future__ import annotations

import argparse
import logging
import sys

from app.config import settings
from app.errors import HmmError


def cmd_kernel_check(args: argparse.Namespace) -> None:
    from app.kernels import construct_kernel, derivative, moment_table

    kernel = construct_kernel(args.p, args.q)
    print(f"Kernel (p={kernel.p}, q={kernel.q}), P coefficients: {list(kernel.coeffs)}")
    for r, value in moment_table(kernel):
        status = "" if r == 0 or r > kernel.p else "  (vanishing)"
        print(f"  moment {r}: {value: .3e}{status}")
    worst = max(
        abs(float(derivative(kernel, order, side)))
        for order in range(kernel.q + 1)
        for side in (-1.0, 1.0)
    )
    print(f"  max boundary derivative up to order {kernel.q}: {worst:.3e}")


def cmd_cell_solve(args: argparse.Namespace) -> None:
    from app.homog_ref import dump_correctors_csv, solve_cell, tensor_from_cell
    from app.media import catalog

    field = catalog(args.coeff, len(args.x), args.value)
    sol = solve_cell(field, args.x, args.n)
    tensor = tensor_from_cell(sol, field)
    print(f"A0({args.x}) for {field.label}, N={sol.n}:")
    for row in tensor.a0:
        print("  " + "  ".join(f"{v: .10f}" for v in row))
    for ell, chi in enumerate(sol.correctors):
        print(f"  |chi_{ell + 1}|_H1 = {sol.grid.h1_norm(chi):.6e}")
    print(f"  CG iterations {sol.iterations}, residual {sol.residual:.2e}")
    if args.dump:
        print(f"Correctors written to {dump_correctors_csv(sol, args.dump)}")


def cmd_upscale(args: argparse.Namespace) -> None:
    from app.homog_ref import homogenized_flux, homogenized_tensor
    from app.kernels import construct_kernel
    from app.media import catalog
    from app.micro_sim import MicroProblem, dump_history_csv, solve_micro
    from app.upscale import hmm_flux, upscaling_error

    field = catalog(args.coeff, len(args.r0), args.value)
    problem = MicroProblem(
        field=field,
        r0=args.r0,
        s=args.s,
        eps=args.eps,
        eta=args.eta,
        tau=args.tau or args.eta,
        pts_per_eps=args.pts,
    )
    flux = hmm_flux(problem, construct_kernel(args.p, args.q))
    reference = homogenized_flux(homogenized_tensor(field, args.r0, args.n or args.pts), args.s)
    print(f"F     = {flux.value}")
    print(f"F_hat = {reference.value}")
    print(f"|F - F_hat|_inf = {upscaling_error(flux, reference):.6e}")
    if args.dump_history:
        path = dump_history_csv(solve_micro(problem, keep_history=True), args.dump_history)
        print(f"Micro history written to {path}")


def cmd_macro_run(args: argparse.Namespace) -> None:
    from app.macro_sim import l2_error, run_macro, write_snapshots_csv
    from pipeline.config_file import load_macro, to_macro_config
    from pipeline.emit import output_path

    file_cfg = load_macro(args.config)
    cfg, exact = to_macro_config(file_cfg, jobs=args.jobs)
    traj = run_macro(cfg)
    path = write_snapshots_csv(traj, output_path(args.output or file_cfg.output))
    print(f"Macro run ({cfg.flux_mode.value}) to T={cfg.T}: {len(traj.times)} snapshots")
    print(f"Written to {path}")
    if exact is not None:
        print(f"Final-time L2 error: {l2_error(traj, exact):.6e}")


def cmd_expansion(args: argparse.Namespace) -> None:
    from app.models import ExpansionConfig
    from pipeline.config_file import load_expansion
    from pipeline.experiments import run_expansion

    cfg = load_expansion(args.config) if args.config else ExpansionConfig()
    update = {}
    if args.experiment:
        update["experiment"] = args.experiment
    if args.output:
        update["output"] = args.output
    cfg = ExpansionConfig.model_validate(cfg.model_dump() | update)
    print(f"Wrote {run_expansion(cfg)}")


def cmd_convergence(args: argparse.Namespace) -> None:
    from pipeline.config_file import load_experiments
    from pipeline.experiments import fit_windows, run_convergence
    from pipeline.rates import fit_rate

    configs = load_experiments(args.config)
    windows = fit_windows(configs)
    results = run_convergence(configs, jobs=args.jobs)
    for label, records in results.items():
        errors = ", ".join(f"{r.error:.3e}" for r in records)
        try:
            slope = f"{fit_rate(records, fit_points=windows[label]).slope:.3f}"
        except HmmError as e:
            slope = f"n/a ({e})"
        print(f"{label}: errors [{errors}], fitted slope {slope}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hmmwave", description="HMM for the wave equation in locally periodic media"
    )
    parser.add_argument(
        "--jobs",
        type=int,
        default=settings.jobs,
        help=f"Parallel workers (default: {settings.jobs})",
    )
    parser.add_argument(
        "--seed", type=int, default=None, help="Reserved; the pipeline is deterministic"
    )
    parser.add_argument(
        "--log-level",
        default=settings.log_level,
        help=f"Logging level (default: {settings.log_level})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    kernel = sub.add_parser("kernel", help="Averaging kernel utilities")
    kernel_sub = kernel.add_subparsers(dest="action", required=True)
    check = kernel_sub.add_parser("check", help="Print moments and boundary derivatives")
    check.add_argument("--p", type=int, default=settings.kernel_p)
    check.add_argument("--q", type=int, default=settings.kernel_q)
    check.set_defaults(handler=cmd_kernel_check)

    cell = sub.add_parser("cell-solve", help="Solve the cell problems and print A0")
    cell.add_argument("--coeff", required=True, help="Catalog coefficient name")
    cell.add_argument("--value", type=float, default=None, help="Value for 'constant'")
    cell.add_argument("--x", type=float, nargs="+", default=[0.0], help="Slow point")
    cell.add_argument("--n", type=int, default=None, help="Cell grid points per axis")
    cell.add_argument("--dump", default=None, help="Write correctors to this CSV")
    cell.set_defaults(handler=cmd_cell_solve)

    upscale = sub.add_parser("upscale", help="HMM flux against the homogenized flux")
    upscale.add_argument("--coeff", required=True)
    upscale.add_argument("--value", type=float, default=None)
    upscale.add_argument("--r0", type=float, nargs="+", default=[0.0])
    upscale.add_argument("--s", type=float, nargs="+", default=[1.0])
    upscale.add_argument("--eps", type=float, required=True)
    upscale.add_argument("--eta", type=float, required=True)
    upscale.add_argument("--tau", type=float, default=None, help="Defaults to eta")
    upscale.add_argument("--p", type=int, default=settings.kernel_p)
    upscale.add_argument("--q", type=int, default=settings.kernel_q)
    upscale.add_argument("--pts", type=int, default=settings.pts_per_eps)
    upscale.add_argument("--n", type=int, default=None, help="Reference cell grid (default: --pts)")
    upscale.add_argument(
        "--dump-history", default=None, metavar="PATH", help="Write the micro field history as CSV"
    )
    upscale.set_defaults(handler=cmd_upscale)

    macro = sub.add_parser("macro-run", help="Run the macro solver from a [macro] section")
    macro.add_argument("--config", required=True)
    macro.add_argument("--output", default=None)
    macro.set_defaults(handler=cmd_macro_run)

    expansion = sub.add_parser("expansion", help="Expansion experiments")
    expansion.add_argument(
        "--experiment",
        choices=["fig2", "fig3", "fig4", "time-averages", "flux-decomp"],
        default=None,
    )
    expansion.add_argument("--config", default=None, help="File with an [expansion] section")
    expansion.add_argument("--output", default=None)
    expansion.set_defaults(handler=cmd_expansion)

    convergence = sub.add_parser("convergence", help="Upscaling-error sweeps")
    convergence.add_argument("--config", required=True)
    convergence.set_defaults(handler=cmd_convergence)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        args.handler(args)
    except (HmmError, ValueError) as e:
        print(f"hmmwave: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
