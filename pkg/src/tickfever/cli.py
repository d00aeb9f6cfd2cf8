"""Command-line front end: run scenarios, list built-ins, inspect R0 and equilibria.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from . import analysis
from .analysis import ConvergenceError
from .control import SweepDivergence
from .integrate import IntegrationError, TimeGrid
from .model import ModelError, ModelParams, ModelVariant, RecruitmentMode, STATE_LABELS
from .scenarios import (
    ConfigError, ScenarioConfig, builtin_scenarios, load_config, run_scenario,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_CONFIG_ERRORS = (ConfigError, ModelError, ValueError)
_NUMERICAL_ERRORS = (IntegrationError, ConvergenceError, SweepDivergence,
                     np.linalg.LinAlgError)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tickfever",
        description="Bird-tick spirochaetosis model: simulation, stability, optimal control")
    parser.add_argument("--out", default="out", help="output directory (default: ./out)")
    parser.add_argument("--steps", type=int, help="override the number of grid steps")
    parser.add_argument("--t1", type=float, help="override the end time")
    parser.add_argument("--variant", choices=["paper", "consistent"],
                        help="controlled-system reading")
    parser.add_argument("--mode", choices=["constant", "proportional"],
                        help="recruitment mode")
    parser.add_argument("--allow-unbounded-controls", action="store_true",
                        help="run control sweep values above the caps literally")

    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run a built-in scenario or a config file")
    run_p.add_argument("scenario", help="built-in name or path to a config file")
    sub.add_parser("list", help="list built-in scenarios")
    r0_p = sub.add_parser("r0", help="print the reproduction-number report")
    r0_p.add_argument("config", nargs="?", help="optional config file")
    eq_p = sub.add_parser("equilibria", help="print equilibrium reports")
    eq_p.add_argument("config", nargs="?", help="optional config file")
    opt_p = sub.add_parser("optimal", help="solve the optimal-control problem")
    opt_p.add_argument("config", nargs="?", help="optional config file")
    return parser


def _resolve_scenario(token: str) -> ScenarioConfig:
    builtins = builtin_scenarios()
    if token in builtins:
        return builtins[token]
    from pathlib import Path
    if Path(token).exists():
        return load_config(token)
    raise ConfigError(
        f"{token!r} is neither a built-in scenario nor an existing config file; "
        f"built-ins: {', '.join(builtins)}")


def _config_or_defaults(token: str | None) -> ScenarioConfig:
    if token is None:
        return ScenarioConfig(name="defaults")
    return load_config(token)


def _apply_overrides(config: ScenarioConfig, args) -> ScenarioConfig:
    grid = config.grid
    if args.t1 is not None or args.steps is not None:
        t1 = args.t1 if args.t1 is not None else grid.t1
        n = args.steps if args.steps is not None else grid.n_steps
        grid = TimeGrid(grid.t0, t1, n)
    params = config.params
    if args.mode is not None:
        params = params.with_updates(recruitment_mode=RecruitmentMode(args.mode))
    variant = ModelVariant(args.variant) if args.variant is not None else config.variant
    return replace(config, grid=grid, params=params, variant=variant, sweeps=config.sweeps)


def _print_r0(params: ModelParams) -> None:
    rep = analysis.r0(params)
    print(f"R_B          = {rep.R_B:.10g}")
    print(f"R_T          = {rep.R_T:.10g}")
    print(f"R_TB         = {rep.R_TB:.10g}")
    print(f"r0_formula   = {rep.r0_formula:.10g}")
    print(f"r0_spectral  = {rep.r0_spectral:.10g}")
    print(f"disagreement = {rep.agreement:.3e}")


def _print_equilibria(params: ModelParams) -> None:
    dfe = analysis.dfe_report(params)
    point = ", ".join(f"{lbl}={v:.6g}" for lbl, v in zip(STATE_LABELS, dfe.point))
    print(f"disease-free point: {point}")
    print(f"  residual={dfe.residual_norm:.3e} locally_stable={dfe.locally_stable}")
    spectral, inequality = analysis.dfe_stability_condition(params)
    print(f"  proportional-mode verdicts: eigenvalues={spectral} "
          f"closed-form(d>tau_B and delta>tau_T)={inequality}")
    try:
        endemic = analysis.endemic_equilibrium(params)
    except ConvergenceError as exc:
        print(f"endemic search failed: {exc}")
        return
    point = ", ".join(f"{lbl}={v:.6g}" for lbl, v in zip(STATE_LABELS, endemic.point))
    print(f"{endemic.kind.value} root: {point}")
    print(f"  residual={endemic.residual_norm:.3e} locally_stable={endemic.locally_stable}")


def _cmd_run(args) -> int:
    config = _apply_overrides(_resolve_scenario(args.scenario), args)
    report = run_scenario(config, out_dir=args.out,
                          allow_unbounded_controls=args.allow_unbounded_controls)
    for member in report.members:
        print(f"wrote {member.csv_path}")
    print(f"wrote {report.report_path}")
    return EXIT_OK


def _cmd_optimal(args) -> int:
    config = _config_or_defaults(args.config)
    if config.kind != "optimal":
        config = replace(config, kind="optimal", sweeps=[])
    config = _apply_overrides(config, args)
    report = run_scenario(config, out_dir=args.out)
    member = report.members[-1]
    print(f"objective J(u*) = {member.objective:.10g}")
    sweep = member.sweep_result
    if sweep is not None:
        print(f"iterations = {sweep.iterations} converged = {sweep.converged}")
    print(f"wrote {member.csv_path}")
    print(f"wrote {report.report_path}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "list":
            for name in builtin_scenarios():
                print(name)
            return EXIT_OK
        if args.command == "r0":
            config = _apply_overrides(_config_or_defaults(args.config), args)
            _print_r0(config.params)
            return EXIT_OK
        if args.command == "equilibria":
            config = _apply_overrides(_config_or_defaults(args.config), args)
            _print_equilibria(config.params)
            return EXIT_OK
        if args.command == "optimal":
            return _cmd_optimal(args)
        return _cmd_run(args)
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
