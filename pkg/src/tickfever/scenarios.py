"""Scenario runner: built-in experiments, config files, CSV and report output.

A scenario bundles parameters, an initial state, a grid, and optionally
constant controls, a parameter sweep, or a full optimal-control solve.
Outputs are data only: one CSV per trajectory (printed with 17 significant
digits so re-reading reproduces the floats exactly) plus a plain-text
report.  Two runs of the same scenario produce byte-identical CSVs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import analysis
from .control import CostWeights, SweepResult, forward_backward_sweep, objective
from .integrate import TimeGrid, Trajectory, integrate
from .model import (
    DEFAULT_INITIAL_STATE, STATE_LABELS,
    ControlVector, ModelError, ModelParams, ModelVariant, RecruitmentMode,
    rhs_base, rhs_control,
)


class ConfigError(ValueError):
    """A scenario description is malformed."""


_PARAM_KEYS = tuple(f.name for f in fields(ModelParams) if f.name != "recruitment_mode")
_INITIAL_KEYS = ("S_B0", "E_B0", "I_B0", "R0", "S_T0", "E_T0", "I_T0")
_WEIGHT_KEYS = ("C1", "C2", "C3", "D1", "D2", "D3")
_CONTROL_KEYS = ("u1", "u2", "u3")
_BOUND_KEYS = ("u1_bound", "u2_bound", "u3_bound")
_GRID_KEYS = ("t0", "t1", "n_steps")
_SWEEP_KEYS = _PARAM_KEYS + _CONTROL_KEYS

VALID_CONFIG_KEYS = (_PARAM_KEYS + ("lambda",) + _INITIAL_KEYS + _WEIGHT_KEYS
                     + _CONTROL_KEYS + _BOUND_KEYS + _GRID_KEYS
                     + ("mode", "variant", "kind", "stem",
                        "sweep_param", "sweep_values",
                        "relaxation", "tol", "max_iter"))

CSV_STATE_HEADER = "t," + ",".join(STATE_LABELS)
CSV_CONTROL_COLS = ("u1", "u2", "u3")
CSV_ADJOINT_COLS = tuple(f"l{i}" for i in range(1, 8))


@dataclass
class ScenarioConfig:
    """Everything needed to run one experiment (possibly a sweep of runs)."""

    name: str = "scenario"
    params: ModelParams = field(default_factory=ModelParams)
    initial: np.ndarray = field(default_factory=lambda: DEFAULT_INITIAL_STATE.copy())
    grid: TimeGrid = field(default_factory=lambda: TimeGrid(0.0, 40.0, 4000))
    variant: ModelVariant = ModelVariant.CONSISTENT
    kind: str = "base"                      # base | controlled | optimal
    controls: ControlVector | None = None   # constant controls for "controlled"
    weights: CostWeights | None = None      # cost weights for "optimal"
    sweeps: list[tuple[str, tuple[float, ...]]] = field(default_factory=list)
    stem: str = ""
    relaxation: float = 0.5
    tol: float = 1e-6
    max_iter: int = 500

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=float)
        if self.initial.shape != (7,):
            raise ConfigError(f"initial state must have 7 entries, got {self.initial.shape}")
        if not np.isfinite(self.initial).all():
            raise ConfigError("initial state must be finite")
        if self.kind not in ("base", "controlled", "optimal"):
            raise ConfigError(f"kind must be base, controlled, or optimal, got {self.kind!r}")
        for key, values in self.sweeps:
            if key not in _SWEEP_KEYS:
                raise ConfigError(
                    f"unknown sweep key {key!r}; valid keys: {', '.join(_SWEEP_KEYS)}")
            if key in _CONTROL_KEYS and self.kind == "base":
                raise ConfigError(f"sweeping {key} requires kind=controlled")
            if not all(np.isfinite(v) for v in values):
                raise ConfigError(f"sweep values for {key} must be finite")
        if not self.stem:
            self.stem = self.name


@dataclass
class MemberResult:
    """One trajectory of a scenario (a sweep member or the single run)."""

    label: str
    csv_path: Path
    terminal_state: np.ndarray
    objective: float | None = None
    sweep_key: str | None = None
    sweep_value: float | None = None
    sweep_result: SweepResult | None = None


@dataclass
class RunReport:
    """Summary of a completed scenario run."""

    scenario: str
    r0: analysis.R0Report
    dfe: analysis.EquilibriumReport
    endemic: analysis.EquilibriumReport | None
    endemic_note: str
    members: list[MemberResult]
    duration_s: float
    report_path: Path

    @property
    def terminal_state(self) -> np.ndarray:
        return self.members[-1].terminal_state

    @property
    def objective(self) -> float | None:
        return self.members[-1].objective


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectory_csv(path: Path, traj: Trajectory,
                         controls: np.ndarray | None = None,
                         adjoint: np.ndarray | None = None) -> None:
    """Write t plus compartments (and optional control/costate columns)."""
    header = CSV_STATE_HEADER
    blocks = [traj.times()[:, None], traj.samples]
    if controls is not None:
        header += "," + ",".join(CSV_CONTROL_COLS)
        blocks.append(np.asarray(controls, dtype=float))
    if adjoint is not None:
        header += "," + ",".join(CSV_ADJOINT_COLS)
        blocks.append(np.asarray(adjoint, dtype=float))
    table = np.hstack(blocks)
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in table:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_trajectory_csv(path) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Read a trajectory CSV back; returns (times, column-name -> values)."""
    with open(path, "r", newline="\n") as fh:
        header = fh.readline().strip().split(",")
        data = np.array([[float(v) for v in line.strip().split(",")]
                         for line in fh if line.strip()])
    if header[0] != "t":
        raise ConfigError(f"{path}: first CSV column must be t, got {header[0]!r}")
    cols = {name: data[:, i] for i, name in enumerate(header)}
    return cols["t"], cols


def _apply_sweep_value(config: ScenarioConfig, key: str, value: float,
                       allow_unbounded_controls: bool) -> ScenarioConfig:
    if key in _PARAM_KEYS:
        return replace(config, params=config.params.with_updates(**{key: value}),
                       sweeps=[])
    # control sweep: values beyond the cap clamp unless explicitly unleashed
    base = config.controls if config.controls is not None else ControlVector()
    caps = {"u1": base.m1, "u2": base.m2, "u3": base.m3}
    if allow_unbounded_controls:
        caps[key] = max(caps[key], value)
    new = ControlVector(**{
        "u1": value if key == "u1" else base.u1,
        "u2": value if key == "u2" else base.u2,
        "u3": value if key == "u3" else base.u3,
        "m1": caps["u1"], "m2": caps["u2"], "m3": caps["u3"],
    })
    return replace(config, controls=new, sweeps=[])


def _run_member(config: ScenarioConfig, label: str, out_dir: Path) -> MemberResult:
    csv_path = out_dir / f"{label}.csv"
    if config.kind == "base":
        traj = integrate(lambda t, x: rhs_base(x, config.params), config.initial, config.grid)
        write_trajectory_csv(csv_path, traj)
        return MemberResult(label=label, csv_path=csv_path,
                            terminal_state=traj.final.copy())
    if config.kind == "controlled":
        controls = config.controls if config.controls is not None else ControlVector()
        traj = integrate(lambda t, x: rhs_control(x, controls, config.params, config.variant),
                         config.initial, config.grid)
        u = np.tile(controls.values, (config.grid.n_steps + 1, 1))
        write_trajectory_csv(csv_path, traj, controls=u)
        weights = config.weights if config.weights is not None else CostWeights()
        return MemberResult(label=label, csv_path=csv_path,
                            terminal_state=traj.final.copy(),
                            objective=objective(traj, u, weights))
    # optimal
    weights = config.weights if config.weights is not None else default_optimal_weights()
    bounds = config.controls if config.controls is not None else default_optimal_bounds()
    sweep = forward_backward_sweep(
        config.initial, config.grid, weights, config.params, config.variant,
        bounds=bounds, relaxation=config.relaxation, tol=config.tol,
        max_iter=config.max_iter)
    write_trajectory_csv(csv_path, sweep.state_traj,
                         controls=sweep.control_traj.samples,
                         adjoint=sweep.adjoint_traj.samples)
    return MemberResult(label=label, csv_path=csv_path,
                        terminal_state=sweep.state_traj.final.copy(),
                        objective=sweep.objective_value,
                        sweep_result=sweep)


def _probe_writable(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    probe = out_dir / ".write_probe"
    try:
        probe.write_text("")
    except OSError as exc:
        raise ConfigError(f"output directory {out_dir} is not writable: {exc}") from exc
    probe.unlink()


def run_scenario(config: ScenarioConfig, out_dir="out",
                 allow_unbounded_controls: bool = False) -> RunReport:
    """Run a scenario (sweeping if requested), emit CSVs and a report file."""
    out_dir = Path(out_dir)
    _probe_writable(out_dir)
    started = time.perf_counter()

    r0_report = analysis.r0(config.params)
    dfe = analysis.dfe_report(config.params)
    endemic = None
    endemic_note = ""
    try:
        endemic = analysis.endemic_equilibrium(config.params)
        if endemic.kind is analysis.EquilibriumKind.DISEASE_FREE:
            endemic_note = "newton from the default guess returned the disease-free point"
    except analysis.ConvergenceError as exc:
        endemic_note = f"endemic search failed: {exc}"

    members: list[MemberResult] = []
    if config.sweeps:
        for key, values in config.sweeps:
            for value in values:
                member_cfg = _apply_sweep_value(config, key, value, allow_unbounded_controls)
                label = f"{config.stem}_{key}_{value:g}"
                res = _run_member(member_cfg, label, out_dir)
                res.sweep_key, res.sweep_value = key, value
                members.append(res)
    else:
        members.append(_run_member(config, config.stem, out_dir))

    duration = time.perf_counter() - started
    report_path = out_dir / f"{config.stem}_report.txt"
    report = RunReport(scenario=config.name, r0=r0_report, dfe=dfe,
                       endemic=endemic, endemic_note=endemic_note,
                       members=members, duration_s=duration,
                       report_path=report_path)
    report_path.write_text(format_report(report, config), newline="\n")
    return report


def format_report(report: RunReport, config: ScenarioConfig) -> str:
    lines = [
        f"scenario: {report.scenario}",
        f"kind: {config.kind}",
        f"variant: {config.variant.value}",
        f"mode: {config.params.recruitment_mode.value}",
        f"grid: t0={config.grid.t0:g} t1={config.grid.t1:g} n_steps={config.grid.n_steps}",
        f"r0_spectral: {report.r0.r0_spectral:.10g}",
        f"r0_formula: {report.r0.r0_formula:.10g}",
        f"R_B: {report.r0.R_B:.10g}  R_T: {report.r0.R_T:.10g}  R_TB: {report.r0.R_TB:.10g}",
        (f"dfe: residual={report.dfe.residual_norm:.3e} "
         f"locally_stable={report.dfe.locally_stable} "
         f"point=({', '.join(f'{v:.6g}' for v in report.dfe.point)})"),
    ]
    if report.endemic is not None:
        e = report.endemic
        lines.append(
            f"equilibrium[{e.kind.value}]: residual={e.residual_norm:.3e} "
            f"locally_stable={e.locally_stable} "
            f"point=({', '.join(f'{v:.6g}' for v in e.point)})")
    if report.endemic_note:
        lines.append(f"note: {report.endemic_note}")
    for m in report.members:
        terminal = ", ".join(f"{lbl}={v:.6g}" for lbl, v in zip(STATE_LABELS, m.terminal_state))
        extra = f" objective={m.objective:.10g}" if m.objective is not None else ""
        lines.append(f"member {m.label}: terminal ({terminal}){extra}")
    lines.append(f"duration_s: {report.duration_s:.3f}")
    return "\n".join(lines) + "\n"


def default_optimal_weights() -> CostWeights:
    return CostWeights(C1=1.0, C2=1.0, C3=1.0, D1=10.0, D2=10.0, D3=10.0)


def default_optimal_bounds() -> ControlVector:
    return ControlVector(m1=0.9, m2=0.9, m3=0.9)


def builtin_scenarios() -> dict[str, ScenarioConfig]:
    """The named experiments: one per published figure panel plus 'optimal'."""
    t40 = TimeGrid(0.0, 40.0, 4000)
    t50 = TimeGrid(0.0, 50.0, 5000)
    table_controls = ControlVector(u1=0.02, u2=0.01, u3=0.05)

    def cfg(name, **kw):
        return ScenarioConfig(name=name, **kw)

    scenarios = {
        "fig2": cfg("fig2", grid=t40),
        "fig3a": cfg("fig3a", grid=t40,
                     sweeps=[("alpha_B", (0.1, 0.2, 0.3, 0.4, 0.5))]),
        "fig3b": cfg("fig3b", grid=t40, sweeps=[("d", (0.5, 1.0, 1.5))]),
        "fig3c": cfg("fig3c", grid=t40,
                     sweeps=[("alpha_T", (0.1, 0.2, 0.3)),
                             ("delta", (0.08, 0.16, 0.24, 0.32, 0.4))]),
        "fig3d": cfg("fig3d", grid=t40,
                     sweeps=[("delta", (0.08, 0.16, 0.24, 0.32, 0.4))]),
        "fig4a": cfg("fig4a", grid=t40, kind="controlled", controls=table_controls),
        "fig4b": cfg("fig4b", grid=t40, kind="controlled", controls=table_controls,
                     sweeps=[("u2", (0.2, 0.6, 1.0))]),
        "fig4c": cfg("fig4c", grid=t40, kind="controlled", controls=table_controls,
                     sweeps=[("u1", (0.02, 5.0, 20.0, 25.0))]),
        "fig4d": cfg("fig4d", grid=t40, kind="controlled", controls=table_controls,
                     sweeps=[("u2", (0.3, 0.6, 0.9, 1.0, 1.2))]),
        "fig5a": cfg("fig5a", grid=t50, kind="controlled",
                     controls=ControlVector(),
                     sweeps=[("u2", (0.08, 0.48, 0.88))]),
        "fig5b": cfg("fig5b", grid=t50,
                     sweeps=[("sigma", (1.0, 1.5, 2.0, 2.5, 3.0))]),
        "optimal": cfg("optimal", grid=t40, kind="optimal",
                       weights=default_optimal_weights(),
                       controls=default_optimal_bounds()),
    }
    return scenarios


def _parse_value(key: str, raw: str, lineno: int, caster):
    try:
        return caster(raw)
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: value for {key!r} is not valid: {raw!r}") from exc


def load_config(path) -> ScenarioConfig:
    """Parse a flat key = value scenario file (see VALID_CONFIG_KEYS).

    Missing keys fall back to the simulation-table defaults; unknown keys
    are rejected by name.  Lines starting with '#' are comments.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")

    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key == "lambda":
            key = "lam"
        if key not in VALID_CONFIG_KEYS:
            raise ConfigError(
                f"line {lineno}: unknown key {key!r}; valid keys: "
                + ", ".join(sorted(VALID_CONFIG_KEYS)))
        raw[key] = (value.strip(), lineno)

    def get(key, default, caster):
        if key not in raw:
            return default
        value, lineno = raw[key]
        return _parse_value(key, value, lineno, caster)

    params_updates = {key: get(key, None, float) for key in _PARAM_KEYS if key in raw}
    mode = get("mode", "constant", str)
    if mode not in ("constant", "proportional"):
        raise ConfigError(f"mode must be constant or proportional, got {mode!r}")
    try:
        params = ModelParams(**params_updates, recruitment_mode=RecruitmentMode(mode))
    except ModelError as exc:
        raise ConfigError(str(exc)) from exc

    initial = DEFAULT_INITIAL_STATE.copy()
    for i, key in enumerate(_INITIAL_KEYS):
        initial[i] = get(key, initial[i], float)

    try:
        grid = TimeGrid(get("t0", 0.0, float), get("t1", 40.0, float),
                        get("n_steps", 4000, int))
    except ValueError as exc:
        raise ConfigError(f"invalid grid: {exc}") from exc

    variant_name = get("variant", "consistent", str)
    if variant_name not in ("paper", "consistent"):
        raise ConfigError(f"variant must be paper or consistent, got {variant_name!r}")
    variant = ModelVariant(variant_name)

    weights = None
    if any(k in raw for k in _WEIGHT_KEYS):
        try:
            weights = CostWeights(**{k: get(k, 1.0, float) for k in _WEIGHT_KEYS if k in raw})
        except ModelError as exc:
            raise ConfigError(str(exc)) from exc

    controls = None
    if any(k in raw for k in _CONTROL_KEYS + _BOUND_KEYS):
        kw = {k: get(k, 0.0, float) for k in _CONTROL_KEYS if k in raw}
        for k, m in zip(_BOUND_KEYS, ("m1", "m2", "m3")):
            if k in raw:
                kw[m] = get(k, 1.0, float)
        try:
            controls = ControlVector(**kw)
        except ModelError as exc:
            raise ConfigError(str(exc)) from exc

    kind = get("kind", None, str)
    if kind is None:
        kind = "optimal" if weights is not None else \
            "controlled" if controls is not None else "base"

    sweeps = []
    if "sweep_param" in raw or "sweep_values" in raw:
        if not ("sweep_param" in raw and "sweep_values" in raw):
            raise ConfigError("sweep_param and sweep_values must be given together")
        values_raw, lineno = raw["sweep_values"]
        values = tuple(_parse_value("sweep_values", v.strip(), lineno, float)
                       for v in values_raw.split(","))
        sweeps = [(raw["sweep_param"][0], values)]

    stem = get("stem", path.stem, str)
    try:
        return ScenarioConfig(
            name=stem, params=params, initial=initial, grid=grid, variant=variant,
            kind=kind, controls=controls, weights=weights, sweeps=sweeps, stem=stem,
            relaxation=get("relaxation", 0.5, float),
            tol=get("tol", 1e-6, float),
            max_iter=get("max_iter", 500, int),
        )
    except ModelError as exc:
        raise ConfigError(str(exc)) from exc
