"""Objective, Hamiltonian, costate system, and the forward-backward sweep.

The Hamiltonian is built constructively as running cost plus the inner
product of the costate with the controlled right-hand side, and the costate
equations are the analytic -dH/dx of that construction.  The printed source
equations contain transcription slips, so finite-difference agreement with
this module's own Hamiltonian is the correctness gate, not transcription.

The closed-form control update (see optimal_controls) is the exact
Hamiltonian minimizer for the CONSISTENT model variant; for PAPER_EXACT it
is applied as printed, which is only an approximation there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .integrate import IntegrationError, TimeGrid, Trajectory, integrate, integrate_backward
from .model import (
    E_B, E_T, I_B, I_T, S_B, S_T,
    ControlVector, ModelError, ModelParams, ModelVariant,
    jacobian_control, recruitment, rhs_control,
)


class SweepDivergence(RuntimeError):
    """The sweep blew up (non-finite or absurd objective); carries the iteration."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


@dataclass
class CostWeights:
    """Weights of the running cost: state terms C1..C3, quadratic control terms D1..D3.

    The existence argument for an optimal control needs every weight
    strictly positive; zero state weights are still accepted here because
    they make useful degenerate test cases, and existence_preconditions
    reports on positivity explicitly.
    """

    C1: float = 1.0   # cost per exposed bird
    C2: float = 1.0   # cost per infectious bird
    C3: float = 1.0   # cost per tick (total tick population)
    D1: float = 1.0   # quadratic cost of u1
    D2: float = 1.0   # quadratic cost of u2
    D3: float = 1.0   # quadratic cost of u3

    def __post_init__(self):
        for name in ("C1", "C2", "C3", "D1", "D2", "D3"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ModelError(f"cost weight {name} must be finite and >= 0, got {v!r}")


@dataclass
class ExistenceReport:
    """Itemized checks backing the existence of an optimal control."""

    bounds_in_unit_interval: bool   # 0 < m_i <= 1 for every control
    weights_positive: bool          # all six cost weights > 0 (convexity in u)
    control_set_nonempty: bool      # the admissible box contains a point

    @property
    def all_ok(self) -> bool:
        return (self.bounds_in_unit_interval and self.weights_positive
                and self.control_set_nonempty)


@dataclass
class SweepResult:
    """Converged (or last-iterate) output of the forward-backward sweep.

    All three trajectories share one grid.  control_traj holds the exact
    pointwise characterization evaluated on the final state/costate pair, so
    the stationarity conditions hold at every node by construction.
    """

    state_traj: Trajectory
    adjoint_traj: Trajectory
    control_traj: Trajectory
    objective_value: float
    iterations: int
    converged: bool
    objective_history: list[float] = field(default_factory=list)


def running_cost(state, controls: ControlVector, weights: CostWeights) -> float:
    """Instantaneous cost C1*E_B + C2*I_B + C3*N_T + quadratic control effort."""
    n_t = state[S_T] + state[E_T] + state[I_T]
    u1, u2, u3 = controls.u1, controls.u2, controls.u3
    return float(weights.C1 * state[E_B] + weights.C2 * state[I_B] + weights.C3 * n_t
                 + 0.5 * (weights.D1 * u1 * u1 + weights.D2 * u2 * u2
                          + weights.D3 * u3 * u3))


def objective(traj: Trajectory, control_samples, weights: CostWeights) -> float:
    """Trapezoidal quadrature of the running cost over the trajectory grid.

    control_samples has shape (n_steps + 1, 3), matching the state samples.
    """
    u = np.asarray(control_samples, dtype=float)
    if u.shape != (traj.grid.n_steps + 1, 3):
        raise ModelError(
            f"control samples must have shape ({traj.grid.n_steps + 1}, 3), got {u.shape}")
    x = traj.samples
    integrand = (weights.C1 * x[:, E_B] + weights.C2 * x[:, I_B]
                 + weights.C3 * (x[:, S_T] + x[:, E_T] + x[:, I_T])
                 + 0.5 * (weights.D1 * u[:, 0] ** 2 + weights.D2 * u[:, 1] ** 2
                          + weights.D3 * u[:, 2] ** 2))
    return float(np.trapezoid(integrand, dx=traj.grid.dt))


def hamiltonian(state, adjoint, controls: ControlVector, weights: CostWeights,
                params: ModelParams, variant: ModelVariant = ModelVariant.CONSISTENT) -> float:
    """Running cost plus costate-weighted controlled dynamics at one point."""
    lam = np.asarray(adjoint, dtype=float)
    f = rhs_control(np.asarray(state, dtype=float), controls, params, variant)
    return running_cost(state, controls, weights) + float(lam @ f)


def _cost_gradient(weights: CostWeights) -> np.ndarray:
    g = np.zeros(7)
    g[E_B] = weights.C1
    g[I_B] = weights.C2
    g[S_T] = g[E_T] = g[I_T] = weights.C3
    return g


def adjoint_rhs(adjoint, state, controls: ControlVector, weights: CostWeights,
                params: ModelParams, variant: ModelVariant = ModelVariant.CONSISTENT) -> np.ndarray:
    """Costate derivative -dH/dx from the analytic state Jacobian.

    Equals minus (cost gradient + J^T lambda) with J the Jacobian of
    rhs_control at the point, so it tracks whichever variant and
    recruitment mode the dynamics actually use.
    """
    lam = np.asarray(adjoint, dtype=float)
    J = jacobian_control(np.asarray(state, dtype=float), controls, params, variant)
    return -(_cost_gradient(weights) + J.T @ lam)


def optimal_controls(state, adjoint, weights: CostWeights, params: ModelParams,
                     bounds: ControlVector | None = None) -> ControlVector:
    """Pointwise control characterization, projected onto [0, m_i].

    u1 = clamp((beta_1*I_T*S_B + beta_2*I_B*S_B) * (l2 - l1) / D1)
    u2 = clamp((l3 - l4) * I_B / D2)
    u3 = clamp(l5 * tick_recruitment / D3)
    """
    if weights.D1 <= 0.0 or weights.D2 <= 0.0 or weights.D3 <= 0.0:
        raise ModelError("control characterization needs D1, D2, D3 > 0")
    if bounds is None:
        bounds = ControlVector()
    x = np.asarray(state, dtype=float)
    lam = np.asarray(adjoint, dtype=float)
    infection = (params.beta_1 * x[I_T] + params.beta_2 * x[I_B]) * x[S_B]
    _, lam_T = recruitment(x, params)
    u1 = infection * (lam[1] - lam[0]) / weights.D1
    u2 = (lam[2] - lam[3]) * x[I_B] / weights.D2
    u3 = lam[4] * lam_T / weights.D3
    return ControlVector(u1=u1, u2=u2, u3=u3,
                         m1=bounds.m1, m2=bounds.m2, m3=bounds.m3)


def existence_preconditions(weights: CostWeights, bounds) -> ExistenceReport:
    """Itemized pass/fail of the verifiable optimal-control existence conditions.

    bounds may be a ControlVector or any 3-sequence of caps (the sequence
    form permits reporting on invalid caps that the ControlVector
    constructor would reject outright).
    """
    m = bounds.bounds if isinstance(bounds, ControlVector) else np.asarray(bounds, dtype=float)
    if m.shape != (3,):
        raise ModelError(f"need three control caps, got shape {m.shape}")
    bounds_ok = bool(np.all((m > 0.0) & (m <= 1.0)))
    weights_ok = all(getattr(weights, k) > 0.0 for k in ("C1", "C2", "C3", "D1", "D2", "D3"))
    nonempty = bool(np.all(m >= 0.0))
    return ExistenceReport(bounds_in_unit_interval=bounds_ok,
                           weights_positive=weights_ok,
                           control_set_nonempty=nonempty)


def _controls_from_sample(u, bounds: ControlVector) -> ControlVector:
    return ControlVector(u1=float(u[0]), u2=float(u[1]), u3=float(u[2]),
                         m1=bounds.m1, m2=bounds.m2, m3=bounds.m3)


def forward_backward_sweep(x0, grid: TimeGrid, weights: CostWeights, params: ModelParams,
                           variant: ModelVariant = ModelVariant.CONSISTENT,
                           bounds: ControlVector | None = None,
                           relaxation: float = 0.5, tol: float = 1e-6,
                           max_iter: int = 500) -> SweepResult:
    """Solve the three-control problem by iterating state, costate, and update.

    Each pass integrates the state forward under the current control samples,
    the costate backward from zero terminal values along the frozen pair,
    evaluates the pointwise characterization, and relaxes the controls
    toward it.  Convergence is max-abs control change < tol.  The result
    carries the unrelaxed characterization of the final pass, so that the
    stationarity conditions hold exactly on the returned triple.
    """
    if not (0.0 < relaxation <= 1.0):
        raise ModelError(f"relaxation must lie in (0, 1], got {relaxation}")
    if bounds is None:
        bounds = ControlVector()
    x0 = np.asarray(x0, dtype=float)
    n = grid.n_steps
    u = np.zeros((n + 1, 3))

    def state_rhs(t, x, z):
        return rhs_control(x, _controls_from_sample(z, bounds), params, variant)

    def costate_rhs(t, lam, z):
        return adjoint_rhs(lam, z[:7], _controls_from_sample(z[7:], bounds),
                           weights, params, variant)

    history: list[float] = []
    state_traj = adjoint_traj = None
    candidate = u
    converged = False
    iterations = 0
    for iteration in range(1, max_iter + 1):
        iterations = iteration
        try:
            state_traj = integrate(state_rhs, x0, grid, frozen=Trajectory(grid, u))
            frozen = Trajectory(grid, np.hstack([state_traj.samples, u]))
            adjoint_traj = integrate_backward(costate_rhs, np.zeros(7), grid, frozen=frozen)
        except IntegrationError as exc:
            raise SweepDivergence(
                f"sweep diverged at iteration {iteration}: {exc}",
                iteration=iteration) from exc

        candidate = np.empty_like(u)
        for k in range(n + 1):
            cv = optimal_controls(state_traj.samples[k], adjoint_traj.samples[k],
                                  weights, params, bounds)
            candidate[k] = (cv.u1, cv.u2, cv.u3)

        u_new = relaxation * candidate + (1.0 - relaxation) * u
        delta = float(np.abs(u_new - u).max())
        u = u_new

        J = objective(state_traj, u, weights)
        history.append(J)
        if not math.isfinite(J) or J > 1e12:
            raise SweepDivergence(
                f"objective {J!r} at iteration {iteration}", iteration=iteration)
        if delta < tol:
            converged = True
            break

    return SweepResult(
        state_traj=state_traj,
        adjoint_traj=adjoint_traj,
        control_traj=Trajectory(grid, candidate),
        objective_value=objective(state_traj, candidate, weights),
        iterations=iterations,
        converged=converged,
        objective_history=history,
    )
