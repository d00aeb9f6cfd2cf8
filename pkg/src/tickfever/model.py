"""Core bird-tick spirochaetosis model: parameters, states, controls, right-hand sides.

State vectors are plain length-7 numpy arrays ordered as
(S_B, E_B, I_B, R, S_T, E_T, I_T): susceptible/exposed/infectious birds,
recovered birds, then susceptible/exposed/infectious ticks.  All rhs and
jacobian functions are pure; nothing here holds mutable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

# Compartment indices into a state vector.
S_B, E_B, I_B, R, S_T, E_T, I_T = range(7)

STATE_LABELS = ("S_B", "E_B", "I_B", "R", "S_T", "E_T", "I_T")

N_COMPARTMENTS = 7


class ModelError(ValueError):
    """Invalid model input: non-finite or out-of-range state, parameter, or control."""


class RecruitmentMode(Enum):
    """How births enter the populations.

    CONSTANT_INFLOW: recruitment is the fixed rate tau * N0, so the
    disease-free point is an exact equilibrium.
    PROPORTIONAL: recruitment is tau * N(t) with N(t) the current total,
    the literal product form; the population then grows or decays
    exponentially at rate tau - death.
    """

    CONSTANT_INFLOW = "constant"
    PROPORTIONAL = "proportional"


class ModelVariant(Enum):
    """Which reading of the controlled system to evaluate.

    PAPER_EXACT keeps the printed control equations literally, including the
    infectious-bird loss alpha_B*I_B + mu*I_B and the recovery inflow u2*I_B.
    CONSISTENT treats u2 as treatment added on top of natural recovery
    (loss (sigma+u2+d+mu)*I_B, inflow (sigma+u2)*I_B) and scales both bird
    infection routes by (1-u1), so u = 0 reduces exactly to the base system
    and the closed-form control characterization is the exact Hamiltonian
    stationary point.
    """

    PAPER_EXACT = "paper"
    CONSISTENT = "consistent"


@dataclass
class ModelParams:
    """All rate constants plus population scales and the recruitment mode.

    Defaults are the simulation table values used throughout.
    """

    tau_B: float = 8.33       # per-capita bird birth rate
    tau_T: float = 0.167      # per-capita tick birth rate
    beta_1: float = 2e-4      # tick-bite infection rate of birds
    beta_2: float = 0.05      # bird-to-bird faecal infection rate
    beta_3: float = 1.95e-3   # bird-to-tick infection rate
    theta: float = 3.9e-7     # non-viraemic co-feeding rate between ticks
    lam: float = 3.68e-4      # transovarial reproduction rate
    alpha_B: float = 0.182    # bird exposed -> infectious progression
    alpha_T: float = 0.182    # tick exposed -> infectious progression
    d: float = 0.087          # bird natural death rate
    mu: float = 0.2           # disease-induced bird death rate
    sigma: float = 1.25       # bird recovery rate
    delta: float = 0.083      # tick death rate
    N_B0: float = 50.0        # total bird population scale (recruitment)
    N_T0: float = 100.0       # total tick population scale (recruitment)
    recruitment_mode: RecruitmentMode = RecruitmentMode.CONSTANT_INFLOW

    def __post_init__(self):
        for name in ("tau_B", "tau_T", "beta_1", "beta_2", "beta_3", "theta",
                     "lam", "alpha_B", "alpha_T", "d", "mu", "sigma", "delta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ModelError(f"parameter {name} must be finite and >= 0, got {v!r}")
        for name in ("N_B0", "N_T0"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ModelError(f"parameter {name} must be finite and > 0, got {v!r}")
        if not isinstance(self.recruitment_mode, RecruitmentMode):
            self.recruitment_mode = RecruitmentMode(self.recruitment_mode)

    def with_updates(self, **kwargs) -> "ModelParams":
        """A copy with the named fields replaced (validation re-runs)."""
        return replace(self, **kwargs)


@dataclass
class ControlVector:
    """Control intensities (u1, u2, u3) with per-control upper caps (m1, m2, m3).

    u1 reduces new bird infections, u2 is treatment of infectious birds,
    u3 suppresses tick recruitment.  Construction clamps each u_i into
    [0, m_i], so a ControlVector is always feasible.
    """

    u1: float = 0.0
    u2: float = 0.0
    u3: float = 0.0
    m1: float = 1.0
    m2: float = 1.0
    m3: float = 1.0

    def __post_init__(self):
        for name in ("u1", "u2", "u3", "m1", "m2", "m3"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ModelError(f"control field {name} must be finite, got {v!r}")
        for name in ("m1", "m2", "m3"):
            if getattr(self, name) < 0.0:
                raise ModelError(f"control bound {name} must be >= 0")
        self.u1 = min(max(self.u1, 0.0), self.m1)
        self.u2 = min(max(self.u2, 0.0), self.m2)
        self.u3 = min(max(self.u3, 0.0), self.m3)

    @property
    def values(self) -> np.ndarray:
        return np.array([self.u1, self.u2, self.u3])

    @property
    def bounds(self) -> np.ndarray:
        return np.array([self.m1, self.m2, self.m3])


#: Default initial condition from the simulation table.
DEFAULT_INITIAL_STATE = np.array([100.0, 80.0, 80.0, 60.0, 100.0, 80.0, 80.0])


def make_state(S_B=0.0, E_B=0.0, I_B=0.0, R=0.0, S_T=0.0, E_T=0.0, I_T=0.0) -> np.ndarray:
    """Assemble a state vector from named compartment values."""
    return np.array([S_B, E_B, I_B, R, S_T, E_T, I_T], dtype=float)


def _check_state(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (N_COMPARTMENTS,):
        raise ModelError(f"state must have shape (7,), got {x.shape}")
    if not np.isfinite(x).all():
        bad = [STATE_LABELS[i] for i in range(N_COMPARTMENTS) if not math.isfinite(x[i])]
        raise ModelError(f"non-finite state component(s): {', '.join(bad)}")
    return x


def recruitment(x: np.ndarray, params: ModelParams) -> tuple[float, float]:
    """Bird and tick recruitment rates for the given state under the configured mode."""
    if params.recruitment_mode is RecruitmentMode.CONSTANT_INFLOW:
        return params.tau_B * params.N_B0, params.tau_T * params.N_T0
    n_b = x[S_B] + x[E_B] + x[I_B] + x[R]
    n_t = x[S_T] + x[E_T] + x[I_T]
    return params.tau_B * n_b, params.tau_T * n_t


def rhs_base(x: np.ndarray, params: ModelParams) -> np.ndarray:
    """Time derivative of the uncontrolled system.

    The exposed-tick loss is -(delta + alpha_T) * E_T, i.e. progression
    leaves the exposed class; see the variant notes in the README for the
    sign discrepancy this resolves.
    """
    x = _check_state(x)
    sB, eB, iB, r, sT, eT, iT = x
    lam_B, lam_T = recruitment(x, params)
    infect_B = (params.beta_1 * iT + params.beta_2 * iB) * sB
    infect_T = (params.beta_3 * iB + (params.theta + params.lam) * iT) * sT
    return np.array([
        lam_B - infect_B - params.d * sB,
        infect_B - (params.alpha_B + params.d) * eB,
        params.alpha_B * eB - (params.sigma + params.d + params.mu) * iB,
        params.sigma * iB - params.d * r,
        lam_T - infect_T - params.delta * sT,
        infect_T - (params.delta + params.alpha_T) * eT,
        params.alpha_T * eT - params.delta * iT,
    ])


def rhs_control(x: np.ndarray, controls: ControlVector, params: ModelParams,
                variant: ModelVariant = ModelVariant.CONSISTENT) -> np.ndarray:
    """Time derivative of the controlled system under the chosen variant.

    PAPER_EXACT scales the tick-bite route by (1-u1) and the faecal route by
    (1-u2), drops natural recovery from the infectious-bird loss
    (alpha_B + mu instead of sigma + d + mu) and feeds R by u2*I_B only.
    CONSISTENT scales both bird infection routes by (1-u1) and adds u2 to
    the recovery rate, so rhs_control(x, 0, p) == rhs_base(x, p).
    """
    x = _check_state(x)
    if not isinstance(controls, ControlVector):
        raise ModelError("controls must be a ControlVector")
    sB, eB, iB, r, sT, eT, iT = x
    u1, u2, u3 = controls.u1, controls.u2, controls.u3
    lam_B, lam_T = recruitment(x, params)

    if variant is ModelVariant.CONSISTENT:
        infect_B = (1.0 - u1) * (params.beta_1 * iT + params.beta_2 * iB) * sB
        iB_loss = (params.sigma + u2 + params.d + params.mu) * iB
        r_gain = (params.sigma + u2) * iB
    elif variant is ModelVariant.PAPER_EXACT:
        infect_B = ((1.0 - u1) * params.beta_1 * iT
                    + (1.0 - u2) * params.beta_2 * iB) * sB
        iB_loss = (params.alpha_B + params.mu) * iB
        r_gain = u2 * iB
    else:
        raise ModelError(f"unknown model variant: {variant!r}")

    infect_T = (params.beta_3 * iB + (params.theta + params.lam) * iT) * sT
    return np.array([
        lam_B - infect_B - params.d * sB,
        infect_B - (params.alpha_B + params.d) * eB,
        params.alpha_B * eB - iB_loss,
        r_gain - params.d * r,
        (1.0 - u3) * lam_T - infect_T - params.delta * sT,
        infect_T - (params.delta + params.alpha_T) * eT,
        params.alpha_T * eT - params.delta * iT,
    ])


def jacobian_control(x: np.ndarray, controls: ControlVector, params: ModelParams,
                     variant: ModelVariant = ModelVariant.CONSISTENT) -> np.ndarray:
    """Analytic 7x7 Jacobian of rhs_control with respect to the state.

    In PROPORTIONAL mode the recruitment terms depend on the state, which
    adds tau_B to every bird column of the S_B row and (1-u3)*tau_T to
    every tick column of the S_T row; CONSTANT_INFLOW omits them.
    """
    x = _check_state(x)
    sB, eB, iB, r, sT, eT, iT = x
    u1, u2, u3 = controls.u1, controls.u2, controls.u3
    b1, b2, b3 = params.beta_1, params.beta_2, params.beta_3
    thl = params.theta + params.lam

    if variant is ModelVariant.CONSISTENT:
        a1, a2 = (1.0 - u1) * b1, (1.0 - u1) * b2
        iB_loss = params.sigma + u2 + params.d + params.mu
        r_gain = params.sigma + u2
    elif variant is ModelVariant.PAPER_EXACT:
        a1, a2 = (1.0 - u1) * b1, (1.0 - u2) * b2
        iB_loss = params.alpha_B + params.mu
        r_gain = u2
    else:
        raise ModelError(f"unknown model variant: {variant!r}")

    foi = a1 * iT + a2 * iB
    foi_T = b3 * iB + thl * iT

    J = np.zeros((N_COMPARTMENTS, N_COMPARTMENTS))
    J[S_B, S_B] = -foi - params.d
    J[S_B, I_B] = -a2 * sB
    J[S_B, I_T] = -a1 * sB
    J[E_B, S_B] = foi
    J[E_B, E_B] = -(params.alpha_B + params.d)
    J[E_B, I_B] = a2 * sB
    J[E_B, I_T] = a1 * sB
    J[I_B, E_B] = params.alpha_B
    J[I_B, I_B] = -iB_loss
    J[R, I_B] = r_gain
    J[R, R] = -params.d
    J[S_T, I_B] = -b3 * sT
    J[S_T, S_T] = -foi_T - params.delta
    J[S_T, I_T] = -thl * sT
    J[E_T, I_B] = b3 * sT
    J[E_T, S_T] = foi_T
    J[E_T, E_T] = -(params.delta + params.alpha_T)
    J[E_T, I_T] = thl * sT
    J[I_T, E_T] = params.alpha_T
    J[I_T, I_T] = -params.delta

    if params.recruitment_mode is RecruitmentMode.PROPORTIONAL:
        J[S_B, S_B:R + 1] += params.tau_B
        J[S_T, S_T:I_T + 1] += (1.0 - u3) * params.tau_T
    return J


def jacobian_base(x: np.ndarray, params: ModelParams) -> np.ndarray:
    """Analytic Jacobian of rhs_base (the zero-control consistent system)."""
    return jacobian_control(x, ControlVector(), params, ModelVariant.CONSISTENT)


def total_birds(x: np.ndarray) -> float:
    return float(x[S_B] + x[E_B] + x[I_B] + x[R])


def total_ticks(x: np.ndarray) -> float:
    return float(x[S_T] + x[E_T] + x[I_T])
