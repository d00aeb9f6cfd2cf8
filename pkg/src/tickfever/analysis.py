"""Equilibria, stability, reproduction numbers, and trajectory diagnostics.

Closed-form component reproduction numbers are evaluated exactly as printed
in the source material for comparison; every threshold decision in this
package uses the spectral radius of the next-generation matrix assembled at
the disease-free point, which is the quantity the dynamics actually obey.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .integrate import Trajectory
from .model import (
    E_B, E_T, I_B, I_T, S_B, S_T, STATE_LABELS,
    ModelError, ModelParams, RecruitmentMode,
    jacobian_base, recruitment, rhs_base, total_birds, total_ticks,
)

#: Real parts below -EPS_EIG count as stable.
EPS_EIG = 1e-9

#: Infected compartments smaller than this mean a root is the disease-free point.
DFE_DETECTION_TOL = 1e-8

INFECTED = (E_B, I_B, E_T, I_T)


class ConvergenceError(RuntimeError):
    """An iterative solver failed; carries the last residual when available."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class EquilibriumKind(Enum):
    DISEASE_FREE = "disease-free"
    ENDEMIC = "endemic"


@dataclass
class EquilibriumReport:
    """A fixed-point candidate with its honest residual and local spectrum."""

    point: np.ndarray
    kind: EquilibriumKind
    residual_norm: float            # max-abs of rhs_base at the point
    eigenvalues: np.ndarray         # 7 complex values, descending real part
    locally_stable: bool            # all real parts < -EPS_EIG


@dataclass
class R0Report:
    """Component reproduction numbers and the two composite values.

    R_B, R_T, R_TB and r0_formula are the printed closed forms taken
    literally (r0_formula is nan when its radicand is negative).
    r0_spectral is the spectral radius of F V^-1 and is authoritative.
    """

    R_B: float
    R_T: float
    R_TB: float
    r0_formula: float
    r0_spectral: float

    @property
    def agreement(self) -> float:
        return abs(self.r0_formula - self.r0_spectral)


def disease_free_equilibrium(params: ModelParams) -> np.ndarray:
    """The infection-free fixed point (tau_B*N_B0/d, 0, 0, 0, tau_T*N_T0/delta, 0, 0).

    Exact for CONSTANT_INFLOW recruitment; in PROPORTIONAL mode it is the
    reference point at which the stability theory is evaluated.
    """
    if params.d <= 0.0 or params.delta <= 0.0:
        raise ModelError("disease-free equilibrium needs d > 0 and delta > 0")
    x = np.zeros(7)
    x[S_B] = params.tau_B * params.N_B0 / params.d
    x[S_T] = params.tau_T * params.N_T0 / params.delta
    return x


def eigenvalues(matrix) -> np.ndarray:
    """All eigenvalues of a dense real matrix, sorted by descending real part.

    Each eigenpair is checked against ||A v - lambda v|| <= 1e-8 * ||A||;
    eigensolver non-convergence or a residual breach raises rather than
    returning silent garbage.
    """
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ModelError(f"need a square matrix, got shape {A.shape}")
    if not np.isfinite(A).all():
        raise ModelError("matrix has non-finite entries")
    try:
        w, v = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"eigensolver did not converge: {exc}") from exc
    scale = np.linalg.norm(A)
    resid = np.linalg.norm(A @ v - v * w, axis=0)
    if scale > 0 and resid.max() > 1e-8 * scale:
        raise ConvergenceError(
            f"eigenpair residual {resid.max():.3e} exceeds 1e-8*||A|| = {1e-8 * scale:.3e}",
            residual=float(resid.max()))
    order = np.argsort(-w.real)
    return w[order]


def jacobian_at(state, params: ModelParams) -> np.ndarray:
    """Analytic Jacobian of the base system at a state (mode-aware, see model)."""
    return jacobian_base(np.asarray(state, dtype=float), params)


def _report_for(point: np.ndarray, params: ModelParams, kind: EquilibriumKind) -> EquilibriumReport:
    resid = float(np.abs(rhs_base(point, params)).max())
    eig = eigenvalues(jacobian_at(point, params))
    return EquilibriumReport(
        point=point, kind=kind, residual_norm=resid, eigenvalues=eig,
        locally_stable=bool(eig.real.max() < -EPS_EIG))


def dfe_report(params: ModelParams) -> EquilibriumReport:
    """EquilibriumReport for the disease-free point under the given params."""
    return _report_for(disease_free_equilibrium(params), params, EquilibriumKind.DISEASE_FREE)


def default_endemic_guess(params: ModelParams) -> np.ndarray:
    """Disease-free point nudged by one head in each infected compartment."""
    guess = disease_free_equilibrium(params)
    guess[list(INFECTED)] += 1.0
    return guess


def endemic_equilibrium(params: ModelParams, guess=None,
                        tol: float = 1e-10, max_iter: int = 200) -> EquilibriumReport:
    """Damped Newton iteration on rhs_base = 0 from the guess.

    Steps are halved (up to 20 times) whenever the max-abs residual does not
    decrease.  A root whose infected compartments all sit below 1e-8 is
    reported as DISEASE_FREE rather than endemic.  Non-convergence raises
    ConvergenceError carrying the last residual.
    """
    x = np.asarray(guess, dtype=float).copy() if guess is not None \
        else default_endemic_guess(params)
    if min(x[i] for i in INFECTED) < 0.0:
        raise ModelError("endemic guess must be nonnegative in infected compartments")

    resid = float(np.abs(rhs_base(x, params)).max())
    for _ in range(max_iter):
        if resid < tol:
            break
        f = rhs_base(x, params)
        try:
            step = np.linalg.solve(jacobian_at(x, params), -f)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(
                f"singular Jacobian in Newton iteration (residual {resid:.3e})",
                residual=resid) from exc
        lam = 1.0
        for _ in range(20):
            trial = x + lam * step
            trial_resid = float(np.abs(rhs_base(trial, params)).max())
            if trial_resid < resid:
                break
            lam *= 0.5
        x = x + lam * step
        resid = float(np.abs(rhs_base(x, params)).max())
    else:
        raise ConvergenceError(
            f"Newton did not reach residual {tol:g} in {max_iter} iterations "
            f"(last residual {resid:.3e})", residual=resid)

    kind = EquilibriumKind.ENDEMIC
    if max(abs(x[i]) for i in INFECTED) < DFE_DETECTION_TOL:
        kind = EquilibriumKind.DISEASE_FREE
    return _report_for(x, params, kind)


def dfe_stability_condition(params: ModelParams) -> tuple[bool, bool]:
    """(eigenvalue verdict, closed-form verdict) for disease-free stability.

    The eigenvalue verdict inspects the proportional-mode Jacobian at the
    disease-free point; the closed form is d > tau_B and delta > tau_T.
    The two agree whenever transmission is subcritical at that point.
    """
    prop = params.with_updates(recruitment_mode=RecruitmentMode.PROPORTIONAL)
    point = disease_free_equilibrium(params)
    eig = eigenvalues(jacobian_at(point, prop))
    spectral = bool(eig.real.max() < -EPS_EIG)
    inequality = params.d > params.tau_B and params.delta > params.tau_T
    return spectral, inequality


def endemic_threshold_predicates(params: ModelParams, E_T_star: float) -> tuple[bool, bool]:
    """Evaluate the two exposed-tick stability thresholds at a candidate E_T*.

    First: E_T* > delta*(tau_B - d) / (beta_1 * alpha_T).
    Second: E_T* > (delta/alpha_T) * (tau_T - delta) / (theta + lam).
    """
    if params.beta_1 * params.alpha_T == 0.0:
        raise ModelError("first threshold needs beta_1 > 0 and alpha_T > 0")
    if (params.theta + params.lam) == 0.0:
        raise ModelError("second threshold needs theta + lam > 0")
    first = params.delta * (params.tau_B - params.d) / (params.beta_1 * params.alpha_T)
    second = (params.delta / params.alpha_T) * (params.tau_T - params.delta) / (params.theta + params.lam)
    return E_T_star > first, E_T_star > second


def next_generation_matrices(params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """New-infection matrix F and transition matrix V of the infected subsystem.

    Rows/columns are ordered (E_B, I_B, E_T, I_T); F holds the new-infection
    rates at the disease-free point, V the transfer terms.
    """
    dfe = disease_free_equilibrium(params)
    sB0, sT0 = dfe[S_B], dfe[S_T]
    thl = params.theta + params.lam
    F = np.array([
        [0.0, params.beta_2 * sB0, 0.0, params.beta_1 * sB0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, params.beta_3 * sT0, 0.0, thl * sT0],
        [0.0, 0.0, 0.0, 0.0],
    ])
    V = np.array([
        [params.alpha_B + params.d, 0.0, 0.0, 0.0],
        [-params.alpha_B, params.sigma + params.d + params.mu, 0.0, 0.0],
        [0.0, 0.0, params.delta + params.alpha_T, 0.0],
        [0.0, 0.0, -params.alpha_T, params.delta],
    ])
    return F, V


def r0(params: ModelParams) -> R0Report:
    """Component reproduction numbers plus both composite R0 values."""
    d, dl = params.d, params.delta
    denom_B = d * (d + params.alpha_B) * (d + params.mu + params.sigma)
    denom_T = dl * dl * (params.alpha_T + dl)
    if denom_B <= 0.0 or denom_T <= 0.0:
        raise ModelError("reproduction numbers need positive loss rates")
    R_B = params.beta_2 * params.tau_B * params.alpha_B / denom_B
    R_T = params.tau_T * params.alpha_T * (params.theta + params.lam) / denom_T
    R_TB = (params.beta_2 * params.tau_B * params.alpha_B
            * params.beta_1 * params.tau_T * params.alpha_T) / (denom_B * denom_T)

    radicand = 0.5 * (R_B + R_T) + ((R_B + R_T) ** 2 - 4.0 * (R_B * R_T + R_TB))
    r0_formula = math.sqrt(radicand) if radicand >= 0.0 else float("nan")

    F, V = next_generation_matrices(params)
    try:
        K = F @ np.linalg.inv(V)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError("transition matrix V is singular") from exc
    r0_spectral = float(max(abs(np.linalg.eigvals(K))))
    return R0Report(R_B=R_B, R_T=R_T, R_TB=R_TB,
                    r0_formula=r0_formula, r0_spectral=r0_spectral)


def invariant_region_check(traj: Trajectory, params: ModelParams,
                           rel_tol: float = 1e-6) -> tuple[bool, int | None]:
    """Whether every sample respects the population caps, plus the first breach.

    The caps are max(N(0), recruitment/death) per species, inflated by
    rel_tol to absorb solver rounding.  Returns (True, None) when the whole
    trajectory stays inside.
    """
    if params.recruitment_mode is not RecruitmentMode.CONSTANT_INFLOW:
        raise ModelError("invariant region check applies to constant-inflow runs")
    lam_B, lam_T = recruitment(traj.samples[0], params)
    cap_B = max(total_birds(traj.samples[0]), lam_B / params.d) * (1.0 + rel_tol)
    cap_T = max(total_ticks(traj.samples[0]), lam_T / params.delta) * (1.0 + rel_tol)
    n_b = traj.samples[:, :S_T].sum(axis=1)
    n_t = traj.samples[:, S_T:].sum(axis=1)
    breaches = np.flatnonzero((n_b > cap_B) | (n_t > cap_T))
    if breaches.size:
        return False, int(breaches[0])
    return True, None


#: Compartments entering the energy-like distance function (R is excluded).
LYAPUNOV_COMPARTMENTS = (S_B, E_B, I_B, S_T, E_T, I_T)


@dataclass
class LyapunovDiagnostic:
    """Sampled distance-to-equilibrium values and their numeric time derivative."""

    L: np.ndarray
    dL_dt: np.ndarray
    epsilon: float                   # slack used to call a slope non-increasing
    fraction_nonincreasing: float    # share of samples with dL_dt <= epsilon


def lyapunov_weights(equilibrium, params: ModelParams) -> tuple[float, float]:
    """Weights applied to the infectious-bird and infectious-tick terms."""
    sB, sT = equilibrium[S_B], equilibrium[S_T]
    A = (params.beta_2 * sB + params.beta_3 * sT) / (params.sigma + params.d)
    B = (params.beta_1 * sB + (params.theta + params.lam) * sT) / params.delta
    return A, B


def lyapunov_diagnostic(traj: Trajectory, equilibrium, params: ModelParams) -> LyapunovDiagnostic:
    """Goh-Volterra distance L along a trajectory and its sampled decay rate.

    L(x) = sum_c w_c * (x_c - x*_c - x*_c * ln(x_c / x*_c)) over the six
    logarithmic compartments, with unit weights except for the infectious
    classes.  Every referenced compartment must be strictly positive in both
    the equilibrium and the samples.
    """
    x_star = np.asarray(equilibrium, dtype=float)
    for c in LYAPUNOV_COMPARTMENTS:
        if x_star[c] <= 0.0:
            raise ModelError(f"equilibrium {STATE_LABELS[c]} must be > 0 for the logarithm")
        if np.any(traj.samples[:, c] <= 0.0):
            raise ModelError(f"trajectory {STATE_LABELS[c]} must stay > 0 for the logarithm")

    A, B = lyapunov_weights(x_star, params)
    weights = {c: 1.0 for c in LYAPUNOV_COMPARTMENTS}
    weights[I_B] = A
    weights[I_T] = B

    L = np.zeros(traj.samples.shape[0])
    for c, w in weights.items():
        xc = traj.samples[:, c]
        xs = x_star[c]
        L += w * (xc - xs - xs * np.log(xc / xs))

    dL_dt = np.gradient(L, traj.grid.dt)
    eps = 1e-8 * float(np.abs(L).max())
    fraction = float(np.mean(dL_dt <= eps))
    return LyapunovDiagnostic(L=L, dL_dt=dL_dt, epsilon=eps,
                              fraction_nonincreasing=fraction)
