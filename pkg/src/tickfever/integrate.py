"""Fixed-step classical Runge-Kutta integration on a shared uniform grid.

Forward and backward sweeps of the optimal-control solver must see state and
costate on the same grid, so the step is fixed rather than adaptive.  Frozen
companion trajectories (the state while integrating the costate backward)
are interpolated linearly at the half-step stage points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import STATE_LABELS


class IntegrationError(RuntimeError):
    """Integration produced a non-finite value; carries step index and component."""

    def __init__(self, message, step=None, component=None):
        super().__init__(message)
        self.step = step
        self.component = component


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of n_steps intervals on [t0, t1]; nodes are t0 + k*dt."""

    t0: float
    t1: float
    n_steps: int

    def __post_init__(self):
        if not (math.isfinite(self.t0) and math.isfinite(self.t1)):
            raise ValueError("grid endpoints must be finite")
        if self.t1 <= self.t0:
            raise ValueError(f"need t1 > t0, got [{self.t0}, {self.t1}]")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / self.n_steps

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


@dataclass
class Trajectory:
    """Samples of a vector quantity on a TimeGrid, ordered forward in time.

    samples has shape (n_steps + 1, dim) and samples[0] is exactly the
    supplied initial (or, for backward runs, samples[-1] the terminal) value.
    """

    grid: TimeGrid
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        expected = self.grid.n_steps + 1
        if self.samples.ndim != 2 or self.samples.shape[0] != expected:
            raise ValueError(
                f"samples must have shape ({expected}, dim), got {self.samples.shape}")

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def times(self) -> np.ndarray:
        return self.grid.times()

    @property
    def initial(self) -> np.ndarray:
        return self.samples[0]

    @property
    def final(self) -> np.ndarray:
        return self.samples[-1]


def _component_name(dim, i):
    if dim == len(STATE_LABELS):
        return STATE_LABELS[i]
    return f"component {i}"


def _check_finite(y, step, dim):
    if np.isfinite(y).all():
        return
    i = int(np.flatnonzero(~np.isfinite(y))[0])
    raise IntegrationError(
        f"non-finite value in {_component_name(dim, i)} at step {step}",
        step=step, component=i)


def integrate(rhs, x0, grid: TimeGrid, frozen: Trajectory | None = None) -> Trajectory:
    """Integrate x' = rhs(t, x) forward over the grid with classical RK4.

    Deterministic: identical inputs produce bit-identical trajectories.
    Raises IntegrationError if any step yields a non-finite component.
    A frozen companion trajectory on the same grid (e.g. control samples)
    makes the rhs signature rhs(t, x, z), with z interpolated linearly at
    the stage times exactly as in integrate_backward.
    """
    if frozen is not None and frozen.grid != grid:
        raise ValueError("frozen trajectory grid does not match integration grid")
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    dim = x.shape[0]
    _check_finite(x, 0, dim)
    dt = grid.dt
    out = np.empty((grid.n_steps + 1, dim))
    out[0] = x
    for k in range(grid.n_steps):
        t = grid.t0 + k * dt
        if frozen is None:
            k1 = rhs(t, x)
            k2 = rhs(t + 0.5 * dt, x + (0.5 * dt) * k1)
            k3 = rhs(t + 0.5 * dt, x + (0.5 * dt) * k2)
            k4 = rhs(t + dt, x + dt * k3)
        else:
            z_lo = frozen.samples[k]
            z_hi = frozen.samples[k + 1]
            z_mid = 0.5 * (z_lo + z_hi)
            k1 = rhs(t, x, z_lo)
            k2 = rhs(t + 0.5 * dt, x + (0.5 * dt) * k1, z_mid)
            k3 = rhs(t + 0.5 * dt, x + (0.5 * dt) * k2, z_mid)
            k4 = rhs(t + dt, x + dt * k3, z_hi)
        x = x + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        _check_finite(x, k + 1, dim)
        out[k + 1] = x
    return Trajectory(grid, out)


def integrate_backward(rhs, xT, grid: TimeGrid, frozen: Trajectory | None = None) -> Trajectory:
    """Integrate from t1 down to t0 with terminal condition xT.

    When a frozen companion trajectory is supplied it must live on the same
    grid; the rhs is then called as rhs(t, y, z) with z the frozen value
    linearly interpolated at t (node values at nodes, midpoint averages at
    the RK4 half steps).  Without a frozen input the rhs is rhs(t, y).
    The returned trajectory is ordered forward in time.
    """
    if frozen is not None and frozen.grid != grid:
        raise ValueError("frozen trajectory grid does not match integration grid")
    y = np.atleast_1d(np.asarray(xT, dtype=float)).copy()
    dim = y.shape[0]
    _check_finite(y, grid.n_steps, dim)
    dt = grid.dt
    out = np.empty((grid.n_steps + 1, dim))
    out[grid.n_steps] = y
    for k in range(grid.n_steps, 0, -1):
        t = grid.t0 + k * dt
        if frozen is None:
            k1 = rhs(t, y)
            k2 = rhs(t - 0.5 * dt, y - (0.5 * dt) * k1)
            k3 = rhs(t - 0.5 * dt, y - (0.5 * dt) * k2)
            k4 = rhs(t - dt, y - dt * k3)
        else:
            z_hi = frozen.samples[k]
            z_lo = frozen.samples[k - 1]
            z_mid = 0.5 * (z_hi + z_lo)
            k1 = rhs(t, y, z_hi)
            k2 = rhs(t - 0.5 * dt, y - (0.5 * dt) * k1, z_mid)
            k3 = rhs(t - 0.5 * dt, y - (0.5 * dt) * k2, z_mid)
            k4 = rhs(t - dt, y - dt * k3, z_lo)
        y = y - (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        _check_finite(y, k - 1, dim)
        out[k - 1] = y
    return Trajectory(grid, out)
