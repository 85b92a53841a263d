"""Default initial data and the two-solver cross-validation runs."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .eulerian_oracle import (
    EulerState,
    advect_trajectories,
    energy,
    push_forward_fields,
    run_euler,
    uniform_background,
)
from .fourier_core import Field, Grid, TensorField, gradient
from .lagrangian_system import NumericalError, lagrangian_energy, max_det_deviation
from .sampling import sample_divergence_free
from .wave_elliptic_solver import run_coupled

log = logging.getLogger(__name__)


def default_band(grid: Grid) -> int:
    """Highest retained mode for default data.

    An eighth of the grid keeps cubic products below the 2/3 dealiasing cut,
    so the Eulerian truncation does not put a floor under solver comparisons.
    """
    return min(grid.sizes) // 8


def default_velocity(grid: Grid, amplitude: float = 0.1, decay: float = 4.0, seed: int = 0,
                     band: int | None = None) -> Field:
    """Smooth random divergence-free v0 with spectrum <xi>^{-decay}, scaled to sup |v0| = amplitude."""
    if band is None:
        band = default_band(grid)
    v = sample_divergence_free(grid, decay, seed, band=band)
    peak = float(np.sqrt(np.sum(v.samples**2, axis=0)).max())
    return v * (amplitude / peak) if peak > 0 else v


@dataclass
class CrossValidation:
    times: np.ndarray
    h_error: np.ndarray  # ||H_lag - H_euler|| / ||H_euler||
    g_error: np.ndarray  # same difference relative to ||H_euler - I||
    det_deviation: np.ndarray  # max |det H - 1| over both solvers
    field_line_error: np.ndarray  # max |b_lag - H e_1|, Eulerian side
    field_line_cross: np.ndarray  # max |b_lag(Eulerian) - H_lag e_1|

    def rows(self):
        for k in range(len(self.times)):
            yield {
                "t": float(self.times[k]),
                "h_rel_error": float(self.h_error[k]),
                "g_rel_error": float(self.g_error[k]),
                "det_deviation": float(self.det_deviation[k]),
                "field_line_error": float(self.field_line_error[k]),
                "field_line_cross": float(self.field_line_cross[k]),
            }


def cross_validate(v0: Field, T_end: float, dt: float, *, check_every: int = 10,
                   pressure_tol: float = 1e-12) -> CrossValidation:
    """Compare H from the Lagrangian solver with the Jacobian of the Eulerian flow map.

    The Eulerian run starts from (v0, e_1); the magnetic identity b_lag = H e_1
    is checked at every ``check_every``-th step.
    """
    grid = v0.grid
    steps = int(round(T_end / dt))
    ident = np.eye(grid.n).reshape((grid.n, grid.n) + (1,) * grid.n)
    history = run_euler(EulerState(grid, v0, uniform_background(grid)), dt, steps)
    maps = advect_trajectories(history, dt)
    lag = run_coupled(v0, T_end, dt, pressure_tol=pressure_tol)
    rows = []
    for k in list(range(0, steps + 1, check_every)) + ([steps] if steps % check_every else []):
        He = maps[k].jacobian().samples
        Hl = lag[k].H.samples
        diff = np.linalg.norm(Hl - He)
        g = np.linalg.norm(He - ident)
        b_lag, _ = push_forward_fields(history[k], maps[k])
        dev = max(max_det_deviation(TensorField(grid, He)), max_det_deviation(lag[k].H))
        line = float(np.max(np.abs(b_lag.samples - He[:, 0])))
        cross = float(np.max(np.abs(b_lag.samples - Hl[:, 0])))
        rows.append((k * dt, diff / np.linalg.norm(He), diff / g if g > 0 else diff, dev, line, cross))
    arr = np.array(rows)
    return CrossValidation(*(arr[:, j] for j in range(6)))


def observed_order(errors, factor: float = 2.0) -> list[float]:
    """log_factor of successive error ratios."""
    e = np.asarray(errors, dtype=float)
    return [float(np.log(e[k] / e[k + 1]) / np.log(factor)) for k in range(len(e) - 1)]


def euler_energy_drift(v0: Field, T_end: float, dt: float, b0: Field | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Times and E(t)/E(0) - 1 for the Eulerian solver."""
    grid = v0.grid
    b = uniform_background(grid) if b0 is None else b0
    steps = int(round(T_end / dt))
    state = EulerState(grid, v0, b)
    e0 = energy(state)
    from .eulerian_oracle import step_rk4

    times, drift = [0.0], [0.0]
    for k in range(1, steps + 1):
        state = step_rk4(state, dt)
        times.append(k * dt)
        drift.append(energy(state) / e0 - 1.0)
    return np.array(times), np.array(drift)


def lagrangian_energy_drift(v0: Field, T_end: float, dt: float, record_every: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Times and relative drift of 1/2 int |d_t x|^2 + |d_1 x|^2 along run_coupled."""
    mean = v0.mean()
    states = run_coupled(v0, T_end, dt, record_every=record_every)
    e = np.array([lagrangian_energy(s, mean) for s in states])
    return np.array([s.t for s in states]), e / e[0] - 1.0


__all__ = [
    "CrossValidation", "NumericalError", "cross_validate", "default_band", "default_velocity",
    "euler_energy_drift", "lagrangian_energy_drift", "observed_order",
]
