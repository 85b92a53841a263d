"""Pseudo-spectral reference solver for ideal incompressible MHD and its flow map."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .fourier_core import Field, Grid, TensorField, gradient
from .lagrangian_system import NumericalError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EulerState:
    grid: Grid
    v: Field
    b: Field
    t: float = 0.0

    def __post_init__(self):
        for f in (self.v, self.b):
            if f.grid != self.grid or f.component_shape != (self.grid.n,):
                raise ValueError("v and b must be vector fields on the state grid")


@dataclass(frozen=True)
class FlowMap:
    """x(t, y) = y + displacement(y)."""

    grid: Grid
    displacement: Field
    t: float

    def positions(self) -> np.ndarray:
        return np.stack(self.grid.coordinates()) + self.displacement.samples

    def jacobian(self) -> TensorField:
        """H = I + d_y displacement."""
        g = gradient(self.displacement).samples
        return TensorField(self.grid, g + np.eye(self.grid.n).reshape((self.grid.n,) * 2 + (1,) * self.grid.n))


def _vector_spectrum(v: Field) -> np.ndarray:
    return sfft.rfftn(v.samples, axes=v.grid.axes)


def _vector_from_spectrum(grid: Grid, spec: np.ndarray) -> np.ndarray:
    return sfft.irfftn(spec, s=grid.shape, axes=grid.axes)


def _project_spectrum(grid: Grid, spec: np.ndarray) -> np.ndarray:
    # Nyquist wavenumbers are dropped, matching the odd-derivative convention of divergence()
    ks = [np.where(nq, 0.0, k) for k, nq in zip(grid.wavenumbers(True), grid.nyquist_masks(True))]
    k2 = sum(k**2 for k in ks) * np.ones(grid.spectral_shape())
    inv = np.where(k2 == 0, 0.0, 1.0 / np.where(k2 == 0, 1.0, k2))
    div = sum(k * spec[j] for j, k in enumerate(ks))
    return np.stack([spec[j] - ks[j] * div * inv for j in range(grid.n)])


def leray_project(v: Field) -> Field:
    """Spectral projection onto divergence-free fields; the mean is kept."""
    grid = v.grid
    return Field(grid, _vector_from_spectrum(grid, _project_spectrum(grid, _vector_spectrum(v))))


def divergence(v: Field) -> Field:
    grid = v.grid
    spec = _vector_spectrum(v)
    ks = grid.wavenumbers(True)
    nyq = grid.nyquist_masks(True)
    div = sum(np.where(nq, 0.0, 1j * k) * spec[j] for j, (k, nq) in enumerate(zip(ks, nyq)))
    return Field.from_spectrum(grid, div)


def dealias_mask(grid: Grid) -> np.ndarray:
    """True for modes kept by the 2/3 rule."""
    mask = np.ones(grid.spectral_shape(), dtype=bool)
    for m, s in zip(grid.mode_indices(True), grid.sizes):
        mask &= np.abs(m) <= s // 3
    return mask


def _advective(grid: Grid, a: np.ndarray, grad_c: np.ndarray) -> np.ndarray:
    """(a . grad) c, with grad_c[i, j] = d_j c^i."""
    return np.einsum("j...,ij...->i...", a, grad_c)


def mhd_rhs(state: EulerState) -> tuple[Field, Field]:
    """Time derivatives of (v, b) with 2/3-rule dealiasing and Leray projection."""
    grid = state.grid
    mask = dealias_mask(grid)
    ks = grid.wavenumbers(True)
    vs = _vector_spectrum(state.v) * mask
    bs = _vector_spectrum(state.b) * mask
    v = _vector_from_spectrum(grid, vs)
    b = _vector_from_spectrum(grid, bs)
    gv = np.stack([_vector_from_spectrum(grid, 1j * k * vs) for k in ks], axis=1)
    gb = np.stack([_vector_from_spectrum(grid, 1j * k * bs) for k in ks], axis=1)
    mom = _advective(grid, v, gv) - _advective(grid, b, gb)
    ind = _advective(grid, b, gv) - _advective(grid, v, gb)
    dv = -_project_spectrum(grid, sfft.rfftn(mom, axes=grid.axes) * mask)
    db = _project_spectrum(grid, sfft.rfftn(ind, axes=grid.axes) * mask)
    return Field(grid, _vector_from_spectrum(grid, dv)), Field(grid, _vector_from_spectrum(grid, db))


def cfl_bound(state: EulerState) -> float:
    speed = np.sqrt(np.sum(state.v.samples**2, axis=0)) + np.sqrt(np.sum(state.b.samples**2, axis=0))
    vmax = float(speed.max())
    h = min(state.grid.spacing)
    return np.inf if vmax == 0 else 0.5 * h / vmax


def step_rk4(state: EulerState, dt: float) -> EulerState:
    """Classical RK4; every stage state is projected onto divergence-free fields."""
    bound = cfl_bound(state)
    if dt > bound:
        raise NumericalError(f"dt = {dt:.3e} violates the CFL bound {bound:.3e}", cfl_bound=bound)
    grid = state.grid

    def stage(v, b, t):
        return mhd_rhs(EulerState(grid, leray_project(v), leray_project(b), t))

    k1 = stage(state.v, state.b, state.t)
    k2 = stage(state.v + 0.5 * dt * k1[0], state.b + 0.5 * dt * k1[1], state.t + 0.5 * dt)
    k3 = stage(state.v + 0.5 * dt * k2[0], state.b + 0.5 * dt * k2[1], state.t + 0.5 * dt)
    k4 = stage(state.v + dt * k3[0], state.b + dt * k3[1], state.t + dt)
    v = state.v + (dt / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    b = state.b + (dt / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    return EulerState(grid, leray_project(v), leray_project(b), state.t + dt)


def run_euler(state: EulerState, dt: float, steps: int) -> list[EulerState]:
    """History of ``steps`` RK4 steps, including the initial state."""
    history = [state]
    for _ in range(steps):
        history.append(step_rk4(history[-1], dt))
    return history


def energy(state: EulerState) -> float:
    return 0.5 * float(np.sum(state.v.samples**2) + np.sum(state.b.samples**2)) * state.grid.cell_volume


EVAL_TOL = 1e-15


class SpectralEvaluator:
    """Evaluates a band-limited field at scattered points by direct Fourier summation.

    Coefficients below ``tol`` times the largest one are treated as round-off
    and skipped, which shrinks the sum to the modes that carry the field.
    """

    def __init__(self, f: Field, tol: float = EVAL_TOL):
        grid = f.grid
        self.grid = grid
        full = sfft.fftn(f.samples, axes=grid.axes) / grid.num_points
        self.modes = []
        mag = np.abs(full).reshape((-1,) + grid.shape).max(axis=0) if f.rank else np.abs(full)
        thresh = tol * mag.max() if mag.max() > 0 else 0.0
        sl = []
        for axis, s in enumerate(grid.sizes):
            m = np.fft.fftfreq(s, 1.0 / s).astype(int)
            other = tuple(a for a in range(grid.n) if a != axis)
            active = mag.max(axis=other) > thresh
            if s % 2 == 0:
                active[s // 2] = False  # the Nyquist term is not part of the real interpolant basis
            idx = np.nonzero(active)[0]
            if idx.size == 0:
                idx = np.array([0])
            sl.append(idx)
            self.modes.append(m[idx])
        lead = (slice(None),) * f.rank
        self.coef = full[lead + np.ix_(*sl)]
        self.component_shape = f.component_shape
        self._unit = 2 * np.pi / grid.period

    def _phases(self, x: np.ndarray, modes: np.ndarray) -> np.ndarray:
        """exp(i m x) for integer modes, by repeated multiplication of exp(i x)."""
        top = int(np.abs(modes).max())
        table = np.empty((x.size, top + 1), dtype=complex)
        table[:, 0] = 1.0
        if top:
            table[:, 1:] = np.exp(1j * self._unit * x)[:, None]
            np.cumprod(table[:, 1:], axis=1, out=table[:, 1:])
        out = table[:, np.abs(modes)]
        neg = modes < 0
        out[:, neg] = out[:, neg].conj()
        return out

    def __call__(self, points: np.ndarray, chunk: int = 8192) -> np.ndarray:
        """``points`` has shape (n, P); returns component_shape + (P,)."""
        n = self.grid.n
        P = points.shape[1]
        ncomp = int(np.prod(self.component_shape)) if self.component_shape else 1
        coef = self.coef.reshape((ncomp,) + self.coef.shape[len(self.component_shape):])
        # fold components into the trailing axis so that axis 0 is one matrix product
        stacked = np.moveaxis(coef, 0, -1).reshape(coef.shape[1], -1)
        out = np.empty((ncomp, P))
        for start in range(0, P, chunk):
            pts = points[:, start:start + chunk]
            acc = self._phases(pts[0], self.modes[0]) @ stacked
            acc = acc.reshape((pts.shape[1],) + coef.shape[2:] + (ncomp,))
            for j in range(1, n):
                acc = np.einsum("pk...,pk->p...", acc, self._phases(pts[j], self.modes[j]))
            out[:, start:start + chunk] = acc.real.T
        return out.reshape(self.component_shape + (P,))


def evaluate_off_grid(f: Field, points: np.ndarray) -> np.ndarray:
    return SpectralEvaluator(f)(points)


def _hermite_midpoint(s0: np.ndarray, s1: np.ndarray, d0: np.ndarray, d1: np.ndarray, dt: float) -> np.ndarray:
    return 0.5 * (s0 + s1) + 0.125 * dt * (d0 - d1)


def advect_trajectories(history: Sequence[EulerState], dt: float) -> list[FlowMap]:
    """Integrate dx/dt = v(t, x) for every label point with RK4.

    Velocities at half steps come from cubic Hermite interpolation in time,
    using the solver's own time derivative at the history nodes.
    """
    if len(history) < 1:
        raise ValueError("empty history")
    grid = history[0].grid
    times = np.array([s.t for s in history])
    if len(history) > 1 and np.max(np.abs(np.diff(times) - dt)) > 1e-9 * max(1.0, dt):
        raise ValueError("history must be sampled uniformly with spacing dt")
    y = np.stack(grid.coordinates()).reshape(grid.n, -1)
    x = y.copy()
    maps = [FlowMap(grid, Field.zeros(grid, (grid.n,)), history[0].t)]
    derivs = [mhd_rhs(s)[0].samples for s in history]
    e1 = SpectralEvaluator(history[0].v)
    for k in range(len(history) - 1):
        v0 = history[k].v.samples
        v1 = history[k + 1].v.samples
        vm = _hermite_midpoint(v0, v1, derivs[k], derivs[k + 1], dt)
        e0 = e1
        em = SpectralEvaluator(Field(grid, vm))
        e1 = SpectralEvaluator(history[k + 1].v)
        k1 = e0(x)
        k2 = em(x + 0.5 * dt * k1)
        k3 = em(x + 0.5 * dt * k2)
        k4 = e1(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        maps.append(FlowMap(grid, Field(grid, (x - y).reshape((grid.n,) + grid.shape)), history[k + 1].t))
    return maps


def push_forward_fields(state: EulerState, fmap: FlowMap) -> tuple[Field, Field]:
    """(b, v) composed with the flow map: b_lag(y) = b(t, x(t, y))."""
    if abs(state.t - fmap.t) > 1e-9 * max(1.0, abs(state.t)):
        raise ValueError(f"state time {state.t} does not match flow-map time {fmap.t}")
    grid = state.grid
    pts = fmap.positions().reshape(grid.n, -1)
    b = SpectralEvaluator(state.b)(pts).reshape((grid.n,) + grid.shape)
    v = SpectralEvaluator(state.v)(pts).reshape((grid.n,) + grid.shape)
    return Field(grid, b), Field(grid, v)


def uniform_background(grid: Grid, direction: int = 0, strength: float = 1.0) -> Field:
    b = np.zeros((grid.n,) + grid.shape)
    b[direction] = strength
    return Field(grid, b)
