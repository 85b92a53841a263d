"""Discrete anisotropic Sobolev and restriction norms.

All sums carry the cell volume and time step so that, for band-limited data,
the discrete values converge to the continuum norms with the 1/(2 pi)^d
Plancherel weight.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .fourier_core import (
    Field,
    Grid,
    SpaceTimeField,
    TWO_PI,
    bracket,
    spacetime_half_spectrum,
)

KINDS = ("spatial", "spacetime", "composite")


@dataclass(frozen=True)
class NormSpec:
    """Exponents of the weight <xi>^a <xi_1>^b <||tau|-|xi_1||>^theta."""

    a: float = 0.0
    b: float = 0.0
    theta: float = 0.0
    kind: str = "spacetime"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown norm kind {self.kind!r}")
        for v in (self.a, self.b, self.theta):
            if not np.isfinite(v):
                raise ValueError("norm exponents must be finite")


@lru_cache(maxsize=64)
def _spatial_weight(grid: Grid, a: float, b: float) -> np.ndarray:
    w = bracket(grid.abs_xi) ** (2 * a) * bracket(grid.abs_xi1) ** (2 * b) * grid.hermitian_weights()
    w.flags.writeable = False
    return w


@lru_cache(maxsize=64)
def _spacetime_weight(grid: Grid, nt: int, dt: float, a: float, b: float, theta: float, dt_order: int) -> np.ndarray:
    k = np.fft.fftfreq(nt, 1.0 / nt)
    tau = np.abs(TWO_PI * k / (nt * dt)).reshape((nt,) + (1,) * grid.n)
    if dt_order:
        tau_sq = tau**2
        tau_sq[nt // 2] = 0.0  # Nyquist derivative dropped, as for spatial odd derivatives
    mod = bracket(np.abs(tau - grid.abs_xi1[None]))
    w = mod ** (2 * theta) * _spatial_weight(grid, a, b)[None]
    if dt_order:
        w = w * tau_sq
    w.flags.writeable = False
    return w


def sobolev_norm(f: Field, a: float = 0.0, b: float = 0.0) -> float:
    """H^{a,b} norm with weight <xi>^a <xi_1>^b; vector components add in square."""
    grid = f.grid
    spec = sfft.rfftn(f.samples, axes=grid.axes)
    energy = spec.real**2 + spec.imag**2
    if f.rank:
        energy = energy.reshape((-1,) + grid.spectral_shape()).sum(axis=0)
    total = float(np.sum(energy * _spatial_weight(grid, float(a), float(b))))
    return float(np.sqrt(total * grid.cell_volume / grid.num_points))


def _spacetime_energy(u: SpaceTimeField, a: float, b: float, theta: float, dt_order: int = 0) -> float:
    grid = u.grid
    spec = spacetime_half_spectrum(u)
    energy = spec.real**2 + spec.imag**2
    if u.component_shape:
        energy = np.moveaxis(energy, 0, -grid.n - 1)
        energy = energy.reshape((-1, u.nt) + grid.spectral_shape()).sum(axis=0)
    weight = _spacetime_weight(grid, u.nt, u.dt, float(a), float(b), float(theta), dt_order)
    total = float(np.sum(energy * weight))
    return total * u.dt * grid.cell_volume / (u.nt * grid.num_points)


def wave_sobolev_norm(u: SpaceTimeField, spec: NormSpec) -> float:
    """H^{a,b}_theta norm of a space-time field.

    The field is treated as periodic on its window, so callers must pass data
    that is already cut off smoothly in time.
    """
    return float(np.sqrt(_spacetime_energy(u, spec.a, spec.b, spec.theta)))


def composite_norm(u: SpaceTimeField, spec: NormSpec, ut: SpaceTimeField | None = None) -> float:
    """|u| = ||u||_{H^{a,b}_theta} + ||d_t u||_{H^{a,b-1}_theta}.

    ``ut`` supplies d_t u directly; otherwise it is taken spectrally in tau.
    """
    first = wave_sobolev_norm(u, spec)
    if ut is not None:
        second = wave_sobolev_norm(ut, NormSpec(spec.a, spec.b - 1, spec.theta))
    else:
        second = float(np.sqrt(_spacetime_energy(u, spec.a, spec.b - 1, spec.theta, dt_order=1)))
    return first + second


def time_sobolev_norm(values, dt: float, theta: float) -> float:
    """H^theta(R) norm of a compactly supported function of time sampled with step dt."""
    values = np.asarray(values, dtype=float)
    nt = values.size
    k = np.fft.fftfreq(nt, 1.0 / nt)
    tau = np.abs(TWO_PI * k / (nt * dt))
    spec = np.fft.fft(values)
    total = np.sum(bracket(tau) ** (2 * theta) * np.abs(spec) ** 2)
    return float(np.sqrt(total * dt / nt))


def sup_norm(u: Field | SpaceTimeField) -> float:
    """Grid maximum of |u| (Euclidean norm over components)."""
    arr = u.samples
    if isinstance(u, SpaceTimeField):
        comp = len(u.component_shape)
        axes = tuple(range(1, 1 + comp))
    else:
        axes = tuple(range(u.rank))
    mag = np.sqrt(np.sum(arr**2, axis=axes)) if axes else np.abs(arr)
    return float(mag.max())


def norm(u, spec: NormSpec, ut: SpaceTimeField | None = None) -> float:
    """Dispatch on ``spec.kind``."""
    if spec.kind == "spatial":
        if spec.theta:
            raise ValueError("spatial norms take no modulation exponent")
        return sobolev_norm(u, spec.a, spec.b)
    if spec.kind == "spacetime":
        return wave_sobolev_norm(u, spec)
    return composite_norm(u, spec, ut)


def complex_wave_sobolev_norm(re: SpaceTimeField, im: SpaceTimeField, spec: NormSpec) -> float:
    """H^{a,b}_theta norm of the complex field re + i im, from its full space-time spectrum."""
    if re.grid != im.grid or re.samples.shape != im.samples.shape or re.dt != im.dt:
        raise ValueError("real and imaginary parts must share one space-time grid")
    grid = re.grid
    axes = (0,) + tuple(re.samples.ndim + a for a in grid.axes)
    full = sfft.fftn(re.samples + 1j * im.samples, axes=axes)
    energy = full.real**2 + full.imag**2
    if re.component_shape:
        energy = np.moveaxis(energy, 0, -grid.n - 1)
        energy = energy.reshape((-1, re.nt) + grid.shape).sum(axis=0)
    k = np.fft.fftfreq(re.nt, 1.0 / re.nt)
    tau = np.abs(TWO_PI * k / (re.nt * re.dt)).reshape((re.nt,) + (1,) * grid.n)
    ks = grid.wavenumbers(False)
    xi = np.sqrt(sum(kk**2 for kk in ks))
    xi1 = np.abs(ks[0]) * np.ones(grid.shape)
    weight = (bracket(xi) ** (2 * spec.a) * bracket(xi1) ** (2 * spec.b))[None] * bracket(np.abs(tau - xi1[None])) ** (
        2 * spec.theta)
    total = float(np.sum(energy * weight))
    return float(np.sqrt(total * re.dt * grid.cell_volume / (re.nt * grid.num_points)))
