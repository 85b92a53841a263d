"""Spectral calculus on a periodic box.

Fields are stored as real samples whose trailing axes are the grid axes, so
scalar, vector and tensor fields share one code path. Axis 0 of the grid is
the distinguished direction y1 along which the degenerate wave operator acts.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.fft as sfft
from scipy import integrate, interpolate

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


def bracket(x):
    """Japanese bracket 1 + |x|."""
    return 1.0 + np.abs(x)


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid of dimension ``n`` with ``sizes[j]`` points on axis j."""

    n: int
    sizes: tuple[int, ...]
    period: float = TWO_PI

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if self.n not in (2, 3):
            raise ValueError(f"grid dimension must be 2 or 3, got {self.n}")
        if len(sizes) != self.n:
            raise ValueError(f"expected {self.n} sizes, got {sizes}")
        for s in sizes:
            if s < 4 or s & (s - 1):
                raise ValueError(f"grid sizes must be powers of two >= 4, got {sizes}")
        if not (self.period > 0 and math.isfinite(self.period)):
            raise ValueError("period must be positive")

    @classmethod
    def square(cls, n: int, size: int, period: float = TWO_PI) -> "Grid":
        return cls(n, (size,) * n, period)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.sizes

    @property
    def axes(self) -> tuple[int, ...]:
        """Negative axis indices of the grid axes inside a sample array."""
        return tuple(range(-self.n, 0))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(self.period / s for s in self.sizes)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def num_points(self) -> int:
        return int(np.prod(self.sizes))

    @property
    def volume(self) -> float:
        return self.period**self.n

    def coordinates(self) -> list[np.ndarray]:
        """Meshgrid of sample positions, one array per axis."""
        axes = [np.arange(s) * h for s, h in zip(self.sizes, self.spacing)]
        return np.meshgrid(*axes, indexing="ij")

    def spectral_shape(self, half: bool = True) -> tuple[int, ...]:
        if not half:
            return self.sizes
        return self.sizes[:-1] + (self.sizes[-1] // 2 + 1,)

    def mode_indices(self, half: bool = True) -> list[np.ndarray]:
        """Integer mode numbers per axis, broadcastable to the spectral shape.

        The Nyquist index is reported as +N/2.
        """
        out = []
        for j, s in enumerate(self.sizes):
            if half and j == self.n - 1:
                m = np.arange(s // 2 + 1)
            else:
                m = np.fft.fftfreq(s, 1.0 / s).astype(np.int64)
                m[s // 2] = s // 2
            shape = [1] * self.n
            shape[j] = m.size
            out.append(m.reshape(shape))
        return out

    def wavenumbers(self, half: bool = True) -> list[np.ndarray]:
        scale = TWO_PI / self.period
        return [scale * m for m in self.mode_indices(half)]

    def nyquist_masks(self, half: bool = True) -> list[np.ndarray]:
        return [np.abs(m) == s // 2 for m, s in zip(self.mode_indices(half), self.sizes)]

    def hermitian_weights(self) -> np.ndarray:
        """Multiplicity of each half-layout mode in a full-spectrum sum."""
        s = self.sizes[-1]
        w = np.full(s // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        shape = [1] * self.n
        shape[-1] = w.size
        return w.reshape(shape)

    @cached_property
    def abs_xi(self) -> np.ndarray:
        k = self.wavenumbers(True)
        return np.sqrt(sum(kk.astype(float) ** 2 for kk in k))

    @cached_property
    def abs_xi1(self) -> np.ndarray:
        return np.abs(self.wavenumbers(True)[0]) * np.ones(self.spectral_shape(True))

    def to_json(self) -> dict:
        return {"n": self.n, "sizes": list(self.sizes), "period": self.period}


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


class Field:
    """Real samples of a scalar, vector or tensor function on a grid.

    ``samples`` has shape ``component_shape + grid.shape``. Instances are
    immutable; arithmetic returns new fields.
    """

    __slots__ = ("grid", "samples")

    def __init__(self, grid: Grid, samples, *, check: bool = True):
        arr = np.array(samples, dtype=float)
        if arr.shape[arr.ndim - grid.n:] != grid.shape or arr.ndim < grid.n:
            raise ValueError(f"samples of shape {arr.shape} do not end in grid shape {grid.shape}")
        if check and not np.isfinite(arr).all():
            raise ValueError("field samples must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "samples", _readonly(arr))

    def __setattr__(self, name, value):
        raise AttributeError("Field is immutable")

    @property
    def component_shape(self) -> tuple[int, ...]:
        return self.samples.shape[: self.samples.ndim - self.grid.n]

    @property
    def rank(self) -> int:
        return len(self.component_shape)

    def spectrum(self) -> np.ndarray:
        """Half-layout DFT over the grid axes (numpy sign convention)."""
        return sfft.rfftn(self.samples, axes=self.grid.axes)

    @classmethod
    def from_spectrum(cls, grid: Grid, spec: np.ndarray) -> "Field":
        return cls(grid, sfft.irfftn(spec, s=grid.shape, axes=grid.axes))

    @classmethod
    def zeros(cls, grid: Grid, component_shape: tuple[int, ...] = ()) -> "Field":
        return cls(grid, np.zeros(component_shape + grid.shape))

    def component(self, *index) -> "Field":
        return Field(self.grid, self.samples[index])

    def mean(self) -> np.ndarray | float:
        m = self.samples.mean(axis=self.grid.axes)
        return float(m) if np.ndim(m) == 0 else m

    def l2(self) -> float:
        return float(np.sqrt(np.sum(self.samples**2) * self.grid.cell_volume))

    def _like(self, samples):
        return type(self)(self.grid, samples)

    def _other(self, other):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise ValueError("grid mismatch")
            return other.samples
        return other

    def __add__(self, other):
        return self._like(self.samples + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._like(self.samples - self._other(other))

    def __rsub__(self, other):
        return self._like(self._other(other) - self.samples)

    def __mul__(self, other):
        return self._like(self.samples * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._like(self.samples / self._other(other))

    def __neg__(self):
        return self._like(-self.samples)

    def __repr__(self):
        return f"{type(self).__name__}(grid={self.grid.sizes}, components={self.component_shape})"


class TensorField(Field):
    """An n-by-n matrix-valued field; ``samples[i, a]`` holds the (i, a) entry."""

    __slots__ = ()

    def __init__(self, grid: Grid, samples, *, check: bool = True):
        super().__init__(grid, samples, check=check)
        if self.component_shape != (grid.n, grid.n):
            raise ValueError(f"tensor field needs components {(grid.n, grid.n)}, got {self.component_shape}")

    @classmethod
    def identity(cls, grid: Grid) -> "TensorField":
        eye = np.eye(grid.n).reshape((grid.n, grid.n) + (1,) * grid.n)
        return cls(grid, np.broadcast_to(eye, (grid.n, grid.n) + grid.shape))


class SpaceTimeField:
    """Uniformly sampled stack of fields, ``samples[j]`` taken at ``t0 + j*dt``."""

    __slots__ = ("grid", "t0", "dt", "samples")

    def __init__(self, grid: Grid, t0: float, dt: float, samples, *, check: bool = True):
        arr = np.array(samples, dtype=float)
        if arr.ndim < grid.n + 1 or arr.shape[arr.ndim - grid.n:] != grid.shape:
            raise ValueError(f"samples of shape {arr.shape} do not end in grid shape {grid.shape}")
        nt = arr.shape[0]
        if nt < 2 or nt % 2:
            raise ValueError(f"number of time slices must be even, got {nt}")
        if not dt > 0:
            raise ValueError("dt must be positive")
        if check and not np.isfinite(arr).all():
            raise ValueError("space-time samples must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "t0", float(t0))
        object.__setattr__(self, "dt", float(dt))
        object.__setattr__(self, "samples", _readonly(arr))

    def __setattr__(self, name, value):
        raise AttributeError("SpaceTimeField is immutable")

    @classmethod
    def from_slices(cls, slices: Sequence[Field], t0: float, dt: float) -> "SpaceTimeField":
        grid = slices[0].grid
        if any(s.grid != grid for s in slices):
            raise ValueError("all slices must share one grid")
        return cls(grid, t0, dt, np.stack([s.samples for s in slices]))

    @property
    def nt(self) -> int:
        return self.samples.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.nt)

    @property
    def window_length(self) -> float:
        return self.nt * self.dt

    @property
    def component_shape(self) -> tuple[int, ...]:
        return self.samples.shape[1: self.samples.ndim - self.grid.n]

    @property
    def slices(self) -> list[Field]:
        return [self.slice(j) for j in range(self.nt)]

    def slice(self, j: int) -> Field:
        cls = TensorField if self.component_shape == (self.grid.n, self.grid.n) else Field
        return cls(self.grid, self.samples[j], check=False)

    def index_of(self, t: float) -> int:
        """Index of the slice at time ``t``; raises if ``t`` is not a sample time."""
        j = int(round((t - self.t0) / self.dt))
        if not 0 <= j < self.nt or abs(self.t0 + j * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the sample grid")
        return j

    def time_frequencies(self) -> np.ndarray:
        """Angular frequencies 2*pi*k/(nt*dt), k in {-nt/2+1..nt/2}, in FFT order."""
        k = np.fft.fftfreq(self.nt, 1.0 / self.nt)
        k[self.nt // 2] = self.nt // 2
        return TWO_PI * k / self.window_length

    def like(self, samples) -> "SpaceTimeField":
        return SpaceTimeField(self.grid, self.t0, self.dt, samples)

    def scaled_in_time(self, weights) -> "SpaceTimeField":
        """Multiply slice j by ``weights[j]``."""
        w = np.asarray(weights, dtype=float).reshape((self.nt,) + (1,) * (self.samples.ndim - 1))
        return self.like(self.samples * w)

    def __add__(self, other):
        return self.like(self.samples + _st_other(self, other))

    def __sub__(self, other):
        return self.like(self.samples - _st_other(self, other))

    def __mul__(self, other):
        return self.like(self.samples * _st_other(self, other))

    __rmul__ = __mul__

    def __neg__(self):
        return self.like(-self.samples)

    def __repr__(self):
        return f"SpaceTimeField(grid={self.grid.sizes}, nt={self.nt}, t0={self.t0}, dt={self.dt})"


def _st_other(u: SpaceTimeField, other):
    if isinstance(other, SpaceTimeField):
        if other.grid != u.grid or other.nt != u.nt or abs(other.dt - u.dt) > 1e-14 or abs(other.t0 - u.t0) > 1e-12:
            raise ValueError("space-time grid mismatch")
        return other.samples
    return other


def _spacetime_axes(u: SpaceTimeField) -> tuple[int, ...]:
    return (0,) + tuple(u.samples.ndim + a for a in u.grid.axes)


# --------------------------------------------------------------------------
# Spatial multipliers


# relative size of coefficients treated as transform round-off
ROUNDOFF_FLOOR = 1e-14


def spectral_derivative(f: Field, axis: int, order: int = 1, floor: float = 0.0) -> Field:
    """Derivative of the trigonometric interpolant of ``f`` along ``axis`` (0-based).

    Coefficients at or below ``floor`` times the largest one are dropped
    first, so round-off is not amplified by the wavenumber.
    """
    grid = f.grid
    if not 0 <= axis < grid.n:
        raise ValueError(f"axis {axis} out of range for a {grid.n}-dimensional grid")
    if order < 0:
        raise ValueError("order must be nonnegative")
    if order == 0:
        return f
    k = grid.wavenumbers(True)[axis]
    symbol = (1j * k) ** order
    if order % 2:
        symbol = np.where(grid.nyquist_masks(True)[axis], 0.0, symbol)
    spec = f.spectrum()
    if floor > 0:
        spec = np.where(np.abs(spec) > floor * np.abs(spec).max(), spec, 0.0)
    return Field(grid, sfft.irfftn(spec * symbol, s=grid.shape, axes=grid.axes))


def gradient(f: Field) -> Field:
    """Gradient with a new trailing component index: ``out[..., a] = d_a f``."""
    grid = f.grid
    spec = f.spectrum()
    parts = []
    for axis, (k, nyq) in enumerate(zip(grid.wavenumbers(True), grid.nyquist_masks(True))):
        symbol = np.where(nyq, 0.0, 1j * k)
        parts.append(sfft.irfftn(spec * symbol, s=grid.shape, axes=grid.axes))
    return Field(grid, np.stack(parts, axis=f.rank))


@dataclass(frozen=True)
class SymbolSpec:
    """A Fourier multiplier.

    kinds: ``bracket`` (<xi>^alpha), ``bracket1`` (<xi_1>^alpha), ``abs1``
    (|xi_1|^alpha), ``modulation`` (<||tau|-|xi_1||>^alpha, space-time only) and
    ``envelope`` (a cutoff of scale*<||tau|-|xi_1||>, space-time only).
    """

    kind: str
    alpha: float = 0.0
    scale: float = 1.0

    KINDS = ("bracket", "bracket1", "abs1", "modulation", "envelope")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown symbol kind {self.kind!r}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def spatial(self) -> bool:
        return self.kind in ("bracket", "bracket1", "abs1")

    def values(self, grid: Grid) -> np.ndarray:
        """Symbol sampled on the half-layout spectrum of ``grid``."""
        if not self.spatial:
            raise ValueError(f"symbol {self.kind!r} acts on space-time fields only")
        if self.kind == "bracket":
            return bracket(grid.abs_xi) ** self.alpha
        if self.kind == "bracket1":
            return bracket(grid.abs_xi1) ** self.alpha
        xi1 = grid.abs_xi1
        if self.alpha >= 0:
            return xi1**self.alpha
        out = np.zeros_like(xi1)
        nz = xi1 > 0
        out[nz] = xi1[nz] ** self.alpha
        return out


ZERO_PLANE_TOL = 1e-10


def apply_symbol(f: Field, spec: SymbolSpec, *, allow_zero_plane: bool = False) -> Field:
    """Multiply every Fourier coefficient of ``f`` by a real even symbol.

    Negative powers of |xi_1| annihilate the xi_1 = 0 plane. If that plane holds
    more than 1e-10 of the energy this raises, unless ``allow_zero_plane`` is set,
    in which case it only logs a warning.
    """
    grid = f.grid
    symbol = spec.values(grid)
    spec_f = f.spectrum()
    if spec.kind == "abs1" and spec.alpha < 0:
        w = grid.hermitian_weights()
        energy = np.abs(spec_f) ** 2 * w
        total = energy.sum()
        plane = energy[..., grid.abs_xi1 == 0].sum() if total > 0 else 0.0
        frac = plane / total if total > 0 else 0.0
        if frac > ZERO_PLANE_TOL:
            msg = f"|xi_1|^{spec.alpha} discards xi_1 = 0 content carrying {frac:.3e} of the energy"
            if not allow_zero_plane:
                raise ValueError(msg)
            log.warning(msg)
    return Field.from_spectrum(grid, spec_f * symbol)


PROPAGATOR_MODES = ("exp_plus", "exp_minus", "cos", "sinc")


def propagator_symbols(grid: Grid, t: float) -> tuple[np.ndarray, np.ndarray]:
    """cos(t|xi_1|) and sin(t|xi_1|)/|xi_1| (limit t at xi_1 = 0) on the half layout."""
    w = grid.abs_xi1
    c = np.cos(t * w)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(w > 0, np.sin(t * w) / np.where(w > 0, w, 1.0), t)
    return c, s


def half_wave_propagate(f: Field, t: float, mode: str):
    """Apply e^{+-itD}, cos(tD) or D^{-1} sin(tD), where D = |d/dy_1|.

    The exponential modes return the pair (real part, imaginary part).
    """
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    if mode not in PROPAGATOR_MODES:
        raise ValueError(f"unknown propagator mode {mode!r}")
    grid = f.grid
    spec = f.spectrum()
    w = grid.abs_xi1
    if mode == "cos":
        return Field.from_spectrum(grid, spec * np.cos(t * w))
    if mode == "sinc":
        return Field.from_spectrum(grid, spec * propagator_symbols(grid, t)[1])
    sign = 1.0 if mode == "exp_plus" else -1.0
    re = Field.from_spectrum(grid, spec * np.cos(t * w))
    im = Field.from_spectrum(grid, spec * (sign * np.sin(t * w)))
    return re, im


# --------------------------------------------------------------------------
# Cutoffs


def _bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


@lru_cache(maxsize=1)
def _transition_spline(nodes: int = 4097) -> interpolate.CubicHermiteSpline:
    """Normalized primitive of the bump, tabulated with exact derivatives."""
    x = np.linspace(-1.0, 1.0, nodes)
    pieces = [integrate.quad(lambda s: math.exp(-1.0 / (1.0 - s * s)) if abs(s) < 1 else 0.0,
                             a, b, epsabs=1e-16, epsrel=1e-14)[0] for a, b in zip(x[:-1], x[1:])]
    cum = np.concatenate([[0.0], np.cumsum(pieces)])
    total = cum[-1]
    return interpolate.CubicHermiteSpline(x, cum / total, _bump(x) / total)


def smooth_step(x):
    """s(x): 0 for x <= -1, 1 for x >= 1, the normalized bump primitive between."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 1.0, 1.0, 0.0)
    mid = (x > -1.0) & (x < 1.0)
    if np.any(mid):
        out[mid] = np.clip(_transition_spline()(x[mid]), 0.0, 1.0)
    return out


def _step_slope(x):
    spline = _transition_spline()
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    mid = (x > -1.0) & (x < 1.0)
    out[mid] = spline.derivative()(x[mid])
    return out


@dataclass(frozen=True)
class CutoffProfile:
    """Smooth even cutoff equal to 1 on [-inner, inner] and 0 outside (-outer, outer)."""

    name: str
    inner: float
    outer: float

    def __post_init__(self):
        if not 0 < self.inner < self.outer:
            raise ValueError("need 0 < inner < outer")

    def _arg(self, x):
        y = np.abs(np.asarray(x, dtype=float))
        return 2.0 * (y - self.inner) / (self.outer - self.inner) - 1.0

    def __call__(self, x):
        val = 1.0 - smooth_step(self._arg(x))
        return val if np.ndim(val) else float(val)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        val = -_step_slope(self._arg(x)) * 2.0 / (self.outer - self.inner) * np.sign(x)
        return val if np.ndim(val) else float(val)


CUTOFFS = {"chi": (1.0, 2.0), "phi": (2.0, 4.0)}
_ALIASES = {"χ": "chi", "φ": "phi"}


def make_cutoff(name: str) -> CutoffProfile:
    """``chi`` switches off on [1, 2]; ``phi`` on [2, 4]."""
    key = _ALIASES.get(name, name)
    if key not in CUTOFFS:
        raise ValueError(f"unknown cutoff {name!r}")
    return CutoffProfile(key, *CUTOFFS[key])


# --------------------------------------------------------------------------
# Space-time transform


@dataclass(frozen=True)
class SpaceTimeSpectrum:
    """Full-layout space-time spectrum, continuum-normalized.

    ``values[k, ..., m]`` approximates the integral of u(t, x) exp(+i(t tau_k + x.xi_m))
    over the window and the box.
    """

    grid: Grid
    t0: float
    dt: float
    values: np.ndarray

    @property
    def nt(self) -> int:
        return self.values.shape[0]

    @property
    def tau(self) -> np.ndarray:
        k = np.fft.fftfreq(self.nt, 1.0 / self.nt)
        k[self.nt // 2] = self.nt // 2
        return TWO_PI * k / (self.nt * self.dt)

    def xi(self) -> list[np.ndarray]:
        return self.grid.wavenumbers(half=False)


def spacetime_transform(u: SpaceTimeField) -> SpaceTimeSpectrum:
    """Space-time Fourier transform with the e^{+i} forward convention.

    The transform does not window; callers apply any temporal cutoff first.
    """
    axes = _spacetime_axes(u)
    size = u.nt * u.grid.num_points
    raw = sfft.ifftn(u.samples, axes=axes) * size
    k = np.fft.fftfreq(u.nt, 1.0 / u.nt)
    k[u.nt // 2] = u.nt // 2
    tau = TWO_PI * k / (u.nt * u.dt)
    phase = np.exp(1j * tau * u.t0).reshape((u.nt,) + (1,) * (u.samples.ndim - 1))
    return SpaceTimeSpectrum(u.grid, u.t0, u.dt, raw * phase * (u.dt * u.grid.cell_volume))


def inverse_spacetime_transform(spec: SpaceTimeSpectrum) -> SpaceTimeField:
    """Inverse of :func:`spacetime_transform` (e^{-i} kernel, 1/(2 pi)^d weight)."""
    vals = spec.values
    phase = np.exp(-1j * spec.tau * spec.t0).reshape((spec.nt,) + (1,) * (vals.ndim - 1))
    axes = (0,) + tuple(vals.ndim + a for a in spec.grid.axes)
    out = sfft.fftn(vals * phase, axes=axes)
    out /= spec.nt * spec.dt * spec.grid.num_points * spec.grid.cell_volume
    return SpaceTimeField(spec.grid, spec.t0, spec.dt, out.real)


def spacetime_half_spectrum(u: SpaceTimeField) -> np.ndarray:
    """Unnormalized half-layout DFT over time and grid axes."""
    return sfft.rfftn(u.samples, axes=_spacetime_axes(u))


def spacetime_from_half(u: SpaceTimeField, spec: np.ndarray) -> SpaceTimeField:
    axes = _spacetime_axes(u)
    shape = (u.nt,) + u.grid.shape
    return u.like(sfft.irfftn(spec, s=shape, axes=axes))


def spacetime_symbols(u: SpaceTimeField) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """|tau|, |xi| and |xi_1| broadcast to the half-layout space-time spectrum shape."""
    return _spacetime_symbols(u.grid, u.nt, u.dt)


@lru_cache(maxsize=32)
def _spacetime_symbols(grid: Grid, nt: int, dt: float):
    k = np.fft.fftfreq(nt, 1.0 / nt)
    tau = np.abs(TWO_PI * k / (nt * dt)).reshape((nt,) + (1,) * grid.n)
    xi = grid.abs_xi[None]
    xi1 = grid.abs_xi1[None]
    for arr in (tau, xi, xi1):
        arr.flags.writeable = False
    return tau, xi, xi1


def _align(sym: np.ndarray, u: SpaceTimeField) -> np.ndarray:
    """Insert component axes so a (nt, grid...) symbol broadcasts against u's spectrum."""
    extra = len(u.component_shape)
    return sym.reshape(sym.shape[:1] + (1,) * extra + sym.shape[1:])


def modulation(u: SpaceTimeField) -> np.ndarray:
    """||tau| - |xi_1|| on the half-layout space-time spectrum."""
    tau, _, xi1 = spacetime_symbols(u)
    return np.abs(tau - xi1)


def modulation_multiplier(u: SpaceTimeField, profile: CutoffProfile, scale: float) -> SpaceTimeField:
    """Multiply the spectrum by profile(scale * <||tau| - |xi_1||>)."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    mult = profile(scale * bracket(modulation(u)))
    return spacetime_from_half(u, spacetime_half_spectrum(u) * _align(mult, u))


def modulation_split(u: SpaceTimeField, profile: CutoffProfile, scale: float) -> tuple[SpaceTimeField, SpaceTimeField]:
    """Low- and high-modulation parts; the second is the remainder, so they sum to ``u``."""
    low = modulation_multiplier(u, profile, scale)
    return low, u - low


def time_derivative(u: SpaceTimeField) -> SpaceTimeField:
    """Spectral d/dt of a field treated as periodic on its window."""
    k = np.fft.fftfreq(u.nt, 1.0 / u.nt)
    omega = TWO_PI * k / u.window_length
    omega[u.nt // 2] = 0.0
    spec = sfft.fft(u.samples, axis=0)
    spec *= (1j * omega).reshape((u.nt,) + (1,) * (u.samples.ndim - 1))
    return u.like(sfft.ifft(spec, axis=0).real)


def apply_box(u: SpaceTimeField) -> SpaceTimeField:
    """Spectral d_t^2 - d_{y1}^2 on the periodic window."""
    tau, _, xi1 = spacetime_symbols(u)
    symbol = xi1**2 - tau**2
    return spacetime_from_half(u, spacetime_half_spectrum(u) * _align(symbol, u))


def spectral_refine(f: Field, sizes: Sequence[int]) -> Field:
    """Trigonometric interpolation of ``f`` onto a finer grid of the same box."""
    fine = Grid(f.grid.n, tuple(sizes), f.grid.period)
    full = sfft.fftn(f.samples, axes=f.grid.axes)
    out = np.zeros(f.component_shape + fine.shape, dtype=complex)
    idx_src, idx_dst = [], []
    for s, S in zip(f.grid.sizes, fine.sizes):
        if S < s:
            raise ValueError("target grid must not be coarser")
        m = np.fft.fftfreq(s, 1.0 / s).astype(int)
        keep = np.abs(m) < s // 2
        idx_src.append(np.nonzero(keep)[0])
        idx_dst.append(np.mod(m[keep], S))
    ix_s = np.ix_(*idx_src)
    ix_d = np.ix_(*idx_dst)
    lead = (slice(None),) * f.rank
    out[lead + ix_d] = full[lead + ix_s]
    scale = fine.num_points / f.grid.num_points
    return Field(fine, sfft.ifftn(out, axes=fine.axes).real * scale)


# --------------------------------------------------------------------------
# Binary dumps


def dump_field(field: Field | SpaceTimeField, stem: str | Path) -> tuple[Path, Path]:
    """Write ``stem.bin`` (little-endian float64, row-major) and ``stem.json``."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    meta = field.grid.to_json()
    if isinstance(field, SpaceTimeField):
        meta.update({"t0": field.t0, "dt": field.dt, "nt": field.nt})
    if field.component_shape:
        meta["tensor_shape"] = list(field.component_shape)
    bin_path = stem.with_suffix(".bin")
    json_path = stem.with_suffix(".json")
    np.ascontiguousarray(field.samples, dtype="<f8").tofile(bin_path)
    json_path.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return bin_path, json_path


def load_field(stem: str | Path) -> Field | SpaceTimeField:
    stem = Path(stem)
    meta = json.loads(stem.with_suffix(".json").read_text())
    grid = Grid(meta["n"], tuple(meta["sizes"]), meta["period"])
    comp = tuple(meta.get("tensor_shape", ()))
    data = np.fromfile(stem.with_suffix(".bin"), dtype="<f8")
    if "nt" in meta:
        return SpaceTimeField(grid, meta["t0"], meta["dt"], data.reshape((meta["nt"],) + comp + grid.shape))
    data = data.reshape(comp + grid.shape)
    if comp == (grid.n, grid.n):
        return TensorField(grid, data)
    return Field(grid, data)
