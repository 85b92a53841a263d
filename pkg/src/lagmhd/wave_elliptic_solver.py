"""Solvers for the degenerate wave system box G = F(G) with G = H - I.

Two routes are provided: direct Stormer-Verlet time stepping coupled to the
pressure solve, and the Picard map built from the free propagator, a Duhamel
integral for low-modulation forcing and symbol division for the rest.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.fft as sfft

from .fourier_core import (
    ROUNDOFF_FLOOR,
    CutoffProfile,
    Field,
    SpaceTimeField,
    TensorField,
    bracket,
    gradient,
    make_cutoff,
    modulation,
    modulation_split,
    spacetime_from_half,
    spacetime_half_spectrum,
    spacetime_symbols,
    time_derivative,
    _align,
)
from .lagrangian_system import (
    DeformationState,
    NumericalError,
    initial_state,
    max_det_deviation,
    physical_pressure,
    wave_forcing,
    curl_defect,
)
from .norms import NormSpec, composite_norm, sobolev_norm

log = logging.getLogger(__name__)

DET_ABORT = 1e-3


@dataclass(frozen=True)
class PicardConfig:
    s: float = 1.6
    theta: float = 0.75
    eps: float = 0.25
    T: float | None = None
    nt: int = 64
    max_iters: int = 8
    contraction_tol: float = 1e-12
    pressure_tol: float = 1e-12

    def __post_init__(self):
        if not 0.5 < self.theta < 1:
            raise ValueError(f"theta must lie in (1/2, 1), got {self.theta}")
        if not 0 < self.eps <= 1 - self.theta + 1e-15:
            raise ValueError(f"eps must lie in (0, 1 - theta], got {self.eps}")
        if self.T is not None and not 0 < self.T < 1:
            raise ValueError(f"T must lie in (0, 1), got {self.T}")
        if self.nt < 4 or self.nt % 4:
            raise ValueError("nt must be a multiple of 4 so that t = 0 and t = T are samples")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")

    def check_regularity(self, n: int):
        if not self.s > (n + 1) / 2:
            raise ValueError(f"s must exceed (n+1)/2 = {(n + 1) / 2}, got {self.s}")

    def with_T(self, T: float) -> "PicardConfig":
        return PicardConfig(self.s, self.theta, self.eps, T, self.nt, self.max_iters,
                            self.contraction_tol, self.pressure_tol)


@dataclass(frozen=True)
class IterateRecord:
    iteration: int
    composite_norm: float
    diff_norm: float
    ratio: float  # diff_norm over the previous diff_norm; 0 for the first record


@dataclass
class ContractionReport:
    ratios: list[float]
    rate: float
    verdict: str
    used: int = 0


# --------------------------------------------------------------------------
# Direct time stepping


def second_derivative_y1(G: Field) -> Field:
    grid = G.grid
    k = grid.wavenumbers(True)[0]
    return Field.from_spectrum(grid, G.spectrum() * (-(k**2))) if G.rank == 0 else \
        type(G)(grid, sfft.irfftn(G.spectrum() * (-(k**2)), s=grid.shape, axes=grid.axes))


def max_stable_dt(grid) -> float:
    """Largest step allowed: the grid spacing along y1, capped by leapfrog stability."""
    h1 = grid.spacing[0]
    kmax = float(np.max(np.abs(grid.wavenumbers(True)[0])))
    return min(h1, 2.0 / kmax)


def step_wave(G: TensorField, Gt: TensorField, forcing: TensorField, dt: float,
              forcing_next: Callable[[TensorField, TensorField], TensorField] | TensorField | None = None):
    """One Stormer-Verlet step of G_tt - G_{y1 y1} = F.

    ``forcing`` is F at the current time. ``forcing_next`` gives F at the new
    time, either directly or as a callable of the new G and a predicted Gt;
    when omitted F is held fixed over the step.
    """
    limit = max_stable_dt(G.grid)
    if dt > limit:
        raise NumericalError(f"dt = {dt:.3e} exceeds the wave step limit {limit:.3e}", limit=limit)
    half = Gt + 0.5 * dt * (second_derivative_y1(G) + forcing)
    G_new = G + dt * half
    lap_new = second_derivative_y1(G_new)
    if forcing_next is None:
        F_new = forcing
    elif callable(forcing_next):
        predicted = half + 0.5 * dt * (lap_new + forcing)
        F_new = forcing_next(G_new, predicted)
        # one corrector pass keeps the velocity-dependent forcing second order
        corrected = half + 0.5 * dt * (lap_new + F_new)
        F_new = forcing_next(G_new, corrected)
    else:
        F_new = forcing_next
    Gt_new = half + 0.5 * dt * (lap_new + F_new)
    return G_new, Gt_new


def _identity(grid) -> np.ndarray:
    return np.eye(grid.n).reshape((grid.n, grid.n) + (1,) * grid.n)


def coupled_forcing(G: TensorField, Gt: TensorField, pressure_tol: float = 1e-12) -> tuple[TensorField, Field]:
    """Pressure force for the state (H = I + G, Ht = Gt); returns (F, p)."""
    grid = G.grid
    H = TensorField(grid, G.samples + _identity(grid))
    # det H is monitored by the caller, so the inverse skips its own check
    p = physical_pressure(H, Gt, pressure_tol, det_tol=None)
    return wave_forcing(H, p, det_tol=None), p


def run_coupled(v0: Field, T_end: float, dt: float, *, pressure_tol: float = 1e-12,
                record_every: int = 1) -> list[DeformationState]:
    """Time-step the coupled wave-pressure system from H = I, Ht = grad v0.

    det H and the curl defect are checked every step; det drift beyond 1e-3
    aborts with a NumericalError.
    """
    grid = v0.grid
    grad = gradient(v0).samples
    if float(np.max(np.abs(grad))) > 0.5:
        raise ValueError("sup |grad v0| exceeds 0.5; outside the small-data regime")
    div = np.trace(grad, axis1=0, axis2=1)
    if float(np.max(np.abs(div))) > 1e-8 * max(1.0, float(np.max(np.abs(grad)))):
        raise ValueError("v0 is not divergence-free")
    steps = int(round(T_end / dt))
    if steps < 0 or abs(steps * dt - T_end) > 1e-9 * max(1.0, T_end):
        raise ValueError("T_end must be a multiple of dt")
    state = initial_state(v0, pressure_tol)
    G = TensorField(grid, state.H.samples - _identity(grid))
    Gt = state.Ht
    F, _ = coupled_forcing(G, Gt, pressure_tol)
    out = [state]
    last_q = state.q

    def forcing_at(Gn, Gtn):
        nonlocal last_q
        Fn, last_q = coupled_forcing(Gn, Gtn, pressure_tol)
        return Fn

    for k in range(1, steps + 1):
        G, Gt = step_wave(G, Gt, F, dt, forcing_at)
        F = forcing_at(G, Gt)
        H = TensorField(grid, G.samples + _identity(grid))
        dev = max_det_deviation(H)
        if dev > DET_ABORT:
            raise NumericalError(f"det H drifted by {dev:.3e} at t = {k * dt:.4g}", max_det_deviation=dev,
                                 t=k * dt, curl_defect=curl_defect(H))
        if k % record_every == 0 or k == steps:
            out.append(DeformationState(grid, H, Gt, last_q, k * dt))
    return out


# --------------------------------------------------------------------------
# Linear pieces of the Picard map


def _uniform_times(times) -> tuple[float, float, int]:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise ValueError("need a one-dimensional time grid")
    dt = float(times[1] - times[0])
    if dt <= 0 or np.max(np.abs(np.diff(times) - dt)) > 1e-9 * max(1.0, abs(dt)):
        raise ValueError("time grid must be uniform and increasing")
    return float(times[0]), dt, times.size


def free_wave(f: Field, g: Field, times) -> tuple[np.ndarray, np.ndarray]:
    """Samples of u0 = cos(tD) f + D^{-1} sin(tD) g and of d_t u0 at ``times``."""
    grid = f.grid
    times = np.asarray(times, dtype=float)
    w = grid.abs_xi1
    fs, gs = f.spectrum(), g.spectrum()
    # fs gets multiplied by |xi_1| below; drop its round-off first
    fs = np.where(np.abs(fs) > ROUNDOFF_FLOOR * np.abs(fs).max(), fs, 0.0)
    shape = (times.size,) + (1,) * f.rank + w.shape
    tw = times.reshape(-1, *([1] * (len(shape) - 1))) * w.reshape((1,) * (1 + f.rank) + w.shape)
    c, s = np.cos(tw), np.sin(tw)
    wb = np.broadcast_to(w.reshape((1,) * (1 + f.rank) + w.shape), shape)
    tb = np.broadcast_to(times.reshape(-1, *([1] * (len(shape) - 1))), shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        sinc = np.where(wb > 0, s / np.where(wb > 0, wb, 1.0), tb)
    u = c * fs[None] + sinc * gs[None]
    ut = -wb * s * fs[None] + c * gs[None]
    axes = tuple(u.ndim + a for a in grid.axes)
    return (sfft.irfftn(u, s=grid.shape, axes=axes), sfft.irfftn(ut, s=grid.shape, axes=axes))


def _window(profile: CutoffProfile, times, scale: float) -> tuple[np.ndarray, np.ndarray]:
    times = np.asarray(times, dtype=float)
    return profile(times / scale), profile.derivative(times / scale) / scale


def homogeneous_part(f: Field, g: Field, window: CutoffProfile, times, *, time_scale: float = 1.0,
                     with_derivative: bool = False):
    """chi(t) u0 sampled at ``times``, with u0 the free wave of data (f, g).

    ``time_scale`` stretches the window to chi(t / time_scale). With
    ``with_derivative`` the time derivative is returned as a second field.
    """
    if f.grid != g.grid or f.component_shape != g.component_shape:
        raise ValueError("f and g must live on one grid with one shape")
    t0, dt, nt = _uniform_times(times)
    w, wd = _window(window, times, time_scale)
    if np.any(w[[0, -1]] > 0) and nt > 1:
        log.debug("window does not vanish at the ends of the time grid")
    u, ut = free_wave(f, g, times)
    bshape = (nt,) + (1,) * (u.ndim - 1)
    U = SpaceTimeField(f.grid, t0, dt, u * w.reshape(bshape))
    if not with_derivative:
        return U
    Ut = SpaceTimeField(f.grid, t0, dt, ut * w.reshape(bshape) + u * wd.reshape(bshape))
    return U, Ut


def _cumulative_from_zero(vals: np.ndarray, dt: float, j0: int) -> np.ndarray:
    """Trapezoid integral from t_{j0} = 0 to each t_j along axis 0 (negative for j < j0)."""
    out = np.zeros_like(vals)
    if j0 + 1 < vals.shape[0]:
        inc = 0.5 * dt * (vals[j0 + 1:] + vals[j0:-1])
        out[j0 + 1:] = np.cumsum(inc, axis=0)
    if j0 > 0:
        inc = 0.5 * dt * (vals[:j0] + vals[1:j0 + 1])
        out[:j0] = -np.cumsum(inc[::-1], axis=0)[::-1]
    return out


def duhamel_lowmod(F1: SpaceTimeField, with_derivative: bool = False):
    """u1(t) = int_0^t D^{-1} sin((t - s) D) F1(s) ds by the composite trapezoid rule.

    The rule is applied pair by pair in the original variables; expanding
    sin((t - s) w) = sin(tw) cos(sw) - cos(tw) sin(sw) turns each sum into a
    running sum, which is exactly the same quadrature at linear cost.
    """
    grid = F1.grid
    j0 = F1.index_of(0.0)
    times = F1.times
    spec = sfft.rfftn(F1.samples, axes=tuple(F1.samples.ndim + a for a in grid.axes))
    w = grid.abs_xi1
    bshape = (F1.nt,) + (1,) * (spec.ndim - 1)
    tw = times.reshape(bshape) * w
    c, s = np.cos(tw), np.sin(tw)
    A = _cumulative_from_zero(c * spec, F1.dt, j0)
    B = _cumulative_from_zero(s * spec, F1.dt, j0)
    zero = (w == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(zero, 0.0, (s * A - c * B) / np.where(zero, 1.0, w))
    if np.any(zero):
        # at xi_1 = 0 the kernel is (t - s)
        I0 = _cumulative_from_zero(spec, F1.dt, j0)
        I1 = _cumulative_from_zero(times.reshape(bshape) * spec, F1.dt, j0)
        u = np.where(zero, times.reshape(bshape) * I0 - I1, u)
    axes = tuple(spec.ndim + a for a in grid.axes)
    U = F1.like(sfft.irfftn(u, s=grid.shape, axes=axes))
    if not with_derivative:
        return U
    ut = c * A + s * B
    return U, F1.like(sfft.irfftn(ut, s=grid.shape, axes=axes))


CONE_TOL = 1e-12


def invert_box_highmod(F2: SpaceTimeField, scale: float = 1.0, with_derivative: bool = False):
    """Solve box u2 = F2 by dividing the space-time spectrum by xi_1^2 - tau^2.

    F2 must carry no energy where scale * <||tau| - |xi_1||> <= 2.
    """
    spec = spacetime_half_spectrum(F2)
    tau, _, xi1 = spacetime_symbols(F2)
    near = _align(scale * bracket(modulation(F2)) <= 2.0, F2)
    energy = spec.real**2 + spec.imag**2
    total = float(energy.sum())
    if total == 0.0:
        zero = F2.like(np.zeros_like(F2.samples))
        return (zero, zero) if with_derivative else zero
    frac = float(np.sum(energy * near)) / total
    if frac > CONE_TOL:
        raise ValueError(f"forcing has {frac:.3e} of its energy next to the cone; the splitting is broken")
    symbol = _align(xi1**2 - tau**2, F2)
    safe = np.where(near | (symbol == 0), 1.0, symbol)
    u_spec = np.where(near, 0.0, spec / safe)
    U = spacetime_from_half(F2, u_spec)
    if not with_derivative:
        return U
    return U, time_derivative(U)


# --------------------------------------------------------------------------
# Picard map


@dataclass
class PicardIterate:
    """G and d_t G sampled on the window [-2T, 2T]."""

    G: SpaceTimeField
    Gt: SpaceTimeField

    def __sub__(self, other: "PicardIterate") -> "PicardIterate":
        return PicardIterate(self.G - other.G, self.Gt - other.Gt)


def picard_times(T: float, nt: int) -> np.ndarray:
    dt = 4.0 * T / nt
    return -2.0 * T + dt * np.arange(nt)


def zero_iterate(grid, T: float, nt: int) -> PicardIterate:
    dt = 4.0 * T / nt
    z = np.zeros((nt, grid.n, grid.n) + grid.shape)
    st = SpaceTimeField(grid, -2.0 * T, dt, z)
    return PicardIterate(st, st)


def forcing_stack(it: PicardIterate, pressure_tol: float = 1e-12) -> SpaceTimeField:
    """Pressure forcing evaluated slice by slice from (G, Gt)."""
    grid = it.G.grid
    out = np.empty_like(it.G.samples)
    for j in range(it.G.nt):
        G = TensorField(grid, it.G.samples[j], check=False)
        Gt = TensorField(grid, it.Gt.samples[j], check=False)
        if not np.any(G.samples) and not np.any(Gt.samples):
            out[j] = 0.0
            continue
        out[j] = coupled_forcing(G, Gt, pressure_tol)[0].samples
    return it.G.like(out)


def picard_map(G: PicardIterate, cfg: PicardConfig, v0: Field) -> PicardIterate:
    """M G = chi(t) u0 + chi(t/T) u1 + u2 - (free wave matching u2 at t = 0).

    u0 carries the data (0, grad v0); u1 is the Duhamel integral of the
    low-modulation part of chi(t/T) F(G) and u2 inverts the box operator on the
    high-modulation part. The last term restores the initial data, since the
    periodic u2 does not vanish at t = 0 by itself.
    """
    if cfg.T is None:
        raise ValueError("PicardConfig.T must be set before calling picard_map")
    T = cfg.T
    grid = v0.grid
    times = picard_times(T, cfg.nt)
    if G.G.nt != cfg.nt or abs(G.G.dt - 4.0 * T / cfg.nt) > 1e-14 or G.G.grid != grid:
        raise ValueError("iterate does not live on the Picard window")
    chi = make_cutoff("chi")
    phi = make_cutoff("phi")
    g0 = TensorField(grid, gradient(v0).samples)
    zero = TensorField(grid, np.zeros_like(g0.samples))
    U0, U0t = homogeneous_part(zero, g0, chi, times, with_derivative=True)

    F = forcing_stack(G, cfg.pressure_tol)
    wT, wTd = _window(chi, times, T)
    Fw = F.scaled_in_time(wT)
    F1, F2 = modulation_split(Fw, phi, math.sqrt(T))
    u1, u1t = duhamel_lowmod(F1, with_derivative=True)
    u2, u2t = invert_box_highmod(F2, math.sqrt(T), with_derivative=True)
    j0 = u2.index_of(0.0)
    c0 = TensorField(grid, u2.samples[j0], check=False)
    c1 = TensorField(grid, u2t.samples[j0], check=False)
    C, Ct = homogeneous_part(c0, c1, chi, times, with_derivative=True)

    MG = U0 + u1.scaled_in_time(wT) + u2 - C
    MGt = U0t + u1t.scaled_in_time(wT) + u1.scaled_in_time(wTd) + u2t - Ct
    return PicardIterate(MG, MGt)


def iterate_norm(it: PicardIterate, cfg: PicardConfig) -> float:
    """Composite norm of chi(t/T) G with d_t taken from the companion field."""
    chi = make_cutoff("chi")
    w, wd = _window(chi, it.G.times, cfg.T)
    G = it.G.scaled_in_time(w)
    Gt = it.Gt.scaled_in_time(w) + it.G.scaled_in_time(wd)
    return composite_norm(G, NormSpec(cfg.s - 1, 1, cfg.theta), Gt)


def contraction_diagnostics(records, floor: float = 1e-13) -> ContractionReport:
    """Per-step ratios, geometric rate fitted to the difference norms, and a verdict.

    Differences that have reached round-off (``floor`` relative to the largest
    composite norm) are excluded from the fit: the iteration has converged.
    """
    records = list(records)
    if len(records) < 2:
        raise ValueError("need at least two records")
    diffs = np.array([r.diff_norm for r in records], dtype=float)
    scale = max([r.composite_norm for r in records] + [float(np.nanmax(diffs)) if diffs.size else 0.0])
    if not np.all(np.isfinite(diffs)):
        return ContractionReport([float("nan")], float("inf"), "diverging", len(records))
    usable = len(diffs)
    for k, d in enumerate(diffs):
        if d <= floor * scale:
            usable = k + 1
            break
    d = diffs[:usable]
    ratios = [float(d[k] / d[k - 1]) if d[k - 1] > 0 else 0.0 for k in range(1, len(d))]
    if len(d) < 2:
        return ContractionReport(ratios, 0.0, "contracting", usable)
    positive = d > 0
    if positive.sum() < 2:
        return ContractionReport(ratios, 0.0, "contracting", usable)
    idx = np.arange(len(d))[positive]
    slope = np.polyfit(idx, np.log(d[positive]), 1)[0]
    rate = float(np.exp(slope))
    converged = usable < len(diffs) or d[-1] <= floor * scale
    if rate > 1.0 and not converged:
        verdict = "diverging"
    elif rate < 0.9 or converged:
        verdict = "contracting"
    else:
        verdict = "stalled"
    return ContractionReport(ratios, rate, verdict, usable)


def time_window_from_scaling(M: float, C: float, n: int, eps: float, lo: float = 1e-3, hi: float = 0.5) -> float:
    """T = (M / (1 + (C+1)^{3n+2} M^{3n+2}))^{2/eps}, clamped to [lo, hi]."""
    p = 3 * n + 2
    with np.errstate(over="ignore"):
        base = M / (1.0 + (C + 1.0) ** p * M**p)
    T = base ** (2.0 / eps) if base > 0 else 0.0
    return float(min(max(T, lo), hi))


def measured_linear_constant(v0: Field, cfg: PicardConfig, T: float = 0.25) -> float:
    """Ratio |chi u0| / (||f|| + ||g||) for the data (0, grad v0) on [-2, 2]."""
    grid = v0.grid
    nt = max(cfg.nt, 64)
    times = -2.0 + 4.0 / nt * np.arange(nt)
    g0 = TensorField(grid, gradient(v0).samples)
    zero = TensorField(grid, np.zeros_like(g0.samples))
    U, Ut = homogeneous_part(zero, g0, make_cutoff("chi"), times, with_derivative=True)
    lhs = composite_norm(U, NormSpec(cfg.s - 1, 1, cfg.theta), Ut)
    rhs = sobolev_norm(g0, cfg.s - 1, 0)
    return lhs / rhs if rhs > 0 else 0.0


@dataclass
class PicardRun:
    config: PicardConfig
    iterates: list[PicardIterate]
    records: list[IterateRecord]
    report: ContractionReport
    error: str | None = None
    extras: dict = field(default_factory=dict)

    @property
    def fixed_point(self) -> PicardIterate:
        return self.iterates[-1]


def run_picard(v0: Field, cfg: PicardConfig, keep_iterates: bool = False) -> PicardRun:
    """Iterate the Picard map from G = 0 and diagnose contraction.

    Solver failures inside the map end the iteration and are reported as a
    diverging run rather than raised.
    """
    grid = v0.grid
    cfg.check_regularity(grid.n)
    extras = {}
    if cfg.T is None:
        M = sobolev_norm(v0, cfg.s, 0)
        C = measured_linear_constant(v0, cfg)
        T = time_window_from_scaling(M, C, grid.n, cfg.eps)
        extras.update({"M": M, "C": C})
        cfg = cfg.with_T(T)
        log.info("time window T = %.4g from M = %.4g, C = %.4g", T, M, C)
    current = zero_iterate(grid, cfg.T, cfg.nt)
    iterates = [current]
    records: list[IterateRecord] = []
    error = None
    prev_diff = None
    for k in range(1, cfg.max_iters + 1):
        try:
            nxt = picard_map(current, cfg, v0)
            size = iterate_norm(nxt, cfg)
            diff = iterate_norm(nxt - current, cfg)
        except (NumericalError, ValueError, FloatingPointError) as exc:
            error = f"iteration {k}: {exc}"
            log.warning("Picard iteration stopped: %s", error)
            records.append(IterateRecord(k, float("nan"), float("inf"), float("inf")))
            break
        if not (np.isfinite(size) and np.isfinite(diff)):
            error = f"iteration {k}: non-finite iterate"
            records.append(IterateRecord(k, float("nan"), float("inf"), float("inf")))
            break
        ratio = diff / prev_diff if prev_diff else 0.0
        records.append(IterateRecord(k, size, diff, ratio))
        prev_diff = diff
        current = nxt
        if keep_iterates:
            iterates.append(current)
        else:
            iterates = [current]
        if diff <= cfg.contraction_tol * max(size, 1e-300):
            break
    if len(records) >= 2:
        report = contraction_diagnostics(records)
    else:
        verdict = "diverging" if error else "contracting"
        report = ContractionReport([], float("inf") if error else 0.0, verdict, len(records))
    if error:
        report.verdict = "diverging"
    return PicardRun(cfg, iterates, records, report, error, extras)


def compare_with_time_stepping(run: PicardRun, v0: Field) -> float:
    """Relative L2 difference of G on [0, T] between the Picard fixed point and run_coupled."""
    cfg = run.config
    it = run.fixed_point
    j0 = it.G.index_of(0.0)
    jT = it.G.index_of(cfg.T)
    states = run_coupled(v0, cfg.T, it.G.dt, pressure_tol=cfg.pressure_tol)
    ident = _identity(v0.grid)
    ref = np.stack([s.H.samples - ident for s in states])
    got = it.G.samples[j0:jT + 1]
    return float(np.linalg.norm(got - ref) / np.linalg.norm(ref))
