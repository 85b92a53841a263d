"""Randomized ratio studies for the function-space inequalities.

Every case draws an ensemble of inputs at each resolution, evaluates the left
and right sides with the norms module and records LHS/RHS. An inequality
"passes" when all ratios are finite and the largest ratio does not grow by more
than 1.5 per doubling of the grid.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np

from .eulerian_oracle import FlowMap, SpectralEvaluator
from .fourier_core import (
    Field,
    Grid,
    SpaceTimeField,
    TWO_PI,
    gradient,
    half_wave_propagate,
    make_cutoff,
    modulation_split,
)
from .lagrangian_system import null_form_q0
from .norms import (
    NormSpec,
    complex_wave_sobolev_norm,
    composite_norm,
    sobolev_norm,
    sup_norm,
    time_sobolev_norm,
    wave_sobolev_norm,
)
from .sampling import mode_uniforms, sample_divergence_free, sample_random_field
from .wave_elliptic_solver import duhamel_lowmod, free_wave, invert_box_highmod

log = logging.getLogger(__name__)

LEMMA_IDS = (
    "QR1", "dQR_a", "dQR_b", "LD4_1", "LD4_2", "LD4_3", "LD4_4",
    "CQR_1", "CQR_2", "CQR_3", "CQR_4", "mF", "nE", "eQR", "eQR_control",
)
TREND_LIMIT = 1.5
RHS_FLOOR = 1e-14
WINDOW = 2.0  # space-time samples cover [-WINDOW, WINDOW)


class HypothesisError(ValueError):
    """Parameters outside the range where an inequality is claimed."""


@dataclass(frozen=True)
class LemmaCase:
    id: str
    s: float = 1.6
    theta: float = 0.75
    eps: float = 0.25
    n: int = 2
    members: int = 50
    seed: int = 0
    resolutions: tuple[int, ...] = (32, 64, 128)
    T: float = 0.25  # time window for the aggregate linear bound
    frac_s: float | None = None  # exponent for the coordinate-change bounds; defaults to s - 1
    map_amplitude: float = 0.2  # keeps the spectral det check within 1e-8 from 32^2 up

    def __post_init__(self):
        object.__setattr__(self, "resolutions", tuple(int(r) for r in self.resolutions))
        if self.id not in LEMMA_IDS:
            raise HypothesisError(f"unknown lemma case {self.id!r}")
        if self.n not in (2, 3):
            raise HypothesisError("n must be 2 or 3")
        if self.members < 1:
            raise HypothesisError("need at least one member")
        if not self.resolutions:
            raise HypothesisError("need at least one resolution")
        for r in self.resolutions:
            if r < 8 or r & (r - 1):
                raise HypothesisError(f"resolution {r} is not a power of two >= 8")
        needs_theta = {"QR1", "dQR_a", "dQR_b", "CQR_1", "CQR_2", "CQR_3", "CQR_4"}
        if self.id in needs_theta and not self.theta > 0.5:
            raise HypothesisError(f"{self.id} requires theta > 1/2, got {self.theta}")
        if self.id in {"mF", "nE"} and not 0.5 < self.theta < 1:
            raise HypothesisError(f"{self.id} requires theta in (1/2, 1), got {self.theta}")
        if self.id == "nE" and not 0 < self.eps <= 1 - self.theta + 1e-15:
            raise HypothesisError(f"nE requires eps in (0, 1 - theta], got {self.eps}")
        if self.id == "nE" and not 0 < self.T < 1:
            raise HypothesisError("nE requires 0 < T < 1")
        if self.id in {"dQR_a", "dQR_b", "eQR", "eQR_control"} and not self.s > (self.n + 1) / 2:
            raise HypothesisError(f"{self.id} requires s > (n+1)/2 = {(self.n + 1) / 2}, got {self.s}")
        if self.id.startswith("LD4"):
            fs = self.coordinate_exponent
            if not 0 < fs < 1:
                raise HypothesisError(f"{self.id} requires an exponent in (0, 1), got {fs}")

    @property
    def coordinate_exponent(self) -> float:
        if self.frac_s is not None:
            return float(self.frac_s)
        return float(min(max(self.s - 1.0, 0.05), 0.95))

    def with_resolutions(self, resolutions) -> "LemmaCase":
        d = asdict(self)
        d["resolutions"] = tuple(resolutions)
        return LemmaCase(**d)


@dataclass
class ResolutionStats:
    resolution: int
    max: float
    median: float
    p95: float
    used: int
    skipped: int


@dataclass
class RatioReport:
    lemma: str
    stats: list[ResolutionStats]
    trend: float
    verdict: str
    ratios: dict[int, list[float]] = field(default_factory=dict, repr=False)

    def csv_rows(self) -> list[dict]:
        return [
            {"lemma": self.lemma, "resolution": st.resolution, "max": st.max, "median": st.median, "p95": st.p95,
             "trend": self.trend, "verdict": self.verdict}
            for st in self.stats
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, ["lemma", "resolution", "max", "median", "p95", "trend", "verdict"])
        writer.writeheader()
        for row in self.csv_rows():
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "lemma": self.lemma,
            "trend": self.trend,
            "verdict": self.verdict,
            "resolutions": [asdict(st) for st in self.stats],
        }


def trend_factor(resolutions, maxima) -> float:
    """Growth of the maximum ratio per doubling, from a least-squares log-log slope."""
    r = np.asarray(resolutions, dtype=float)
    m = np.asarray(maxima, dtype=float)
    if r.size < 2:
        return 1.0
    if not np.all(np.isfinite(m)):
        return float("inf")
    if np.any(m <= 0):
        # exact zeros (null cancellation) carry no growth information
        if np.all(m <= 0):
            return 1.0
        return float("inf") if m[-1] > 0 and m[0] <= 0 else 1.0
    slope = np.polyfit(np.log2(r), np.log2(m), 1)[0]
    return float(2.0**slope)


def _verdict(trend: float, finite: bool) -> str:
    return "pass" if finite and trend <= TREND_LIMIT else "fail"


# --------------------------------------------------------------------------
# Ensemble inputs


def _member_seed(case: LemmaCase, member: int, slot: int = 0) -> int:
    return (case.seed * 1_000_003 + member * 101 + slot) & 0x7FFFFFFFFFFFFFFF


def _uniforms(seed: int, count: int) -> np.ndarray:
    """Resolution-independent scalars for one member."""
    return mode_uniforms(seed, 7919, [np.arange(count)])


def wave_packet(grid: Grid, center, width: float, carrier, phase: float = 0.0) -> Field:
    """Gaussian packet exp(-|y - c|^2 / (2 w^2)) cos(k . y + phase), periodized on the box."""
    coords = grid.coordinates()
    r2 = np.zeros(grid.shape)
    for y, c in zip(coords, center):
        d = (y - c + grid.period / 2) % grid.period - grid.period / 2
        r2 = r2 + d**2
    arg = sum(k * y for k, y in zip(carrier, coords)) + phase
    return Field(grid, np.exp(-r2 / (2 * width**2)) * np.cos(arg))


def sample_data(grid: Grid, seed: int, kind: str, decay: float = 2.0) -> Field:
    """One spatial input: a random-phase field, or a packet at the grid scale.

    Packets share their centre, carrier direction and phase across
    resolutions; only the width and carrier length follow the grid spacing,
    which is what probes growth under refinement.
    """
    if kind == "random":
        return sample_random_field(grid, decay, seed)
    u = _uniforms(seed, 2 * grid.n + 2)
    center = TWO_PI * u[: grid.n]
    h = grid.period / min(grid.sizes)
    direction = u[grid.n: 2 * grid.n] - 0.5
    direction = direction / (np.linalg.norm(direction) + 1e-12)
    kmax = min(grid.sizes) / 4
    carrier = np.round(direction * kmax * u[2 * grid.n])
    f = wave_packet(grid, center, 1.5 * h, carrier, TWO_PI * u[-1])
    return f * (1.0 / f.l2())


def member_kind(member: int) -> str:
    return "packet" if member % 2 else "random"


def time_grid(resolution: int, window: float = WINDOW) -> tuple[float, float, int]:
    """(t0, dt, nt) covering [-window, window) with one time sample per grid point."""
    nt = resolution
    return -window, 2 * window / nt, nt


def sample_spacetime_field(grid: Grid, nt: int, seed: int, kind: str, decay: float = 2.0,
                           window: float = WINDOW) -> SpaceTimeField:
    """chi(t) times a random superposition of modulated spatial fields.

    Temporal frequencies are spread up to the grid's largest |xi_1| so that
    both near-cone and far-from-cone content is present.
    """
    t0, dt, _ = -window, 2 * window / nt, nt
    times = t0 + dt * np.arange(nt)
    chi = make_cutoff("chi")(times)
    u = _uniforms(seed, 12)
    total = np.zeros((nt,) + grid.shape)
    top = min(grid.sizes) / 2
    for j in range(4):
        f = sample_data(grid, seed * 13 + j + 1, kind, decay)
        omega = top * u[3 * j] ** 2
        total += np.cos(omega * times + TWO_PI * u[3 * j + 1]).reshape((nt,) + (1,) * grid.n) * f.samples
    return SpaceTimeField(grid, t0, dt, total * chi.reshape((nt,) + (1,) * grid.n))


def sample_volume_preserving_map(grid: Grid, amplitude: float, seed: int, *, steps: int | None = None,
                                 band: int = 3) -> FlowMap:
    """Time-1 flow of a random steady divergence-free field (two fields in 3D, applied in turn)."""
    fields = [sample_divergence_free(grid, 2.0, seed, band=band, stream=k) * amplitude
              for k in range(1 if grid.n == 2 else 2)]
    y = np.stack(grid.coordinates()).reshape(grid.n, -1)
    if amplitude == 0:
        return FlowMap(grid, Field.zeros(grid, (grid.n,)), 1.0)
    x = _flow(fields, y, steps)
    return FlowMap(grid, Field(grid, (x - y).reshape((grid.n,) + grid.shape)), 1.0)


def _flow(fields: list[Field], points: np.ndarray, steps: int | None, sign: float = 1.0) -> np.ndarray:
    """Compose the time-1 flows of steady fields (in reverse order and time when sign < 0)."""
    x = points.copy()
    order = fields if sign > 0 else fields[::-1]
    for w in order:
        ev = SpectralEvaluator(w, tol=1e-12)  # the fields are band-limited; skip round-off modes
        speed = float(np.sqrt(np.sum(w.samples**2, axis=0)).max())
        k = steps or max(16, int(math.ceil(64 * speed)))
        dt = sign / k
        for _ in range(k):
            k1 = ev(x)
            k2 = ev(x + 0.5 * dt * k1)
            k3 = ev(x + 0.5 * dt * k2)
            k4 = ev(x + dt * k3)
            x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


# --------------------------------------------------------------------------
# Lemma evaluations: each returns (lhs, rhs) for one member at one resolution


def _spec(a, b=0.0, theta=0.0) -> NormSpec:
    return NormSpec(float(a), float(b), float(theta))


def _chi_samples(nt: int, dt: float, t0: float, scale: float = 1.0) -> np.ndarray:
    times = t0 + dt * np.arange(nt)
    return make_cutoff("chi")(times / scale)


def _windowed(f_t: np.ndarray, grid: Grid, nt: int, scale: float = 1.0) -> SpaceTimeField:
    t0, dt, _ = time_grid(nt)
    w = _chi_samples(nt, dt, t0, scale)
    return SpaceTimeField(grid, t0, dt, f_t * w.reshape((nt,) + (1,) * (f_t.ndim - 1)))


def _propagated(f: Field, nt: int, mode: str, rate: float = 1.0):
    t0, dt, _ = time_grid(nt)
    times = t0 + dt * np.arange(nt)
    if mode in ("cos", "sinc"):
        return np.stack([half_wave_propagate(f, rate * t, mode).samples for t in times])
    pairs = [half_wave_propagate(f, rate * t, mode) for t in times]
    return np.stack([p[0].samples for p in pairs]), np.stack([p[1].samples for p in pairs])


def _chi_norm(nt: int, theta: float, power: int = 0) -> float:
    t0, dt, _ = time_grid(nt)
    times = t0 + dt * np.arange(nt)
    return time_sobolev_norm(times**power * make_cutoff("chi")(times), dt, theta)


def _eval_QR1(case, grid, m):
    u = sample_spacetime_field(grid, grid.sizes[0], _member_seed(case, m), member_kind(m))
    a, b = case.s - 1, 1.0
    lhs = max(sobolev_norm(u.slice(j), a, b) for j in range(u.nt))
    return lhs, wave_sobolev_norm(u, _spec(a, b, case.theta))


def _eval_dQR_a(case, grid, m):
    u = sample_spacetime_field(grid, grid.sizes[0], _member_seed(case, m), member_kind(m))
    return sup_norm(u), wave_sobolev_norm(u, _spec(case.s - 1, 1, case.theta))


def _eval_dQR_b(case, grid, m):
    nt = grid.sizes[0]
    f = sample_spacetime_field(grid, nt, _member_seed(case, m, 0), member_kind(m))
    g = sample_spacetime_field(grid, nt, _member_seed(case, m, 1), member_kind(m))
    lhs = wave_sobolev_norm(f * g, _spec(case.s - 1))
    rhs = wave_sobolev_norm(f, _spec(case.s - 1)) * wave_sobolev_norm(g, _spec(case.s - 1, 1, case.theta))
    return lhs, rhs


def _lagrangian_pair(case, grid, m):
    """(u on the label grid, u_bar on the Euler grid, |dx/dy|_inf, |dy/dx|_inf)."""
    return _cached_pair(_member_seed(case, m), case.map_amplitude, grid)


@lru_cache(maxsize=256)
def _cached_pair(seed: int, amplitude: float, grid: Grid):
    # the four coordinate-change cases share members, so the flows are built once
    u = sample_random_field(grid, 2.0, seed, band=min(grid.sizes) // 4)
    fields = [sample_divergence_free(grid, 2.0, seed + 17, band=3, stream=k) * amplitude
              for k in range(1 if grid.n == 2 else 2)]
    pts = np.stack(grid.coordinates()).reshape(grid.n, -1)
    fwd = _flow(fields, pts, None, 1.0)
    back = _flow(fields, pts, None, -1.0)
    H = gradient(Field(grid, (fwd - pts).reshape((grid.n,) + grid.shape))).samples
    K = gradient(Field(grid, (back - pts).reshape((grid.n,) + grid.shape))).samples
    eye = np.eye(grid.n).reshape((grid.n, grid.n) + (1,) * grid.n)
    H = H + eye
    K = K + eye
    ubar = Field(grid, SpectralEvaluator(u)(back).reshape(grid.shape))
    return u, ubar, _op_sup(H), _op_sup(K)


def _op_sup(H: np.ndarray) -> float:
    n = H.shape[0]
    mats = np.moveaxis(H.reshape(n, n, -1), -1, 0)
    return float(np.linalg.norm(mats, ord=2, axis=(1, 2)).max())


def _eval_LD4_1(case, grid, m):
    u, ubar, _, _ = _lagrangian_pair(case, grid, m)
    return sobolev_norm(u), sobolev_norm(ubar)


def _eval_LD4_2(case, grid, m):
    u, ubar, Hs, _ = _lagrangian_pair(case, grid, m)
    s = case.coordinate_exponent
    return sobolev_norm(u, s), Hs ** (grid.n / 2 + s) * sobolev_norm(ubar, s)


def _eval_LD4_3(case, grid, m):
    u, ubar, _, Ks = _lagrangian_pair(case, grid, m)
    s = case.coordinate_exponent
    return sobolev_norm(ubar, s), Ks ** (grid.n / 2 + s) * sobolev_norm(u, s)


def _eval_LD4_4(case, grid, m):
    u, ubar, Hs, Ks = _lagrangian_pair(case, grid, m)
    r1 = sobolev_norm(ubar, 1) / ((1 + Ks) * sobolev_norm(u, 1))
    r2 = sobolev_norm(u, 1) / ((1 + Hs) * sobolev_norm(ubar, 1))
    return max(r1, r2), 1.0


def _eval_CQR_1(case, grid, m):
    f = sample_data(grid, _member_seed(case, m), member_kind(m))
    nt = grid.sizes[0]
    re, im = _propagated(f, nt, "exp_plus")
    lhs = complex_wave_sobolev_norm(_windowed(re, grid, nt), _windowed(im, grid, nt), _spec(case.s - 1, 1, case.theta))
    return lhs, _chi_norm(nt, case.theta) * sobolev_norm(f, case.s - 1, 1)


def _eval_CQR_2(case, grid, m):
    f = sample_data(grid, _member_seed(case, m), member_kind(m))
    nt = grid.sizes[0]
    u = _windowed(_propagated(f, nt, "cos"), grid, nt)
    return wave_sobolev_norm(u, _spec(case.s - 1, 1, case.theta)), _chi_norm(nt, case.theta) * sobolev_norm(f, case.s - 1, 1)


def _band_xi1(f: Field, m_cut: float) -> Field:
    spec = f.spectrum() * (f.grid.abs_xi1 < m_cut)
    return Field.from_spectrum(f.grid, spec)


def _eval_CQR_3(case, grid, m):
    u = _uniforms(_member_seed(case, m, 3), 2)
    r = 2 * u[0] - 1
    m_cut = 1.0 + u[1] * min(grid.sizes) / 4
    f = _band_xi1(sample_data(grid, _member_seed(case, m), member_kind(m)), m_cut)
    nt = grid.sizes[0]
    re, im = _propagated(f, nt, "exp_plus", r)
    lhs = complex_wave_sobolev_norm(_windowed(re, grid, nt), _windowed(im, grid, nt), _spec(case.s - 1, 1, case.theta))
    t0, dt, _ = time_grid(nt)
    chi_l2 = time_sobolev_norm(_chi_samples(nt, dt, t0), dt, 0.0)
    rhs = (m_cut**case.theta * chi_l2 + _chi_norm(nt, case.theta)) * sobolev_norm(f, case.s - 1, 1)
    return lhs, rhs


def _eval_CQR_4(case, grid, m):
    g = sample_data(grid, _member_seed(case, m), member_kind(m))
    nt = grid.sizes[0]
    u = _windowed(_propagated(g, nt, "sinc"), grid, nt)
    lhs = wave_sobolev_norm(u, _spec(case.s - 1, 1, case.theta))
    rhs = (_chi_norm(nt, case.theta) + _chi_norm(nt, case.theta, power=1)) * sobolev_norm(g, case.s - 1, 0)
    return lhs, rhs


def _eval_mF(case, grid, m):
    nt = grid.sizes[0]
    F = sample_spacetime_field(grid, nt, _member_seed(case, m), member_kind(m))
    _, F2 = modulation_split(F, make_cutoff("phi"), 1.0)
    u2 = invert_box_highmod(F2)
    lhs = composite_norm(u2, _spec(case.s - 1, 1, case.theta))
    return lhs, wave_sobolev_norm(F2, _spec(case.s - 1, 0, case.theta - 1))


def linear_solution(f: Field, g: Field, F: SpaceTimeField, T: float) -> SpaceTimeField:
    """u = chi(t) u0 + chi(t/T) u1 + u2 for data (f, g) and forcing F on the sample window."""
    nt, t0, dt = F.nt, F.t0, F.dt
    times = t0 + dt * np.arange(nt)
    u0, _ = free_wave(f, g, times)
    chi = make_cutoff("chi")
    F1, F2 = modulation_split(F, make_cutoff("phi"), math.sqrt(T))
    u1 = duhamel_lowmod(F1)
    u2 = invert_box_highmod(F2, math.sqrt(T))
    shape = (nt,) + (1,) * (u0.ndim - 1)
    total = u0 * chi(times).reshape(shape) + u1.samples * chi(times / T).reshape(shape) + u2.samples
    return F.like(total)


def _eval_nE(case, grid, m):
    nt = grid.sizes[0]
    kind = member_kind(m)
    f = sample_data(grid, _member_seed(case, m, 0), kind)
    g = sample_data(grid, _member_seed(case, m, 1), kind)
    F = sample_spacetime_field(grid, nt, _member_seed(case, m, 2), kind)
    u = linear_solution(f, g, F, case.T)
    lhs = composite_norm(u, _spec(case.s - 1, 1, case.theta))
    rhs = (sobolev_norm(f, case.s - 1, 1) + sobolev_norm(g, case.s - 1, 0)
           + case.T ** (case.eps / 2) * wave_sobolev_norm(F, _spec(case.s - 1, 0, case.theta + case.eps - 1)))
    return lhs, rhs


def free_wave_pair(f0: Field, f1: Field, nt: int) -> tuple[SpaceTimeField, SpaceTimeField]:
    """Samples of the free wave with data (f0, f1) and of its time derivative on the window."""
    t0, dt, _ = time_grid(nt)
    times = t0 + dt * np.arange(nt)
    u, ut = free_wave(f0, f1, times)
    return SpaceTimeField(f0.grid, t0, dt, u), SpaceTimeField(f0.grid, t0, dt, ut)


def null_form_stack(phi: tuple[SpaceTimeField, SpaceTimeField], psi: tuple[SpaceTimeField, SpaceTimeField]) -> SpaceTimeField:
    """Q0 evaluated slice by slice in physical space-time."""
    u, ut = phi
    v, vt = psi
    out = np.stack([
        null_form_q0((u.slice(j), ut.slice(j)), (v.slice(j), vt.slice(j))).samples for j in range(u.nt)
    ])
    return u.like(out)


def _null_data(case, grid, m):
    """Data pairs for phi and psi; packet members share their centre so the waves overlap."""
    kind = member_kind(m)
    base = _member_seed(case, m)
    if kind == "random":
        return [sample_data(grid, base + k, kind) for k in range(4)]
    u = _uniforms(base, 8)
    h = grid.period / min(grid.sizes)
    center = TWO_PI * u[: grid.n]
    kmax = min(grid.sizes) / 4
    out = []
    for k in range(4):
        carrier = np.zeros(grid.n)
        carrier[0] = np.round(kmax * u[2 + k])
        f = wave_packet(grid, center, 1.5 * h, carrier, TWO_PI * u[(k + 5) % 8])
        out.append(f * (1.0 / f.l2()))
    return out


def _data_norm(f0: Field, f1: Field, s: float) -> float:
    return sobolev_norm(f0, s - 1, 1) + sobolev_norm(f1, s - 1, 0)


def _bilinear(case, grid, m, control: bool):
    nt = grid.sizes[0]
    p0, p1, q0, q1 = _null_data(case, grid, m)
    phi = free_wave_pair(p0, p1, nt)
    psi = free_wave_pair(q0, q1, nt)
    if control:
        prod = phi[1] * psi[1]
    else:
        prod = null_form_stack(phi, psi)
    t0, dt, _ = time_grid(nt)
    prod = prod.scaled_in_time(_chi_samples(nt, dt, t0))
    lhs = wave_sobolev_norm(prod, _spec(case.s - 1))
    return lhs, _data_norm(p0, p1, case.s) * _data_norm(q0, q1, case.s)


EVALUATORS: dict[str, Callable] = {
    "QR1": _eval_QR1,
    "dQR_a": _eval_dQR_a,
    "dQR_b": _eval_dQR_b,
    "LD4_1": _eval_LD4_1,
    "LD4_2": _eval_LD4_2,
    "LD4_3": _eval_LD4_3,
    "LD4_4": _eval_LD4_4,
    "CQR_1": _eval_CQR_1,
    "CQR_2": _eval_CQR_2,
    "CQR_3": _eval_CQR_3,
    "CQR_4": _eval_CQR_4,
    "mF": _eval_mF,
    "nE": _eval_nE,
    "eQR": lambda c, g, m: _bilinear(c, g, m, False),
    "eQR_control": lambda c, g, m: _bilinear(c, g, m, True),
}


def _grid_for(case: LemmaCase, resolution: int) -> Grid:
    return Grid.square(case.n, resolution)


def member_ratios(case: LemmaCase, resolution: int) -> tuple[list[float], int]:
    """LHS/RHS for every member at one resolution, and how many were skipped."""
    grid = _grid_for(case, resolution)
    fn = EVALUATORS[case.id]
    ratios, skipped = [], 0
    for m in range(case.members):
        lhs, rhs = fn(case, grid, m)
        if not rhs > RHS_FLOOR:
            skipped += 1
            continue
        ratios.append(float(lhs / rhs))
    return ratios, skipped


def _stats(resolution: int, ratios: list[float], skipped: int) -> ResolutionStats:
    if not ratios:
        return ResolutionStats(resolution, float("nan"), float("nan"), float("nan"), 0, skipped)
    arr = np.asarray(ratios)
    return ResolutionStats(resolution, float(arr.max()), float(np.median(arr)), float(np.percentile(arr, 95)),
                           len(ratios), skipped)


def verify_inequality(case: LemmaCase) -> RatioReport:
    """Ratio statistics at every resolution of ``case`` plus the trend verdict."""
    stats, all_ratios = [], {}
    for r in case.resolutions:
        ratios, skipped = member_ratios(case, r)
        all_ratios[r] = ratios
        stats.append(_stats(r, ratios, skipped))
        log.info("%s at %d: max %.4g (%d used, %d skipped)", case.id, r, stats[-1].max, stats[-1].used, skipped)
    maxima = [st.max for st in stats]
    finite = all(np.all(np.isfinite(v)) and len(v) > 0 for v in all_ratios.values())
    trend = trend_factor(case.resolutions, maxima) if finite else float("inf")
    return RatioReport(case.id, stats, trend, _verdict(trend, finite), all_ratios)


def convergence_sweep(case: LemmaCase) -> tuple[list[RatioReport], float]:
    """One report per resolution with matched seeds, and the trend across them."""
    if len(case.resolutions) < 2:
        raise ValueError("a sweep needs at least two resolutions")
    reports = [verify_inequality(case.with_resolutions([r])) for r in case.resolutions]
    maxima = [rep.stats[0].max for rep in reports]
    trend = trend_factor(case.resolutions, maxima)
    finite = all(rep.stats[0].used > 0 and np.isfinite(rep.stats[0].max) for rep in reports)
    for rep in reports:
        rep.trend = trend
        rep.verdict = _verdict(trend, finite)
    return reports, trend


def null_witness(resolution: int, s: float = 1.6, n: int = 2) -> float:
    """LHS of the bilinear bound for two copies of the wave with data (cos y1, sin y1)."""
    grid = Grid.square(n, resolution)
    y1 = grid.coordinates()[0]
    f0, f1 = Field(grid, np.cos(y1)), Field(grid, np.sin(y1))
    phi = free_wave_pair(f0, f1, resolution)
    q = null_form_stack(phi, phi)
    return wave_sobolev_norm(q, _spec(s - 1))


def reports_to_csv(reports: Iterable[RatioReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, ["lemma", "resolution", "max", "median", "p95", "trend", "verdict"])
    writer.writeheader()
    for rep in reports:
        for row in rep.csv_rows():
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def reports_to_json(reports: Iterable[RatioReport]) -> str:
    return json.dumps([rep.to_json() for rep in reports], indent=2, sort_keys=True)
