"""Algebra of the Lagrangian MHD system with background field b0 = e1.

The unknowns are the deformation gradient H = dx/dy, its time derivative and
the pressure q, all in label coordinates y. A general constant b0 reduces to
this case by rotating y so that b0 points along y1 and rescaling time by |b0|.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .fourier_core import ROUNDOFF_FLOOR, Field, Grid, TensorField, gradient, spectral_derivative

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """A solver left its region of validity; carries diagnostics in ``details``."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


@dataclass(frozen=True)
class DeformationState:
    grid: Grid
    H: TensorField
    Ht: TensorField
    q: Field
    t: float

    def __post_init__(self):
        for f in (self.H, self.Ht, self.q):
            if f.grid != self.grid:
                raise ValueError("state components must share the grid")


@lru_cache(maxsize=4)
def levi_civita(n: int) -> np.ndarray:
    eps = np.zeros((n,) * n)
    for perm in itertools.permutations(range(n)):
        inversions = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        eps[perm] = -1.0 if inversions % 2 else 1.0
    eps.flags.writeable = False
    return eps


def adjugate(H: np.ndarray) -> np.ndarray:
    """Pointwise adjugate via Levi-Civita contractions; ``H @ adj(H) = det(H) I``.

    ``H`` has shape (n, n, ...grid).
    """
    n = H.shape[0]
    eps = levi_civita(n)
    if n == 2:
        return np.einsum("ij,ab,jb...->ai...", eps, eps, H)
    if n == 3:
        return 0.5 * np.einsum("ijk,abc,jb...,kc...->ai...", eps, eps, H, H, optimize=True)
    raise ValueError("only n = 2 or 3 is supported")


def determinant(H: np.ndarray) -> np.ndarray:
    n = H.shape[0]
    if n == 2:
        return H[0, 0] * H[1, 1] - H[0, 1] * H[1, 0]
    if n == 3:
        return np.einsum("ijk,i...,j...,k...->...", levi_civita(3), H[0], H[1], H[2], optimize=True)
    raise ValueError("only n = 2 or 3 is supported")


DET_TOL = 1e-6


def cofactor_inverse(H: TensorField, det_tol: float | None = DET_TOL) -> TensorField:
    """Inverse of a unimodular matrix field from its adjugate.

    The adjugate equals the inverse exactly when det H = 1; deviations beyond
    ``det_tol`` raise. ``det_tol=None`` skips the check and returns the adjugate.
    """
    if det_tol is not None:
        dev = float(np.max(np.abs(determinant(H.samples) - 1.0)))
        if dev > det_tol:
            raise NumericalError(f"det H deviates from 1 by {dev:.3e}", max_det_deviation=dev)
    return TensorField(H.grid, adjugate(H.samples))


def null_form_q0(f: tuple[Field, Field], g: tuple[Field, Field]) -> Field:
    """Q0(f, g) = d_t f d_t g - d_1 f d_1 g from (value, d_t value) pairs."""
    f0, f1 = f
    g0, g1 = g
    grid = f0.grid
    if any(x.grid != grid for x in (f1, g0, g1)):
        raise ValueError("grid mismatch")
    df = spectral_derivative(f0, 0, floor=ROUNDOFF_FLOOR).samples
    dg = spectral_derivative(g0, 0, floor=ROUNDOFF_FLOOR).samples
    return Field(grid, f1.samples * g1.samples - df * dg)


def _matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.einsum("ij...,jk...->ik...", A, B)


def pressure_rhs(state: DeformationState, return_mean: bool = False, det_tol: float | None = DET_TOL):
    """Right-hand side of the pressure equation in label coordinates.

    With M = H^{-1}, P = Ht M and B = (d_1 H) M, the contraction is
    tr(P^2) - tr(B^2), which for H = I is tr((grad v)^2) - tr((grad b)^2).
    The mean is removed; ``return_mean`` also returns the removed value.
    """
    M = cofactor_inverse(state.H, det_tol).samples
    P = _matmul(state.Ht.samples, M)
    B = _matmul(spectral_derivative(state.H, 0).samples, M)
    rhs = np.einsum("ij...,ji...->...", P, P) - np.einsum("ij...,ji...->...", B, B)
    mean = float(rhs.mean())
    log.debug("pressure rhs mean removed: %.3e", mean)
    out = Field(state.grid, rhs - mean)
    return (out, mean) if return_mean else out


def _eff_wavenumbers(grid: Grid) -> list[np.ndarray]:
    return [np.where(nyq, 0.0, k) for k, nyq in zip(grid.wavenumbers(True), grid.nyquist_masks(True))]


def _grad(q: np.ndarray, grid: Grid, ks) -> np.ndarray:
    spec = sfft.rfftn(q, axes=grid.axes)
    return np.stack([sfft.irfftn(spec * (1j * k), s=grid.shape, axes=grid.axes) for k in ks])


def _div(w: np.ndarray, grid: Grid, ks) -> np.ndarray:
    spec = sum(sfft.rfftn(w[a], axes=grid.axes) * (1j * k) for a, k in enumerate(ks))
    return sfft.irfftn(spec, s=grid.shape, axes=grid.axes)


class _PressureOperator:
    """q -> d_a(A^{ab} d_b q) with spectral derivatives, plus its flat preconditioner."""

    def __init__(self, H: TensorField, det_tol: float | None = DET_TOL):
        self.grid = H.grid
        M = cofactor_inverse(H, det_tol).samples
        self.A = np.einsum("ai...,bi...->ab...", M, M)
        self.ks = _eff_wavenumbers(self.grid)
        k2 = sum(k**2 for k in self.ks) * np.ones(self.grid.spectral_shape())
        self.null = k2 == 0
        self.inv_k2 = np.where(self.null, 0.0, 1.0 / np.where(self.null, 1.0, k2))

    def min_eigenvalue(self) -> float:
        n = self.grid.n
        mats = np.moveaxis(self.A.reshape(n, n, -1), -1, 0)
        return float(np.linalg.eigvalsh(mats).min())

    def apply(self, q: np.ndarray) -> np.ndarray:
        g = _grad(q, self.grid, self.ks)
        flux = np.einsum("ab...,b...->a...", self.A, g)
        return _div(flux, self.grid, self.ks)

    def project(self, r: np.ndarray) -> np.ndarray:
        """Remove the modes the operator cannot see (mean and all-Nyquist corners)."""
        spec = sfft.rfftn(r, axes=self.grid.axes)
        spec[self.null] = 0.0
        return sfft.irfftn(spec, s=self.grid.shape, axes=self.grid.axes)

    def precondition(self, r: np.ndarray) -> np.ndarray:
        """Inverse of the flat operator -Laplacian on the visible modes."""
        spec = sfft.rfftn(r, axes=self.grid.axes) * self.inv_k2
        return sfft.irfftn(spec, s=self.grid.shape, axes=self.grid.axes)


MIN_ELLIPTICITY = 0.1
MEAN_TOL = 1e-12


def solve_pressure(H: TensorField, rhs: Field, tol: float = 1e-10, max_iter: int = 500,
                   det_tol: float | None = DET_TOL) -> Field:
    """Solve d_a(A^{ab} d_b q) = rhs with A = H^{-1} H^{-T} by preconditioned CG.

    Returns the mean-zero solution. The relative L2 residual is checked
    against ``tol`` on exit.
    """
    grid = H.grid
    if rhs.grid != grid:
        raise ValueError("grid mismatch")
    scale = max(1.0, float(np.sqrt(np.mean(rhs.samples**2))))
    mean = float(rhs.samples.mean())
    if abs(mean) > MEAN_TOL * scale:
        raise ValueError(f"pressure right-hand side has mean {mean:.3e}; the periodic problem needs mean zero")
    op = _PressureOperator(H, det_tol)
    lam = op.min_eigenvalue()
    if lam <= MIN_ELLIPTICITY:
        raise NumericalError(f"pressure operator lost ellipticity (min eigenvalue {lam:.3e})", min_eigenvalue=lam)

    b = -op.project(rhs.samples)  # solve (-L) q = -rhs, -L is symmetric positive
    bnorm = float(np.sqrt(np.sum(b**2)))
    if bnorm == 0.0:
        return Field.zeros(grid)
    x = np.zeros_like(b)
    used = 0
    rel = 1.0
    # restart from the true residual if recurrence drift hides an unmet tolerance
    for _restart in range(4):
        r = b + op.apply(x)
        rel = float(np.sqrt(np.sum(r**2))) / bnorm
        if rel <= tol:
            break
        z = op.precondition(r)
        p = z.copy()
        rz = float(np.sum(r * z))
        while used < max_iter:
            used += 1
            Ap = -op.apply(p)
            alpha = rz / float(np.sum(p * Ap))
            x += alpha * p
            r -= alpha * Ap
            if float(np.sqrt(np.sum(r**2))) / bnorm <= tol:
                break
            z = op.precondition(r)
            rz_new = float(np.sum(r * z))
            p = z + (rz_new / rz) * p
            rz = rz_new
        if used >= max_iter:
            break
    rel = float(np.sqrt(np.sum((b + op.apply(x)) ** 2))) / bnorm
    if rel > tol:
        raise NumericalError(f"pressure CG stopped after {used} iterations with residual {rel:.3e} > {tol:.1e}",
                             residual=rel, iterations=used)
    x -= x.mean()
    log.debug("pressure CG: %d iterations, residual %.2e", used, rel)
    return Field(grid, x)


def wave_forcing(H: TensorField, q: Field, det_tol: float | None = DET_TOL) -> TensorField:
    """F^{ia} = -d_a((H^{-1})^{bi} d_b q), the pressure force on the wave system."""
    if q.grid != H.grid:
        raise ValueError("grid mismatch")
    M = cofactor_inverse(H, det_tol).samples
    dq = gradient(q).samples  # dq[b] = d_b q
    grad_x = np.einsum("bi...,b...->i...", M, dq)  # d q / d x^i
    g = gradient(Field(H.grid, grad_x)).samples  # g[i, a] = d_a grad_x[i]
    return TensorField(H.grid, -g)


def curl_defect(H: TensorField) -> float:
    """L2 size of d_b H^{ia} - d_a H^{ib}, zero when H is a Jacobian."""
    g = gradient(H).samples  # g[i, a, b] = d_b H^{ia}
    d = g - np.swapaxes(g, 1, 2)
    return float(np.sqrt(np.sum(d**2) * H.grid.cell_volume))


def piola_defect(H: TensorField) -> float:
    """L2 size of d_a cof(H)^{ia}, where cof(H) is the transposed adjugate."""
    cof = np.swapaxes(adjugate(H.samples), 0, 1)
    grid = H.grid
    div = sum(spectral_derivative(Field(grid, cof[:, a]), a).samples for a in range(grid.n))
    return float(np.sqrt(np.sum(div**2) * grid.cell_volume))


def velocity_from_gradient(Ht: TensorField, mean=None) -> Field:
    """Recover v from Ht^{ia} = d_a v^i (least squares in spectrum) plus its mean."""
    grid = Ht.grid
    ks = _eff_wavenumbers(grid)
    k2 = sum(k**2 for k in ks) * np.ones(grid.spectral_shape())
    inv = np.where(k2 == 0, 0.0, 1.0 / np.where(k2 == 0, 1.0, k2))
    spec = sfft.rfftn(Ht.samples, axes=grid.axes)
    vspec = sum(spec[:, a] * (-1j * ks[a]) for a in range(grid.n)) * inv
    v = sfft.irfftn(vspec, s=grid.shape, axes=grid.axes)
    if mean is not None:
        v = v + np.asarray(mean, dtype=float).reshape((grid.n,) + (1,) * grid.n)
    return Field(grid, v)


def lagrangian_energy(state: DeformationState, mean_velocity=None) -> float:
    """1/2 of the integral of |d_t x|^2 + |d_1 x|^2 over the label box."""
    v = velocity_from_gradient(state.Ht, mean_velocity).samples
    b = state.H.samples[:, 0]
    return 0.5 * float(np.sum(v**2) + np.sum(b**2)) * state.grid.cell_volume


def initial_state(v0: Field, pressure_tol: float = 1e-12) -> DeformationState:
    """H = I, Ht = grad v0, with the consistent pressure."""
    grid = v0.grid
    if v0.component_shape != (grid.n,):
        raise ValueError("v0 must be a vector field")
    H = TensorField.identity(grid)
    Ht = TensorField(grid, gradient(v0).samples)
    state = DeformationState(grid, H, Ht, Field.zeros(grid), 0.0)
    return with_pressure(state, pressure_tol)


def physical_pressure(H: TensorField, Ht: TensorField, tol: float = 1e-12, det_tol: float | None = DET_TOL) -> Field:
    """The pressure p that drives the wave system through wave_forcing(H, p).

    pressure_rhs is normalized so that its flat limit is tr((grad v)^2) - tr((grad b)^2),
    which is minus the Laplacian of the fluid pressure; hence the sign flip.
    """
    state = DeformationState(H.grid, H, Ht, Field.zeros(H.grid), 0.0)
    q = solve_pressure(H, pressure_rhs(state, det_tol=det_tol), tol, det_tol=det_tol)
    return -q


def with_pressure(state: DeformationState, tol: float = 1e-12) -> DeformationState:
    p = physical_pressure(state.H, state.Ht, tol)
    return DeformationState(state.grid, state.H, state.Ht, p, state.t)


def max_det_deviation(H: TensorField) -> float:
    return float(np.max(np.abs(determinant(H.samples) - 1.0)))


__all__ = [
    "DeformationState", "NumericalError", "adjugate", "cofactor_inverse", "curl_defect", "determinant",
    "initial_state", "lagrangian_energy", "levi_civita", "max_det_deviation", "null_form_q0",
    "physical_pressure", "piola_defect", "pressure_rhs", "solve_pressure", "velocity_from_gradient", "wave_forcing",
    "with_pressure",
]
