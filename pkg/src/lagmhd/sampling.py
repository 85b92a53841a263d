"""Seeded random fields whose Fourier coefficients do not depend on resolution.

Each integer mode gets its phase from a hash of (seed, stream, mode), so a
field sampled at 64^2 agrees with the same seed at 32^2 on the shared modes.
That is what makes resolution sweeps with matched seeds meaningful.
"""

from __future__ import annotations

import numpy as np

from .fourier_core import TWO_PI, Field, Grid, bracket, gradient

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def mode_uniforms(seed: int, stream: int, modes: list[np.ndarray]) -> np.ndarray:
    """Uniform [0, 1) numbers, one per mode, from a hash of the integer indices."""
    with np.errstate(over="ignore"):
        h = _splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ _splitmix64(np.uint64(stream)))
        for m in modes:
            h = _splitmix64(h ^ (np.asarray(m).astype(np.int64).astype(np.uint64) + np.uint64(0x632BE59BD9B4E019)))
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def _full_modes(grid: Grid) -> list[np.ndarray]:
    idx = []
    for axis, s in enumerate(grid.sizes):
        m = np.fft.fftfreq(s, 1.0 / s).astype(np.int64)
        shape = [1] * grid.n
        shape[axis] = s
        idx.append(np.broadcast_to(m.reshape(shape), grid.shape))
    return idx


def random_spectrum(grid: Grid, decay: float, seed: int, stream: int = 0, band: int | None = None) -> np.ndarray:
    """Hermitian full spectrum with |c(m)| = <xi>^{-decay} and hashed phases.

    Nyquist modes are left empty so that every retained mode has a partner.
    """
    modes = _full_modes(grid)
    # canonical representative of {m, -m}: first nonzero index positive
    sign = np.zeros(grid.shape, dtype=np.int64)
    for m in reversed(modes):
        sign = np.where(m != 0, np.sign(m), sign)
    canon = [m * np.where(sign < 0, -1, 1) for m in modes]
    phase = TWO_PI * mode_uniforms(seed, stream, canon)
    phase = np.where(sign < 0, -phase, phase)
    xi = np.sqrt(sum((TWO_PI / grid.period * m.astype(float)) ** 2 for m in modes))
    coef = bracket(xi) ** (-float(decay)) * np.exp(1j * phase)
    keep = sign != 0  # the zero mode carries no fluctuation
    for m, s in zip(modes, grid.sizes):
        keep &= m != -(s // 2)
        keep &= m != s // 2
        if band is not None:
            keep &= np.abs(m) <= band
    return np.where(keep, coef, 0.0)


def sample_random_field(grid: Grid, decay: float, seed: int, *, stream: int = 0, band: int | None = None,
                        normalize: bool = True) -> Field:
    """Mean-zero real field with spectral magnitudes <xi>^{-decay}, unit L^2 when normalized."""
    if decay < 0:
        raise ValueError("decay must be nonnegative")
    spec = random_spectrum(grid, decay, seed, stream, band)
    samples = np.fft.ifftn(spec).real * grid.num_points
    f = Field(grid, samples)
    if normalize:
        size = f.l2()
        if size > 0:
            f = f * (1.0 / size)
    return f


def sample_tensor_field(grid: Grid, decay: float, seed: int, shape: tuple[int, ...], *, band: int | None = None,
                        stream: int = 0) -> Field:
    """Independent components stacked to ``shape``, each unit L^2."""
    count = int(np.prod(shape))
    comps = [sample_random_field(grid, decay, seed, stream=stream * 97 + 1 + k, band=band).samples for k in range(count)]
    return Field(grid, np.stack(comps).reshape(shape + grid.shape))


def sample_divergence_free(grid: Grid, decay: float, seed: int, *, band: int | None = None, stream: int = 0) -> Field:
    """Divergence-free vector field with spectral magnitudes <xi>^{-decay}, unit L^2.

    2D uses a stream function; 3D takes the curl of a random vector potential.
    """
    n = grid.n
    if n == 2:
        psi = sample_random_field(grid, decay + 1, seed, stream=stream, band=band, normalize=False)
        g = gradient(psi).samples
        v = np.stack([g[1], -g[0]])
    else:
        A = np.stack([sample_random_field(grid, decay + 1, seed, stream=stream * 7 + k, band=band,
                                          normalize=False).samples for k in range(3)])
        g = gradient(Field(grid, A)).samples  # g[i, j] = d_j A^i
        v = np.stack([g[2, 1] - g[1, 2], g[0, 2] - g[2, 0], g[1, 0] - g[0, 1]])
    f = Field(grid, v)
    size = f.l2()
    return f * (1.0 / size) if size > 0 else f
