import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lagmhd.eulerian_oracle import divergence
from lagmhd.fourier_core import Grid
from lagmhd.norms import sobolev_norm
from lagmhd.sampling import mode_uniforms, random_spectrum, sample_divergence_free, sample_random_field
from lagmhd.scenarios import default_band, default_velocity


def test_same_seed_same_field(grid32):
    a = sample_random_field(grid32, 2.0, seed=11)
    b = sample_random_field(grid32, 2.0, seed=11)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, sample_random_field(grid32, 2.0, seed=12).samples)


def test_flat_spectrum_unit_l2(grid32):
    f = sample_random_field(grid32, 0.0, seed=1)
    assert f.l2() == pytest.approx(1.0, rel=1e-13)
    mags = np.abs(np.fft.fft2(f.samples))
    nz = mags[mags > 1e-9 * mags.max()]
    assert nz.max() == pytest.approx(nz.min(), rel=1e-10)


@given(sigma=st.floats(0, 3), a=st.floats(-1, 2), seed=st.integers(0, 10_000))
def test_sobolev_norm_matches_closed_form_sum(sigma, a, seed):
    g = Grid.square(2, 16)
    f = sample_random_field(g, sigma, seed)
    m = np.fft.fftfreq(16, 1 / 16)
    m1, m2 = np.meshgrid(m, m, indexing="ij")
    keep = (np.abs(m1) < 8) & (np.abs(m2) < 8) & ((m1 != 0) | (m2 != 0))
    xi = np.sqrt(m1**2 + m2**2)[keep]
    expected = math.sqrt(np.sum((1 + xi) ** (2 * (a - sigma))) / np.sum((1 + xi) ** (-2 * sigma)))
    assert sobolev_norm(f, a) == pytest.approx(expected, rel=1e-10)


def test_hermitian_and_real(grid32):
    spec = random_spectrum(grid32, 1.0, seed=3)
    assert np.abs(np.fft.ifft2(spec).imag).max() < 1e-16
    assert spec[0, 0] == 0 and np.all(spec[16, :] == 0) and np.all(spec[:, 16] == 0)


def test_band_limited_samples_agree_across_resolutions():
    coarse = sample_random_field(Grid.square(2, 16), 1.0, seed=5, band=4, normalize=False)
    fine = sample_random_field(Grid.square(2, 64), 1.0, seed=5, band=4, normalize=False)
    assert np.abs(fine.samples[::4, ::4] - coarse.samples).max() < 1e-14


def test_uniforms_are_in_unit_interval_and_spread():
    u = mode_uniforms(0, 0, [np.arange(10_000)])
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.01


@pytest.mark.parametrize("n,size", [(2, 32), (3, 16)])
def test_divergence_free_samples(n, size):
    v = sample_divergence_free(Grid.square(n, size), 2.0, seed=1)
    assert v.l2() == pytest.approx(1.0, rel=1e-13)
    assert np.abs(divergence(v).samples).max() < 1e-12


def test_default_velocity_scaling():
    g = Grid.square(2, 64)
    v = default_velocity(g)
    assert default_band(g) == 8
    assert np.sqrt(np.sum(v.samples**2, axis=0)).max() == pytest.approx(0.1, rel=1e-13)
    assert np.abs(divergence(v).samples).max() < 1e-14
