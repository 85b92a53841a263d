import math

import numpy as np
import pytest

from conftest import mode_field
from lagmhd.fourier_core import (
    Field,
    Grid,
    SpaceTimeField,
    TensorField,
    apply_box,
    gradient,
    make_cutoff,
    modulation_split,
)
from lagmhd.lagrangian_system import NumericalError, lagrangian_energy, max_det_deviation
from lagmhd.sampling import sample_random_field
from lagmhd.scenarios import cross_validate, default_velocity
from lagmhd.wave_elliptic_solver import (
    IterateRecord,
    PicardConfig,
    contraction_diagnostics,
    duhamel_lowmod,
    homogeneous_part,
    invert_box_highmod,
    picard_map,
    picard_times,
    run_coupled,
    run_picard,
    step_wave,
    time_window_from_scaling,
    zero_iterate,
)


def _tensor(grid, comp00):
    out = np.zeros((2, 2) + grid.shape)
    out[0, 0] = comp00
    return TensorField(grid, out)


def _march(G, Gt, dt, steps):
    F = TensorField(G.grid, np.zeros_like(G.samples))
    for _ in range(steps):
        G, Gt = step_wave(G, Gt, F, dt)
    return G, Gt


def test_single_mode_dalembert_second_order():
    g = Grid.square(2, 16)
    s1 = mode_field(g, (1, 0), "sin").samples
    errors = []
    for dt in (0.02, 0.01, 0.005):
        G, _ = _march(_tensor(g, 0 * s1), _tensor(g, s1), dt, int(round(1.0 / dt)))
        errors.append(np.abs(G.samples[0, 0] - math.sin(1.0) * s1).max())
    assert errors[-1] < 1e-5
    assert np.all(np.log2(np.array(errors[:-1]) / errors[1:]) > 1.9)


def test_degenerate_direction_is_exact():
    g = Grid.square(2, 16)
    c = mode_field(g, (0, 2)).samples
    G, Gt = _march(_tensor(g, c), _tensor(g, 0.5 * c), 0.05, 20)
    assert np.abs(G.samples[0, 0] - 1.5 * c).max() < 1e-13
    assert np.abs(Gt.samples[0, 0] - 0.5 * c).max() < 1e-13


def test_step_limit():
    g = Grid.square(2, 16)
    z = _tensor(g, 0.0)
    with pytest.raises(NumericalError):
        step_wave(z, z, z, 1.0)


def test_zero_velocity_stays_at_identity():
    g = Grid.square(2, 16)
    states = run_coupled(Field.zeros(g, (2,)), 0.05, 0.01)
    assert len(states) == 6
    for s in states:
        assert np.array_equal(s.H.samples, TensorField.identity(g).samples)
        assert np.abs(s.q.samples).max() == 0


def test_run_coupled_preconditions():
    g = Grid.square(2, 16)
    with pytest.raises(ValueError):
        run_coupled(default_velocity(g, amplitude=3.0), 0.01, 0.01)
    y1, y2 = g.coordinates()
    with pytest.raises(ValueError):
        run_coupled(Field(g, np.stack([0.1 * np.sin(y1), 0 * y1])), 0.01, 0.01)


def test_alfven_wave_against_eulerian_oracle():
    # v0 = (0, 0.1 sin y1) with b0 = e1 is a shear Alfven wave
    g = Grid.square(2, 64)
    y1 = g.coordinates()[0]
    v0 = Field(g, np.stack([0 * y1, 0.1 * np.sin(y1)]))
    cv = cross_validate(v0, 0.1, 1e-3, check_every=50)
    assert cv.h_error[-1] <= 1e-4
    assert cv.det_deviation.max() <= 1e-4
    # exact solution: x2 = y2 + 0.1 sin(t) sin(y1), i.e. H^{21} = 0.1 sin t cos y1
    states = run_coupled(v0, 0.1, 1e-3, record_every=100)
    H21 = states[-1].H.samples[1, 0]
    assert np.abs(H21 - 0.1 * math.sin(0.1) * np.cos(y1)).max() < 1e-8


def test_coupled_energy_and_constraints_short_run():
    g = Grid.square(2, 32)
    v0 = default_velocity(g)
    states = run_coupled(v0, 0.05, 1e-3, record_every=10)
    e = [lagrangian_energy(s, v0.mean()) for s in states]
    assert max(abs(x / e[0] - 1) for x in e) < 1e-8
    assert max(max_det_deviation(s.H) for s in states) < 1e-6


def test_homogeneous_part_examples():
    g = Grid.square(2, 16)
    times = np.linspace(-2, 2, 32, endpoint=False)
    chi = make_cutoff("chi")
    z = _tensor(g, 0.0)
    assert np.abs(homogeneous_part(z, z, chi, times).samples).max() == 0
    f = TensorField(g, np.eye(2)[:, :, None, None] * mode_field(g, (1, 0)).samples)
    U = homogeneous_part(f, z, chi, times)
    assert np.abs(U.slice(U.index_of(0.0)).samples - f.samples).max() < 1e-14
    # away from t = 0 the slice is chi(t) cos(t) f for this single mode
    j = 20
    assert np.abs(U.samples[j] - chi(times[j]) * math.cos(times[j]) * f.samples).max() < 1e-12


def _const_forcing(grid, nt, dt):
    y1 = grid.coordinates()[0]
    return SpaceTimeField(grid, -dt * (nt // 2), dt, np.broadcast_to(np.cos(y1), (nt,) + grid.shape))


def test_duhamel_zero_and_initial_data():
    g = Grid.square(2, 8)
    F = SpaceTimeField(g, -1.0, 0.125, np.zeros((16,) + g.shape))
    assert np.abs(duhamel_lowmod(F).samples).max() == 0
    F = _const_forcing(g, 16, 0.125)
    u, ut = duhamel_lowmod(F, with_derivative=True)
    j0 = u.index_of(0.0)
    assert np.abs(u.samples[j0]).max() == 0 and np.abs(ut.samples[j0]).max() == 0


def test_duhamel_single_mode_closed_form():
    g = Grid.square(2, 8)
    y1 = g.coordinates()[0]
    errors = []
    for nt in (32, 64, 128):
        dt = 4.0 / nt
        F = _const_forcing(g, nt, dt)
        u = duhamel_lowmod(F)
        exact = (1 - np.cos(F.times))[:, None, None] * np.cos(y1)[None]
        errors.append(np.abs(u.samples - exact).max())
    assert np.all(np.log2(np.array(errors[:-1]) / errors[1:]) > 1.9)


def test_duhamel_residual_order():
    # second time difference of u1 minus its y1 Laplacian against the forcing
    g = Grid.square(2, 16)
    f = sample_random_field(g, 2.0, seed=5, band=3)
    residuals = []
    for nt in (64, 128, 256):
        dt = 4.0 / nt
        t = -2 + dt * np.arange(nt)
        F = SpaceTimeField(g, -2.0, dt, np.cos(1.3 * t)[:, None, None] * f.samples[None])
        u = duhamel_lowmod(F).samples
        k = g.wavenumbers(False)[0]
        lap = np.real(np.fft.ifft2(np.fft.fft2(u, axes=(1, 2)) * (-(k**2)), axes=(1, 2)))
        box = (u[2:] - 2 * u[1:-1] + u[:-2]) / dt**2 - lap[1:-1]
        residuals.append(np.sqrt(np.mean((box - F.samples[1:-1]) ** 2)))
    assert np.all(np.log2(np.array(residuals[:-1]) / residuals[1:]) >= 1.9)


def test_invert_box_single_off_cone_mode():
    g = Grid.square(2, 16)
    nt = 32
    dt = 2 * math.pi / nt
    t = np.arange(nt) * dt
    y1 = g.coordinates()[0]
    F = SpaceTimeField(g, 0.0, dt, np.cos(3 * t)[:, None, None] * np.cos(y1)[None])
    u = invert_box_highmod(F)
    assert np.abs(u.samples - F.samples / (1.0 - 9.0)).max() < 1e-14
    zero = F.like(np.zeros_like(F.samples))
    assert np.abs(invert_box_highmod(zero).samples).max() == 0


def test_invert_box_residual_on_random_admissible_forcing():
    g = Grid.square(2, 16)
    rng = np.random.default_rng(1)
    F = SpaceTimeField(g, -2.0, 0.125, rng.standard_normal((32,) + g.shape))
    for scale in (0.5, 1.0):
        _, F2 = modulation_split(F, make_cutoff("phi"), scale)
        u2 = invert_box_highmod(F2, scale)
        res = np.linalg.norm(apply_box(u2).samples - F2.samples) / np.linalg.norm(F2.samples)
        assert res <= 1e-10


def test_invert_box_rejects_cone_energy():
    g = Grid.square(2, 16)
    nt = 32
    dt = 2 * math.pi / nt
    t = np.arange(nt) * dt
    y1 = g.coordinates()[0]
    F = SpaceTimeField(g, 0.0, dt, np.cos(2 * t)[:, None, None] * np.cos(2 * y1)[None])
    with pytest.raises(ValueError):
        invert_box_highmod(F)


def test_contraction_diagnostics_examples():
    recs = [IterateRecord(k + 1, 10.0, d, 0.0) for k, d in enumerate([1.0, 0.4, 0.16])]
    rep = contraction_diagnostics(recs)
    assert rep.rate == pytest.approx(0.4) and rep.verdict == "contracting"
    assert rep.ratios == pytest.approx([0.4, 0.4])
    rep = contraction_diagnostics([IterateRecord(1, 1.0, 1.0, 0.0), IterateRecord(2, 1.0, 1.2, 1.2)])
    assert rep.verdict == "diverging"
    rep = contraction_diagnostics([IterateRecord(k + 1, 1.0, 1.0, 1.0) for k in range(4)])
    assert rep.verdict == "stalled"
    with pytest.raises(ValueError):
        contraction_diagnostics(recs[:1])


def test_time_window_formula_and_clamp():
    M, C, n, eps = 0.01, 0.5, 2, 0.5
    raw = (M / (1 + (C + 1) ** 8 * M**8)) ** (2 / eps)
    assert time_window_from_scaling(M, C, n, eps, lo=0.0) == pytest.approx(raw)
    assert time_window_from_scaling(M, C, n, eps) == 1e-3
    assert time_window_from_scaling(1e6, C, n, eps) == 1e-3
    assert time_window_from_scaling(0.9, 0.0, n, 0.9, lo=1e-9) == pytest.approx(
        (0.9 / (1 + 0.9**8)) ** (2 / 0.9))


def test_picard_config_validation():
    for kwargs in ({"theta": 0.5}, {"theta": 1.0}, {"eps": 0.3}, {"T": 1.0}, {"nt": 30}, {"max_iters": 0}):
        with pytest.raises(ValueError):
            PicardConfig(**kwargs)
    with pytest.raises(ValueError):
        PicardConfig(s=1.5).check_regularity(2)


def test_picard_map_from_zero_is_the_free_wave():
    g = Grid.square(2, 16)
    v0 = default_velocity(g)
    cfg = PicardConfig(T=0.1, nt=32)
    MG = picard_map(zero_iterate(g, cfg.T, cfg.nt), cfg, v0)
    times = picard_times(cfg.T, cfg.nt)
    z = TensorField(g, np.zeros((2, 2) + g.shape))
    ref = homogeneous_part(z, TensorField(g, gradient(v0).samples), make_cutoff("chi"), times)
    assert np.array_equal(MG.G.samples, ref.samples)


def test_picard_map_initial_data_and_equation():
    g = Grid.square(2, 16)
    v0 = default_velocity(g, amplitude=0.2)
    cfg = PicardConfig(T=0.2, nt=64)
    it = zero_iterate(g, cfg.T, cfg.nt)
    for _ in range(2):
        it = picard_map(it, cfg, v0)
    j0 = it.G.index_of(0.0)
    assert np.abs(it.G.samples[j0]).max() < 1e-14
    assert np.abs(it.Gt.samples[j0] - gradient(v0).samples).max() < 1e-12


def test_picard_default_and_large_data():
    g = Grid.square(2, 32)
    run = run_picard(default_velocity(g), PicardConfig(T=0.1, nt=32))
    assert run.report.verdict == "contracting" and run.report.rate <= 0.5
    big = run_picard(default_velocity(g, amplitude=1.5), PicardConfig(T=0.4, nt=32))
    assert big.report.verdict == "diverging"
    assert big.error is not None
