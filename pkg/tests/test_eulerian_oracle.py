import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lagmhd.eulerian_oracle import (
    EulerState,
    FlowMap,
    SpectralEvaluator,
    advect_trajectories,
    cfl_bound,
    divergence,
    energy,
    evaluate_off_grid,
    leray_project,
    mhd_rhs,
    push_forward_fields,
    run_euler,
    step_rk4,
    uniform_background,
)
from lagmhd.fourier_core import Field, Grid, gradient, spectral_refine
from lagmhd.lagrangian_system import NumericalError, max_det_deviation
from lagmhd.sampling import sample_divergence_free, sample_random_field
from lagmhd.scenarios import default_velocity


def _vec(grid, *components):
    return Field(grid, np.stack([np.broadcast_to(c, grid.shape) for c in components]))


def _orszag_tang(grid):
    y1, y2 = grid.coordinates()
    return EulerState(grid, _vec(grid, -np.sin(y2), np.sin(y1)), _vec(grid, -np.sin(y2), np.sin(2 * y1)))


def test_leray_kills_gradients(grid32):
    phi = sample_random_field(grid32, 2.0, seed=1)
    out = leray_project(Field(grid32, np.moveaxis(gradient(phi).samples, -3, 0)))
    assert np.abs(out.samples).max() < 1e-13


def test_leray_idempotent_on_divergence_free(grid32):
    v = sample_divergence_free(grid32, 2.0, seed=4)
    assert np.abs(leray_project(v).samples - v.samples).max() < 1e-12


@given(seed=st.integers(0, 10_000), n=st.sampled_from([2, 3]))
def test_leray_output_is_divergence_free(seed, n):
    g = Grid.square(n, 8 if n == 3 else 16)
    rng = np.random.default_rng(seed)
    v = Field(g, rng.standard_normal((n,) + g.shape))
    out = leray_project(v)
    assert np.linalg.norm(divergence(out).samples) < 1e-12 * np.linalg.norm(v.samples)
    assert np.allclose(out.mean(), v.mean(), atol=1e-15)


def test_rhs_vanishes_for_aligned_fields(grid32):
    v = sample_divergence_free(grid32, 3.0, seed=2, band=4)
    for state in (EulerState(grid32, v, v), EulerState(grid32, v * 0, v * 0)):
        dv, db = mhd_rhs(state)
        assert np.abs(dv.samples).max() < 1e-13 and np.abs(db.samples).max() < 1e-13


def _fd_rhs(state, size):
    # un-dealiased centered differences on a refined grid, then the exact projection
    v = spectral_refine(state.v, (size, size))
    b = spectral_refine(state.b, (size, size))
    g = v.grid
    h = g.spacing[0]

    def grad(a):  # grad[i, j] = d_j a^i
        return np.stack([(np.roll(a, -1, axis=j + 1) - np.roll(a, 1, axis=j + 1)) / (2 * h) for j in range(2)], axis=1)

    gv, gb = grad(v.samples), grad(b.samples)
    adv = lambda a, G: np.einsum("j...,ij...->i...", a, G)  # noqa: E731
    dv = -leray_project(Field(g, adv(v.samples, gv) - adv(b.samples, gb))).samples
    db = leray_project(Field(g, adv(b.samples, gv) - adv(v.samples, gb))).samples
    return dv, db


def test_rhs_matches_refined_finite_differences():
    g = Grid.square(2, 32)
    state = EulerState(g, sample_divergence_free(g, 2.0, 1, band=4), sample_divergence_free(g, 2.0, 2, band=4))
    dv, db = mhd_rhs(state)
    errors = []
    for size in (64, 128, 256):
        fv, fb = _fd_rhs(state, size)
        ref_v, ref_b = spectral_refine(dv, (size, size)).samples, spectral_refine(db, (size, size)).samples
        errors.append(max(np.abs(fv - ref_v).max(), np.abs(fb - ref_b).max()))
    assert np.all(np.log2(np.array(errors[:-1]) / errors[1:]) > 1.9)


def test_rhs_magnetic_tendency_is_divergence_free():
    g = Grid.square(2, 32)
    state = EulerState(g, sample_divergence_free(g, 1.0, 1), sample_divergence_free(g, 1.0, 2))
    _, db = mhd_rhs(state)
    assert np.abs(divergence(db).samples).max() < 1e-10 * np.abs(db.samples).max()


def test_zero_and_aligned_states_are_steady(grid32):
    z = EulerState(grid32, Field.zeros(grid32, (2,)), Field.zeros(grid32, (2,)))
    out = step_rk4(z, 0.1)
    assert np.abs(out.v.samples).max() == 0 and out.t == pytest.approx(0.1)
    v = sample_divergence_free(grid32, 3.0, seed=7) * 0.2
    s = EulerState(grid32, v, v)
    for _ in range(5):
        s = step_rk4(s, 1e-3)
    assert np.abs(s.v.samples - v.samples).max() < 1e-12
    assert np.abs(s.b.samples - v.samples).max() < 1e-12


def test_cfl_violation_reports_bound(grid32):
    s = _orszag_tang(grid32)
    with pytest.raises(NumericalError) as exc:
        step_rk4(s, 1.0)
    assert exc.value.details["cfl_bound"] == pytest.approx(cfl_bound(s))


def test_rk4_self_convergence_order():
    g = Grid.square(2, 32)
    s0 = _orszag_tang(g)
    T = 0.24
    finals = {}
    for dt in (0.03, 0.015, 0.0075, 0.00375):
        finals[dt] = run_euler(s0, dt, int(round(T / dt)))[-1]

    def diff(a, b):
        return np.sqrt(np.sum((a.v.samples - b.v.samples) ** 2) + np.sum((a.b.samples - b.b.samples) ** 2))

    e1 = diff(finals[0.03], finals[0.015])
    e2 = diff(finals[0.015], finals[0.0075])
    e3 = diff(finals[0.0075], finals[0.00375])
    assert np.log2(e1 / e2) >= 3.8 and np.log2(e2 / e3) >= 3.8


def test_evaluator_reproduces_grid_values_and_direct_sum(grid32):
    f = sample_random_field(grid32, 1.0, seed=3)
    pts = np.stack(grid32.coordinates()).reshape(2, -1)
    assert np.abs(evaluate_off_grid(f, pts) - f.samples.ravel()).max() < 1e-12
    rng = np.random.default_rng(0)
    x = rng.uniform(-5, 12, (2, 7))
    full = np.fft.fft2(f.samples) / grid32.num_points
    m = np.fft.fftfreq(32, 1 / 32).astype(int)
    keep = np.abs(m) < 16
    direct = [np.real(np.sum(full[np.ix_(keep, keep)] * np.exp(1j * (m[keep][:, None] * p[0] + m[keep][None, :] * p[1]))))
              for p in x.T]
    assert np.abs(SpectralEvaluator(f)(x) - direct).max() < 1e-12


def test_advect_static_and_uniform_flows(grid32):
    zero = EulerState(grid32, Field.zeros(grid32, (2,)), uniform_background(grid32))
    maps = advect_trajectories(run_euler(zero, 0.01, 5), 0.01)
    assert np.abs(maps[-1].displacement.samples).max() == 0
    c = np.array([0.3, -0.2])
    uniform = EulerState(grid32, _vec(grid32, c[0], c[1]), uniform_background(grid32))
    maps = advect_trajectories(run_euler(uniform, 0.01, 10), 0.01)
    disp = maps[-1].displacement.samples
    assert np.abs(disp - 0.1 * c[:, None, None]).max() < 1e-13
    assert np.abs(maps[-1].jacobian().samples - np.eye(2)[:, :, None, None]).max() < 1e-12


def test_advect_steady_shear():
    g = Grid.square(2, 32)
    y1, y2 = g.coordinates()
    state = EulerState(g, _vec(g, np.sin(y2), 0.0), Field.zeros(g, (2,)))
    dt = 1e-3
    fmap = advect_trajectories(run_euler(state, dt, 100), dt)[-1]
    assert np.abs(fmap.displacement.samples[0] - 0.1 * np.sin(y2)).max() < 1e-8
    H = fmap.jacobian().samples
    assert np.abs(H[0, 1] - 0.1 * np.cos(y2)).max() < 1e-8
    assert max_det_deviation(fmap.jacobian()) < 1e-12


def test_advect_rejects_nonuniform_history(grid32):
    s = EulerState(grid32, Field.zeros(grid32, (2,)), uniform_background(grid32))
    hist = [s, EulerState(grid32, s.v, s.b, 0.1), EulerState(grid32, s.v, s.b, 0.3)]
    with pytest.raises(ValueError):
        advect_trajectories(hist, 0.1)


def test_push_forward_identity_and_constant(grid32):
    v = sample_divergence_free(grid32, 2.0, seed=1)
    s = EulerState(grid32, v, uniform_background(grid32))
    ident = FlowMap(grid32, Field.zeros(grid32, (2,)), 0.0)
    b_lag, v_lag = push_forward_fields(s, ident)
    assert np.abs(v_lag.samples - v.samples).max() < 1e-12
    moved = FlowMap(grid32, v * 0.3, 0.0)
    b_lag, _ = push_forward_fields(s, moved)
    assert np.abs(b_lag.samples - uniform_background(grid32).samples).max() < 1e-14
    with pytest.raises(ValueError):
        push_forward_fields(s, FlowMap(grid32, v, 1.0))


def test_default_run_invariants():
    g = Grid.square(2, 64)
    v0 = default_velocity(g)
    dt = 1e-3
    hist = run_euler(EulerState(g, v0, uniform_background(g)), dt, 100)
    e0 = energy(hist[0])
    assert max(abs(energy(s) / e0 - 1) for s in hist) < 1e-6
    assert max(np.abs(divergence(s.b).samples).max() for s in hist) < 1e-10
    maps = advect_trajectories(hist, dt)
    assert max(max_det_deviation(m.jacobian()) for m in maps) < 1e-6
    b_lag, _ = push_forward_fields(hist[-1], maps[-1])
    assert np.abs(b_lag.samples - maps[-1].jacobian().samples[:, 0]).max() < 1e-8


def test_magnetic_line_identity_converges_under_refinement():
    # grid and dt refined together; the same band-limited data at every level
    errors = []
    for size, dt in ((16, 0.04), (32, 0.02), (64, 0.01)):
        g = Grid.square(2, size)
        v0 = default_velocity(g, amplitude=0.3, band=2)
        hist = run_euler(EulerState(g, v0, uniform_background(g)), dt, int(round(0.4 / dt)))
        fmap = advect_trajectories(hist, dt)[-1]
        b_lag, _ = push_forward_fields(hist[-1], fmap)
        errors.append(np.abs(b_lag.samples - fmap.jacobian().samples[:, 0]).max())
    assert np.all(np.log2(np.array(errors[:-1]) / errors[1:]) >= 2)
