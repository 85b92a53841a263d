import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lagmhd.eulerian_oracle import SpectralEvaluator
from lagmhd.estimate_verifier import (
    LEMMA_IDS,
    HypothesisError,
    LemmaCase,
    convergence_sweep,
    free_wave_pair,
    linear_solution,
    member_ratios,
    null_form_stack,
    null_witness,
    reports_to_csv,
    reports_to_json,
    sample_data,
    sample_spacetime_field,
    sample_volume_preserving_map,
    trend_factor,
    verify_inequality,
)
from lagmhd.fourier_core import Field, Grid
from lagmhd.lagrangian_system import max_det_deviation
from lagmhd.norms import NormSpec, composite_norm, wave_sobolev_norm
from lagmhd.sampling import sample_random_field


def test_hypotheses_are_enforced():
    with pytest.raises(HypothesisError, match="theta"):
        LemmaCase("QR1", theta=0.4)
    with pytest.raises(HypothesisError):
        LemmaCase("eQR", s=1.5)
    with pytest.raises(HypothesisError):
        LemmaCase("LD4_2", frac_s=1.2)
    with pytest.raises(HypothesisError):
        LemmaCase("nE", eps=0.5)
    with pytest.raises(HypothesisError):
        LemmaCase("XYZ")
    with pytest.raises(HypothesisError):
        LemmaCase("QR1", resolutions=(24,))
    assert issubclass(HypothesisError, ValueError)
    assert LemmaCase("LD4_1").coordinate_exponent == pytest.approx(0.6)


def test_trend_factor():
    assert trend_factor([32, 64, 128], [1, 2, 4]) == pytest.approx(2.0)
    assert trend_factor([32, 64, 128], [3, 3, 3]) == pytest.approx(1.0)
    assert trend_factor([32, 64], [0.0, 0.0]) == 1.0
    assert trend_factor([32, 64], [1.0, float("inf")]) == float("inf")
    assert trend_factor([32], [5.0]) == 1.0


@pytest.mark.parametrize("resolution", [16, 32, 64, 128])
def test_null_witness(resolution):
    assert null_witness(resolution) <= 1e-12


def test_qr1_small_ensemble_passes():
    rep = verify_inequality(LemmaCase("QR1", members=50, resolutions=(16, 32)))
    assert rep.verdict == "pass"
    assert all(np.all(np.isfinite(r)) and min(r) >= 0 for r in rep.ratios.values())
    assert [s.used for s in rep.stats] == [50, 50]


def test_sweep_plumbing_shape():
    reports, trend = convergence_sweep(LemmaCase("QR1", members=1, resolutions=(16, 32)))
    assert len(reports) == 2 and np.isfinite(trend)
    assert {r.trend for r in reports} == {trend}
    with pytest.raises(ValueError):
        convergence_sweep(LemmaCase("QR1", members=1, resolutions=(16,)))


@pytest.mark.parametrize("lemma", ["dQR_b", "LD4_2"])
def test_bounded_trends(lemma):
    rep = verify_inequality(LemmaCase(lemma, members=4, resolutions=(16, 32, 64)))
    assert rep.verdict == "pass", rep.stats


def test_reports_are_deterministic_and_serializable():
    case = LemmaCase("CQR_2", members=3, resolutions=(16, 32))
    a, b = verify_inequality(case), verify_inequality(case)
    assert reports_to_csv([a]) == reports_to_csv([b])
    assert reports_to_json([a]) == reports_to_json([b])
    lines = reports_to_csv([a]).strip().splitlines()
    assert lines[0] == "lemma,resolution,max,median,p95,trend,verdict"
    assert len(lines) == 3


def test_volume_preserving_map():
    g = Grid.square(2, 32)
    ident = sample_volume_preserving_map(g, 0.0, seed=1)
    assert np.abs(ident.displacement.samples).max() == 0
    for seed in range(3):
        fmap = sample_volume_preserving_map(g, LemmaCase("LD4_1").map_amplitude, seed=seed)
        assert max_det_deviation(fmap.jacobian()) <= 1e-8
    # change of variables with unit Jacobian keeps L2 norms
    ubar = sample_random_field(g, 3.0, seed=3, band=6)
    u = SpectralEvaluator(ubar)(fmap.positions().reshape(2, -1)).reshape(g.shape)
    l2_y = np.sqrt(np.sum(u**2) * g.cell_volume)
    assert abs(l2_y - ubar.l2()) <= 1e-6


def test_volume_preserving_map_3d():
    # the displacement is not band-limited, so the spectral Jacobian needs 32^3
    g = Grid.square(3, 32)
    fmap = sample_volume_preserving_map(g, 0.2, seed=4)
    assert max_det_deviation(fmap.jacobian()) <= 1e-8


@given(lam=st.floats(0.01, 100), mu=st.floats(0.01, 100), seed=st.integers(0, 100))
def test_bilinear_homogeneity(lam, mu, seed):
    g = Grid.square(2, 16)
    p0, p1, q0, q1 = (sample_data(g, seed * 4 + k, "random") for k in range(4))
    base = wave_sobolev_norm(null_form_stack(free_wave_pair(p0, p1, 16), free_wave_pair(q0, q1, 16)), NormSpec(0.6))
    scaled = wave_sobolev_norm(
        null_form_stack(free_wave_pair(p0 * lam, p1 * lam, 16), free_wave_pair(q0 * mu, q1 * mu, 16)), NormSpec(0.6))
    assert scaled == pytest.approx(lam * mu * base, rel=1e-12)


@given(lam=st.floats(0.01, 100), seed=st.integers(0, 100))
def test_linear_solution_homogeneity(lam, seed):
    g = Grid.square(2, 16)
    f, h = sample_data(g, seed, "random"), sample_data(g, seed + 1, "packet")
    F = sample_spacetime_field(g, 16, seed + 2, "random")
    spec = NormSpec(0.6, 1, 0.75)
    base = composite_norm(linear_solution(f, h, F, 0.25), spec)
    scaled = composite_norm(linear_solution(f * lam, h * lam, F * lam, 0.25), spec)
    assert scaled == pytest.approx(lam * base, rel=1e-12)


def test_every_case_evaluates_finite_ratios():
    for lemma in LEMMA_IDS:
        ratios, skipped = member_ratios(LemmaCase(lemma, members=2, resolutions=(16,)), 16)
        assert skipped == 0 and len(ratios) == 2
        assert np.all(np.isfinite(ratios)) and min(ratios) >= 0, lemma
