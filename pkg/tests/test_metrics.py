import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import naive_sum_rate
from satprecode.channel import steering_vector
from satprecode.config import ErrorConfig, ScenarioConfig, single_sat_scenario
from satprecode.exceptions import PrecoderError
from satprecode.metrics import (PrecodingMatrix, beam_pattern, mean_sum_rate,
                                normalize_power, sum_rate)
from satprecode.precoders import mmse_precoder


# -- sum rate --------------------------------------------------------------------

def test_zero_precoding_gives_zero_rate():
    h = np.ones((2, 4), dtype=complex)
    report = sum_rate(h, np.zeros((4, 2), dtype=complex), 1e-12)
    assert report.sum_rate == 0.0
    np.testing.assert_array_equal(report.per_user_rate, 0.0)


def test_single_user_rate_closed_form():
    # |h w| = 3 regardless of phase, noise 1 -> log2(4) = 2
    for phase in (0.0, 1.1, -2.5):
        h = np.array([[3.0 * np.exp(1j * phase)]])
        w = np.array([[1.0 + 0j]])
        assert sum_rate(h, w, 1.0).sum_rate == pytest.approx(2.0)


def test_orthogonal_two_user_rate():
    h = np.eye(2, dtype=complex)
    w = np.eye(2, dtype=complex)  # |h_u w_u| = 1, cross terms 0
    report = sum_rate(h, w, 1.0)
    assert report.sum_rate == pytest.approx(2.0)
    np.testing.assert_allclose(report.per_user_interference, 0.0, atol=1e-15)


def test_sum_rate_matches_naive_reference():
    rng = np.random.default_rng(0)
    for _ in range(200):
        u, kn = rng.integers(1, 5), rng.integers(1, 9)
        h = rng.normal(size=(u, kn)) + 1j * rng.normal(size=(u, kn))
        w = rng.normal(size=(kn, u)) + 1j * rng.normal(size=(kn, u))
        noise = float(rng.uniform(0.01, 2.0))
        for squared in (False, True):
            got = sum_rate(h, w, noise, squared=squared).sum_rate
            want = naive_sum_rate(h, w, noise, squared=squared)
            assert got == pytest.approx(want, rel=1e-12)


def test_zeroing_interference_never_decreases_rate():
    rng = np.random.default_rng(1)
    for _ in range(50):
        h = rng.normal(size=(3, 6)) + 1j * rng.normal(size=(3, 6))
        w = rng.normal(size=(6, 3)) + 1j * rng.normal(size=(6, 3))
        base = sum_rate(h, w, 0.1).sum_rate
        # interference-free bound: evaluate each user alone
        solo = sum(sum_rate(h[[u]], w[:, [u]], 0.1).sum_rate for u in range(3))
        assert solo >= base - 1e-12


@given(st.floats(0, 2 * np.pi), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_column_phase_invariance(phi, seed):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(3, 5)) + 1j * rng.normal(size=(3, 5))
    w = rng.normal(size=(5, 3)) + 1j * rng.normal(size=(5, 3))
    w2 = w.copy()
    w2[:, 1] *= np.exp(1j * phi)
    a = sum_rate(h, w, 0.3).sum_rate
    b = sum_rate(h, w2, 0.3).sum_rate
    assert a == pytest.approx(b, rel=1e-12)


def test_sum_rate_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        sum_rate(np.ones((2, 4)), np.ones((3, 2)), 1.0)


# -- power normalization -----------------------------------------------------------

def test_normalize_single_slice_scale():
    w = np.array([[1.0], [1.0]], dtype=complex)  # norm^2 = 2
    pm = normalize_power(w, 100.0, 1)
    np.testing.assert_allclose(pm.matrix, np.sqrt(50.0) * w, rtol=1e-15)
    assert np.sum(np.abs(pm.matrix) ** 2) == pytest.approx(100.0, abs=1e-9)


def test_normalize_idempotent():
    rng = np.random.default_rng(2)
    w = rng.normal(size=(6, 2)) + 1j * rng.normal(size=(6, 2))
    once = normalize_power(w, 100.0, 2)
    twice = normalize_power(once.matrix, 100.0, 2)
    np.testing.assert_allclose(twice.matrix, once.matrix, atol=1e-12)


def test_normalize_two_slices_factors():
    w = np.zeros((4, 1), dtype=complex)
    w[0, 0] = 1.0   # slice 0 norm^2 = 1
    w[2, 0] = 2.0   # slice 1 norm^2 = 4
    pm = normalize_power(w, 100.0, 2)
    assert pm.matrix[0, 0] == pytest.approx(np.sqrt(50.0))
    assert pm.matrix[2, 0] == pytest.approx(2.0 * np.sqrt(12.5))
    np.testing.assert_allclose(pm.per_satellite_power, [50.0, 50.0])


def test_normalize_flags_zero_slice():
    w = np.zeros((4, 2), dtype=complex)
    w[0, 0] = 1.0
    pm = normalize_power(w, 100.0, 2)
    assert pm.zero_slices == (1,)
    np.testing.assert_array_equal(pm.matrix[2:], 0.0)
    pm.check_power(100.0)


def test_power_check_raises_on_violation():
    pm = PrecodingMatrix(np.ones((2, 1), dtype=complex), np.array([60.0]))
    with pytest.raises(ValueError):
        pm.check_power(50.0)


# -- Monte Carlo mean ---------------------------------------------------------------

def deterministic_cfg():
    return ScenarioConfig(
        num_satellites=1, num_users=2, antennas_per_satellite=4,
        mean_user_distance_m=100e3, user_roam_m=0.0, fading_std=0.0)


def test_degenerate_mean_equals_single_draw():
    cfg = deterministic_cfg()
    err = ErrorConfig()
    precoder = lambda views: mmse_precoder(views[0].matrix,
                                           cfg.power_budget_w,
                                           cfg.noise_power_w, 1)
    result = mean_sum_rate(cfg, err, precoder, 10, 0)
    assert result.std_err == pytest.approx(0.0, abs=1e-12)
    assert result.mean == pytest.approx(result.rates[0])


def test_disjoint_seed_means_statistically_consistent():
    cfg = single_sat_scenario(users=2, antennas=4)
    err = ErrorConfig()
    precoder = lambda views: mmse_precoder(views[0].matrix,
                                           cfg.power_budget_w,
                                           cfg.noise_power_w, 1)
    a = mean_sum_rate(cfg, err, precoder, 2000, 101)
    b = mean_sum_rate(cfg, err, precoder, 2000, 202)
    combined = np.hypot(a.std_err, b.std_err)
    assert abs(a.mean - b.mean) < 4.0 * combined


def test_precoder_failure_carries_draw_index():
    cfg = deterministic_cfg()
    calls = []

    def precoder(views):
        calls.append(None)
        if len(calls) == 3:
            raise RuntimeError("synthetic failure")
        return mmse_precoder(views[0].matrix, cfg.power_budget_w,
                             cfg.noise_power_w, 1)

    with pytest.raises(PrecoderError) as exc_info:
        mean_sum_rate(cfg, ErrorConfig(), precoder, 10, 0)
    assert exc_info.value.draw_index == 2


# -- beam patterns -------------------------------------------------------------------

def test_single_antenna_pattern_is_flat():
    cfg = ScenarioConfig(num_satellites=1, num_users=1,
                         antennas_per_satellite=1,
                         mean_user_distance_m=1e3, user_roam_m=0.0)
    w = np.array([[np.sqrt(100.0) + 0j]])
    gains = beam_pattern(w, cfg, np.linspace(-1, 1, 31))
    np.testing.assert_allclose(
        gains, np.broadcast_to(gains[:, :1], gains.shape), rtol=1e-12)


def test_matched_filter_pattern_peaks_at_target():
    cfg = ScenarioConfig(num_satellites=1, num_users=1,
                         antennas_per_satellite=16,
                         mean_user_distance_m=1e3, user_roam_m=0.0)
    c0 = 0.21
    a = steering_vector(c0, 16, cfg.antenna_spacing_m, cfg.wavelength_m)
    w = a.conj()[:, None]
    grid = np.linspace(-1, 1, 4001)
    gains = beam_pattern(w, cfg, grid)
    peak = grid[np.argmax(gains[0])]
    assert abs(peak - c0) < 2.0 / 4000 + 1e-9


def test_pattern_homogeneity():
    cfg = ScenarioConfig(num_satellites=2, num_users=2,
                         antennas_per_satellite=4,
                         mean_user_distance_m=1e3, user_roam_m=0.0)
    rng = np.random.default_rng(3)
    w = rng.normal(size=(8, 2)) + 1j * rng.normal(size=(8, 2))
    grid = np.linspace(-1, 1, 21)
    base = beam_pattern(w, cfg, grid)
    scaled = beam_pattern(3.0 * w, cfg, grid)
    np.testing.assert_allclose(scaled, 9.0 * base, rtol=1e-12)


def test_beam_pattern_rejects_empty_grid():
    cfg = deterministic_cfg()
    with pytest.raises(ValueError):
        beam_pattern(np.ones((4, 2), dtype=complex), cfg, np.array([]))
