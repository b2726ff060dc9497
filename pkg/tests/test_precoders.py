import numpy as np
import pytest

from satprecode.channel import (ViewMode, draw_step, local_views,
                                steering_vector)
from satprecode.config import ErrorConfig, ScenarioConfig, single_sat_scenario
from satprecode.metrics import beam_pattern, sum_rate
from satprecode.precoders import (distributed_mmse, estimate_aod_cosine,
                                  limited_mmse, local_mmse, make_precoder,
                                  mmse_precoder, robust_slnr_precoder,
                                  slnr_autocorrelation)
from satprecode.rng import StreamBundle


def cosine_similarity(a, b):
    return abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b))


def make_cfg(**overrides):
    base = dict(num_satellites=1, num_users=2, antennas_per_satellite=4,
                mean_user_distance_m=100e3, user_roam_m=50e3)
    base.update(overrides)
    return ScenarioConfig(**base)


# -- centralized MMSE -------------------------------------------------------------

def test_mmse_single_user_basis_channel():
    h = np.zeros((1, 4), dtype=complex)
    h[0, 0] = 1.0
    pm = mmse_precoder(h, 100.0, 1e-3, 1)
    expected = np.zeros((4, 1), dtype=complex)
    expected[0, 0] = np.sqrt(100.0)
    np.testing.assert_allclose(pm.matrix, expected, atol=1e-9)


def test_mmse_high_noise_limit_is_matched_filter():
    rng = np.random.default_rng(4)
    h = rng.normal(size=(3, 8)) + 1j * rng.normal(size=(3, 8))
    pm = mmse_precoder(h, 1.0, 1e9, 1)
    mf = h.conj().T
    for u in range(3):
        assert cosine_similarity(pm.matrix[:, u], mf[:, u]) > 1 - 1e-9


def test_mmse_zero_forcing_on_orthogonal_channels():
    # orthonormal rows: MMSE inverts exactly, cross terms vanish
    q, _ = np.linalg.qr(np.random.default_rng(5).normal(size=(6, 6))
                        + 1j * np.random.default_rng(6).normal(size=(6, 6)))
    h = q[:3].conj()
    pm = mmse_precoder(h, 100.0, 1e-9, 1)
    cross = np.abs(h @ pm.matrix)
    off_diag = cross - np.diag(np.diag(cross))
    assert np.max(off_diag) < 1e-6 * np.min(np.diag(cross))


def test_mmse_interference_suppression_on_separated_users():
    cfg = single_sat_scenario(users=3, antennas=16)
    err = ErrorConfig()
    hits = 0
    for i in range(100):
        chan, est = draw_step(cfg, err, StreamBundle(0, "sep", i))
        pm = mmse_precoder(est.matrix, cfg.power_budget_w, cfg.noise_power_w, 1)
        rep = sum_rate(chan.matrix, pm, cfg.noise_power_w)
        ratio = rep.per_user_interference / rep.per_user_signal
        hits += bool(np.all(ratio < 1e-2))
    assert hits >= 90


# -- SLNR ---------------------------------------------------------------------------

def test_autocorrelation_zero_bound_is_rank_one():
    cfg = make_cfg()
    c = slnr_autocorrelation(0.3, 0.0, 4, cfg.antenna_spacing_m,
                             cfg.wavelength_m)
    a = steering_vector(0.3, 4, cfg.antenna_spacing_m, cfg.wavelength_m)
    np.testing.assert_allclose(c, np.outer(a.conj(), a), atol=1e-12)
    assert np.linalg.matrix_rank(c, tol=1e-9) == 1


def test_autocorrelation_structure():
    cfg = make_cfg()
    for bound in (0.05, 0.2):
        c = slnr_autocorrelation(-0.4, bound, 6, cfg.antenna_spacing_m,
                                 cfg.wavelength_m)
        np.testing.assert_allclose(np.diag(c).real, 1.0, atol=1e-12)
        np.testing.assert_allclose(c, c.conj().T, atol=1e-12)
        eigs = np.linalg.eigvalsh(c)
        assert eigs.min() > -1e-10


def test_autocorrelation_matches_monte_carlo():
    cfg = make_cfg()
    n, bound, cos0 = 4, 0.1, 0.17
    c = slnr_autocorrelation(cos0, bound, n, cfg.antenna_spacing_m,
                             cfg.wavelength_m)
    rng = np.random.default_rng(7)
    eps = rng.uniform(-bound, bound, size=200_000)
    a_eps = steering_vector(eps, n, cfg.antenna_spacing_m, cfg.wavelength_m)
    expectation = a_eps.conj().T @ a_eps / eps.size
    a0 = steering_vector(cos0, n, cfg.antenna_spacing_m, cfg.wavelength_m)
    mc = np.outer(a0.conj(), a0) * expectation
    np.testing.assert_allclose(c, mc, atol=3e-3)


def test_slnr_single_user_zero_bound_is_matched_filter():
    cfg = make_cfg(num_users=1, antennas_per_satellite=8)
    chan, est = draw_step(cfg, ErrorConfig(), StreamBundle(1, "t", 0))
    pm = robust_slnr_precoder(cfg, est.matrix, 0.0)
    mf = est.matrix.conj().T
    assert cosine_similarity(pm.matrix[:, 0], mf[:, 0]) > 1 - 1e-9


def test_slnr_beamwidth_grows_with_error_bound():
    cfg = make_cfg(num_users=2, antennas_per_satellite=16)
    chan, est = draw_step(cfg, ErrorConfig(), StreamBundle(2, "t", 0))
    grid = np.linspace(-1, 1, 8001)

    def width_3db(bound):
        pm = robust_slnr_precoder(cfg, est.matrix, bound)
        gains = beam_pattern(pm, cfg, grid)[0]
        above = gains >= gains.max() / 2.0
        return above.sum()

    widths = [width_3db(b) for b in (0.0, 0.1, 0.25)]
    assert widths[0] <= widths[1] <= widths[2]
    assert widths[2] > widths[0]


def test_slnr_multi_satellite_rejected():
    cfg = make_cfg(num_satellites=2)
    h = np.ones((2, 8), dtype=complex)
    with pytest.raises(Exception):
        robust_slnr_precoder(cfg, h, 0.1)


def test_estimate_aod_cosine_recovers_truth():
    cfg = make_cfg(num_users=1, antennas_per_satellite=12)
    chan, _ = draw_step(cfg, ErrorConfig(), StreamBundle(3, "t", 0))
    cos = estimate_aod_cosine(chan.matrix[0], cfg.antenna_spacing_m,
                              cfg.wavelength_m)
    assert cos == pytest.approx(chan.geometry.aod_cosines[0, 0], abs=1e-9)


# -- distributed MMSE ----------------------------------------------------------------

def test_local_mmse_single_satellite_matches_global_direction():
    cfg = make_cfg()
    chan, est = draw_step(cfg, ErrorConfig(0.05, 0.0), StreamBundle(4, "t", 0))
    views = local_views(cfg, est, chan, ErrorConfig(0.05, 0.0), ViewMode.LOCAL)
    slice_w = local_mmse(views[0], cfg.power_budget_w, cfg.noise_power_w,
                         cfg.num_users, 1)
    global_w = mmse_precoder(est.matrix, cfg.power_budget_w,
                             cfg.noise_power_w, 1)
    for u in range(cfg.num_users):
        assert cosine_similarity(slice_w[:, u], global_w.matrix[:, u]) > 1 - 1e-9


def test_distributed_slices_meet_power_budget():
    cfg = make_cfg(num_satellites=3, antennas_per_satellite=4, num_users=2)
    err = ErrorConfig(0.1, 0.05)
    chan, est = draw_step(cfg, err, StreamBundle(5, "t", 0))
    for mode in (ViewMode.LOCAL, ViewMode.LIMITED1, ViewMode.LIMITED2):
        views = local_views(cfg, est, chan, err, mode)
        pm = distributed_mmse(views, cfg)
        n = cfg.antennas_per_satellite
        for sat in range(3):
            norm_sq = np.sum(np.abs(pm.matrix[sat * n:(sat + 1) * n]) ** 2)
            assert norm_sq == pytest.approx(cfg.power_budget_w / 3, abs=1e-9)


def test_limited_mmse_zero_error_matches_centralized_directions():
    cfg = make_cfg(num_satellites=2, antennas_per_satellite=4, num_users=3)
    err = ErrorConfig(0.0, 0.0)
    chan, est = draw_step(cfg, err, StreamBundle(6, "t", 0))
    views = local_views(cfg, est, chan, err, ViewMode.LIMITED1)
    pm = distributed_mmse(views, cfg)
    central = mmse_precoder(est.matrix, cfg.power_budget_w,
                            cfg.noise_power_w, 2)
    n = cfg.antennas_per_satellite
    # each slice agrees with the centralized slice up to the per-slice scale
    for sat in range(2):
        a = pm.matrix[sat * n:(sat + 1) * n].ravel()
        b = central.matrix[sat * n:(sat + 1) * n].ravel()
        assert cosine_similarity(a, b) > 1 - 1e-9


def test_limited_mmse_single_user_is_own_block_matched_filter():
    cfg = make_cfg(num_satellites=2, num_users=1)
    err = ErrorConfig(0.05, 0.0)
    chan, est = draw_step(cfg, err, StreamBundle(7, "t", 0))
    views = local_views(cfg, est, chan, err, ViewMode.LIMITED1)
    n = cfg.antennas_per_satellite
    for sat, view in enumerate(views):
        w = limited_mmse(view, cfg.power_budget_w, cfg.noise_power_w, n, 2)
        own = view.matrix[:, sat * n:(sat + 1) * n]
        assert cosine_similarity(w[:, 0], own.conj().T[:, 0]) > 1 - 1e-9


def test_limited2_scale_one_matches_limited1_at_zero_error():
    cfg = make_cfg(num_satellites=2)
    err = ErrorConfig(0.0, 0.0, limited2_scale=1.0)
    chan, est = draw_step(cfg, err, StreamBundle(8, "t", 0))
    v1 = local_views(cfg, est, chan, err, ViewMode.LIMITED1)
    v2 = local_views(cfg, est, chan, err, ViewMode.LIMITED2)
    np.testing.assert_allclose(distributed_mmse(v1, cfg).matrix,
                               distributed_mmse(v2, cfg).matrix, atol=1e-12)


# -- registry and invariants -----------------------------------------------------------

def test_every_precoder_meets_power_invariant():
    cfg = make_cfg(num_satellites=2, antennas_per_satellite=4, num_users=3)
    err = ErrorConfig(0.1, 0.05)
    for name in ("mmse", "mmse-local", "mmse-l1", "mmse-l2"):
        precoder, mode = make_precoder(name, cfg, err)
        for i in range(20):
            chan, est = draw_step(cfg, err, StreamBundle(9, "inv", i))
            views = local_views(cfg, est, chan, err, mode)
            pm = precoder(views)
            pm.check_power(cfg.power_budget_w)
            n = cfg.antennas_per_satellite
            for sat in range(2):
                norm_sq = np.sum(np.abs(pm.matrix[sat*n:(sat+1)*n]) ** 2)
                assert norm_sq == pytest.approx(cfg.power_budget_w / 2,
                                                abs=1e-9)


def test_slnr_power_invariant():
    cfg = make_cfg(num_users=2, antennas_per_satellite=8)
    err = ErrorConfig(0.1, 0.0)
    precoder, mode = make_precoder("slnr", cfg, err)
    for i in range(20):
        chan, est = draw_step(cfg, err, StreamBundle(10, "inv", i))
        views = local_views(cfg, est, chan, err, mode)
        pm = precoder(views)
        assert np.sum(np.abs(pm.matrix) ** 2) == pytest.approx(
            cfg.power_budget_w, abs=1e-9)


def test_unknown_precoder_name_rejected():
    with pytest.raises(ValueError):
        make_precoder("zf", make_cfg(), ErrorConfig())


def test_learned_precoder_requires_checkpoint_dir():
    from satprecode.exceptions import MissingArtifactError
    with pytest.raises(MissingArtifactError):
        make_precoder("sac", make_cfg(), ErrorConfig(), checkpoint_dir=None)


def test_centralized_mmse_dominates_local_in_mean():
    # with zero error the only difference is each satellite seeing just its
    # own block, so full CSIT can only help
    from satprecode.metrics import mean_sum_rate

    cfg = make_cfg(num_satellites=2, antennas_per_satellite=4, num_users=3)
    err = ErrorConfig()
    means = {}
    for name in ("mmse", "mmse-local"):
        precoder, mode = make_precoder(name, cfg, err)
        means[name] = mean_sum_rate(cfg, err, precoder, 300, 6, mode)
    gap = means["mmse"].mean - means["mmse-local"].mean
    se = np.hypot(means["mmse"].std_err, means["mmse-local"].std_err)
    assert gap > -2 * se
    assert means["mmse"].mean > 0
