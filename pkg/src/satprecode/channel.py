"""Downlink geometry, line-of-sight channels, CSIT errors, and local views.

Geometry is 2D: satellites sit on a horizontal line at the orbit altitude,
users on the ground line, and the departure-angle cosine is 0 at nadir so
steering arguments stay inside [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .config import ErrorConfig, ScenarioConfig
from .rng import StreamBundle

__all__ = [
    "GeometryRealization", "ChannelRealization", "CsitEstimate", "CsitView",
    "ViewMode", "steering_vector", "place_constellation", "build_channel",
    "apply_errors", "local_views", "global_view", "draw_step",
]


class ViewMode(str, Enum):
    GLOBAL = "global"
    LOCAL = "local"
    LIMITED1 = "limited1"
    LIMITED2 = "limited2"


@dataclass(frozen=True)
class GeometryRealization:
    sat_positions: np.ndarray   # (K,) x-coordinates at altitude
    user_positions: np.ndarray  # (U,) x-coordinates on the ground
    distances: np.ndarray       # (U, K)
    aod_cosines: np.ndarray     # (U, K), in [-1, 1]


@dataclass(frozen=True)
class ChannelRealization:
    geometry: GeometryRealization
    fading: np.ndarray        # (U, K) lognormal draws
    phase_shifts: np.ndarray  # (U, K) in [0, 2pi)
    matrix: np.ndarray        # (U, K*N) complex

    def block(self, sat: int, n_antennas: int) -> np.ndarray:
        return self.matrix[:, sat * n_antennas:(sat + 1) * n_antennas]


@dataclass(frozen=True)
class CsitEstimate:
    matrix: np.ndarray      # (U, K*N) complex
    aod_errors: np.ndarray  # (U, K) additive on cos(AOD)
    phase_errors: np.ndarray  # (U, K) radians

    def block(self, sat: int, n_antennas: int) -> np.ndarray:
        return self.matrix[:, sat * n_antennas:(sat + 1) * n_antennas]


@dataclass(frozen=True)
class CsitView:
    mode: ViewMode
    satellite_index: int
    matrix: np.ndarray  # (U, N) for LOCAL, (U, K*N) otherwise


def steering_vector(cos_arg, n_antennas: int, spacing: float,
                    wavelength: float) -> np.ndarray:
    """Unit-modulus array response; broadcasts over cos_arg (last axis -> N)."""
    if n_antennas < 1:
        raise ValueError("n_antennas must be >= 1")
    m = np.arange(1, n_antennas + 1)
    coef = (n_antennas + 1 - 2 * m) / 2.0
    cos_arg = np.asarray(cos_arg, dtype=float)
    return np.exp(-2j * np.pi * (spacing / wavelength)
                  * coef * cos_arg[..., np.newaxis])


def place_constellation(cfg: ScenarioConfig,
                        streams: StreamBundle) -> GeometryRealization:
    """Draw satellite and user positions and derive distances / AOD cosines."""
    rng = streams.get("geometry")
    k, u = cfg.num_satellites, cfg.num_users
    sat_x = (np.arange(k) - (k - 1) / 2.0) * cfg.mean_sat_distance_m
    sat_x = sat_x + rng.uniform(-cfg.sat_roam_m, cfg.sat_roam_m, size=k)
    usr_x = (np.arange(u) - (u - 1) / 2.0) * cfg.mean_user_distance_m
    usr_x = usr_x + rng.uniform(-cfg.user_roam_m, cfg.user_roam_m, size=u)
    dx = usr_x[:, None] - sat_x[None, :]
    distances = np.hypot(dx, cfg.altitude_m)
    cosines = dx / distances
    return GeometryRealization(sat_x, usr_x, distances, cosines)


def build_channel(cfg: ScenarioConfig, streams: StreamBundle,
                  geometry: GeometryRealization | None = None) -> ChannelRealization:
    """Assemble the true channel matrix: amplitude, phase rotation, steering."""
    if geometry is None:
        geometry = place_constellation(cfg, streams)
    u, k, n = cfg.num_users, cfg.num_satellites, cfg.antennas_per_satellite
    fading = streams.get("fading").lognormal(mean=0.0, sigma=cfg.fading_std,
                                             size=(u, k))
    amplitude = (cfg.wavelength_m * np.sqrt(cfg.sat_gain * cfg.user_gain)
                 / (4.0 * np.pi * geometry.distances) / np.sqrt(fading))
    if cfg.phase_mode == "uniform":
        psi = streams.get("phase").uniform(0.0, 2.0 * np.pi, size=(u, k))
    else:
        psi = np.mod(2.0 * np.pi * geometry.distances / cfg.wavelength_m,
                     2.0 * np.pi)
    steering = steering_vector(geometry.aod_cosines, n,
                               cfg.antenna_spacing_m, cfg.wavelength_m)
    blocks = (amplitude * np.exp(-1j * psi))[..., np.newaxis] * steering
    matrix = blocks.reshape(u, k * n)
    return ChannelRealization(geometry, fading, psi, matrix)


def apply_errors(cfg: ScenarioConfig, chan: ChannelRealization,
                 err: ErrorConfig, streams: StreamBundle) -> CsitEstimate:
    """Multiply the AOD steering error and the per-satellite phase error in."""
    u, k, n = cfg.num_users, cfg.num_satellites, cfg.antennas_per_satellite
    bound = err.aod_error_bound
    eps_aod = streams.get("aod-error").uniform(-bound, bound, size=(u, k))
    eps_ph = streams.get("phase-error").normal(
        0.0, np.sqrt(err.phase_error_variance), size=(u, k))
    matrix = _perturb(cfg, chan, eps_aod, eps_ph)
    return CsitEstimate(matrix, eps_aod, eps_ph)


def _perturb(cfg: ScenarioConfig, chan: ChannelRealization,
             eps_aod: np.ndarray, eps_ph: np.ndarray) -> np.ndarray:
    u, k, n = cfg.num_users, cfg.num_satellites, cfg.antennas_per_satellite
    error_steer = steering_vector(eps_aod, n, cfg.antenna_spacing_m,
                                  cfg.wavelength_m)
    blocks = chan.matrix.reshape(u, k, n)
    perturbed = np.exp(-1j * eps_ph)[..., np.newaxis] * blocks * error_steer
    return perturbed.reshape(u, k * n)


def global_view(est: CsitEstimate) -> CsitView:
    return CsitView(ViewMode.GLOBAL, -1, est.matrix)


def local_views(cfg: ScenarioConfig, est: CsitEstimate,
                chan: ChannelRealization, err: ErrorConfig,
                mode: ViewMode | str) -> list[CsitView]:
    """Per-satellite information views for distributed precoding."""
    mode = ViewMode(mode)
    k, n = cfg.num_satellites, cfg.antennas_per_satellite
    if mode == ViewMode.GLOBAL:
        return [global_view(est)]
    if mode == ViewMode.LOCAL:
        return [CsitView(mode, sat, est.block(sat, n)) for sat in range(k)]
    if mode == ViewMode.LIMITED1:
        views = []
        for sat in range(k):
            matrix = est.matrix.copy()
            matrix[:, sat * n:(sat + 1) * n] = chan.block(sat, n)
            views.append(CsitView(mode, sat, matrix))
        return views
    if mode == ViewMode.LIMITED2:
        degraded = _perturb(cfg, chan, err.limited2_scale * est.aod_errors,
                            est.phase_errors)
        views = []
        for sat in range(k):
            matrix = degraded.copy()
            matrix[:, sat * n:(sat + 1) * n] = est.block(sat, n)
            views.append(CsitView(mode, sat, matrix))
        return views
    raise ValueError(f"unknown view mode {mode!r}")


def draw_step(cfg: ScenarioConfig, err: ErrorConfig,
              streams: StreamBundle) -> tuple[ChannelRealization, CsitEstimate]:
    """One simulation step: fresh geometry, fading, and CSIT error draws."""
    chan = build_channel(cfg, streams)
    est = apply_errors(cfg, chan, err, streams)
    return chan, est
