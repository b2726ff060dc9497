"""Sum-rate evaluation, power normalization, Monte Carlo means, beam patterns."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channel import (CsitView, ViewMode, draw_step, local_views,
                      steering_vector)
from .config import ErrorConfig, ScenarioConfig
from .exceptions import PrecoderError
from .rng import StreamBundle

POWER_TOL = 1e-9

__all__ = [
    "PrecodingMatrix", "SumRateReport", "MeanRateResult",
    "normalize_power", "sum_rate", "mean_sum_rate", "beam_pattern",
]


@dataclass(frozen=True)
class PrecodingMatrix:
    """Complex (K*N) x U precoder with per-satellite power accounting."""

    matrix: np.ndarray
    per_satellite_power: np.ndarray  # (K,)
    zero_slices: tuple[int, ...] = ()

    @property
    def num_satellites(self) -> int:
        return len(self.per_satellite_power)

    def check_power(self, power_budget: float, tol: float = POWER_TOL) -> None:
        cap = power_budget / self.num_satellites
        if np.any(self.per_satellite_power > cap + tol):
            raise ValueError("per-satellite power constraint violated")


@dataclass(frozen=True)
class SumRateReport:
    per_user_rate: np.ndarray
    sum_rate: float
    per_user_signal: np.ndarray
    per_user_interference: np.ndarray


@dataclass(frozen=True)
class MeanRateResult:
    mean: float
    std_err: float
    n_draws: int
    rates: np.ndarray


def normalize_power(w_raw: np.ndarray, power_budget: float,
                    num_satellites: int) -> PrecodingMatrix:
    """Scale each satellite slice to exactly P/K; all-zero slices stay zero."""
    w_raw = np.asarray(w_raw, dtype=complex)
    kn, _ = w_raw.shape
    if kn % num_satellites:
        raise ValueError("row count is not divisible by the satellite count")
    n = kn // num_satellites
    per_slice = power_budget / num_satellites
    out = w_raw.copy()
    powers = np.zeros(num_satellites)
    zero_slices = []
    for sat in range(num_satellites):
        rows = slice(sat * n, (sat + 1) * n)
        norm_sq = float(np.sum(np.abs(w_raw[rows]) ** 2))
        if norm_sq == 0.0:
            zero_slices.append(sat)
            continue
        out[rows] *= np.sqrt(per_slice / norm_sq)
        powers[sat] = per_slice
    return PrecodingMatrix(out, powers, tuple(zero_slices))


def sum_rate(h_true: np.ndarray, precoding: PrecodingMatrix | np.ndarray,
             noise_power: float, squared: bool = False) -> SumRateReport:
    """Achieved sum rate of a precoding on the true channel.

    The SINR-like ratio uses first-power magnitudes |h w| by default; the
    ``squared`` switch selects the conventional |h w|^2 form instead.
    """
    w = precoding.matrix if isinstance(precoding, PrecodingMatrix) else precoding
    h_true = np.asarray(h_true)
    if h_true.shape[1] != w.shape[0] or h_true.shape[0] != w.shape[1]:
        raise ValueError(
            f"dimension mismatch: H is {h_true.shape}, W is {w.shape}")
    cross = np.abs(h_true @ w)  # (U, U): |h_u w_u'|
    if squared:
        cross = cross ** 2
    signal = np.diag(cross).copy()
    interference = cross.sum(axis=1) - signal
    rates = np.log2(1.0 + signal / (noise_power + interference))
    return SumRateReport(rates, float(rates.sum()), signal, interference)


Precoder = Callable[[list[CsitView]], PrecodingMatrix]


def mean_sum_rate(cfg: ScenarioConfig, err: ErrorConfig, precoder: Precoder,
                  n_draws: int, master_seed: int,
                  view_mode: ViewMode | str = ViewMode.GLOBAL,
                  squared: bool = False,
                  seed_context: str = "eval") -> MeanRateResult:
    """Monte Carlo mean sum rate over independent (geometry, fading, error)
    draws; each draw is seeded by its index, so the result is independent of
    evaluation order or parallelism."""
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    mode = ViewMode(view_mode)
    rates = np.empty(n_draws)
    for i in range(n_draws):
        streams = StreamBundle(master_seed, seed_context, i)
        chan, est = draw_step(cfg, err, streams)
        views = local_views(cfg, est, chan, err, mode)
        try:
            precoding = precoder(views)
        except PrecoderError:
            raise
        except Exception as exc:
            raise PrecoderError(str(exc), draw_index=i) from exc
        rates[i] = sum_rate(chan.matrix, precoding, cfg.noise_power_w,
                            squared=squared).sum_rate
    std_err = float(rates.std(ddof=1) / np.sqrt(n_draws)) if n_draws > 1 else 0.0
    return MeanRateResult(float(rates.mean()), std_err, n_draws, rates)


def beam_pattern(precoding: PrecodingMatrix | np.ndarray, cfg: ScenarioConfig,
                 cos_grid: np.ndarray) -> np.ndarray:
    """Per-user array gain over a grid of departure-angle cosines.

    Returns gains of shape (U, len(grid)); each satellite contributes its
    steering response at the grid argument applied to its precoder slice.
    """
    w = precoding.matrix if isinstance(precoding, PrecodingMatrix) else precoding
    cos_grid = np.asarray(cos_grid, dtype=float)
    if cos_grid.size == 0:
        raise ValueError("cosine grid must be nonempty")
    n = cfg.antennas_per_satellite
    steer = steering_vector(cos_grid, n, cfg.antenna_spacing_m,
                            cfg.wavelength_m)  # (G, N)
    response = np.zeros((w.shape[1], cos_grid.size), dtype=complex)
    for sat in range(cfg.num_satellites):
        response += (steer @ w[sat * n:(sat + 1) * n]).T
    return np.abs(response) ** 2
