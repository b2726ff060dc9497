"""Analytical baseline precoders: MMSE (centralized and distributed) and the
robust SLNR design for a single satellite."""

from __future__ import annotations

import numpy as np

from .channel import CsitView, ViewMode, steering_vector
from .config import ErrorConfig, ScenarioConfig
from .exceptions import NumericalError
from .metrics import PrecodingMatrix, normalize_power

CONDITION_LIMIT = 1e12

__all__ = [
    "mmse_precoder", "local_mmse", "limited_mmse", "distributed_mmse",
    "slnr_autocorrelation", "robust_slnr_precoder", "estimate_aod_cosine",
    "make_precoder", "ANALYTICAL_PRECODERS",
]


def _regularized_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if np.linalg.cond(a) > CONDITION_LIMIT:
        raise NumericalError("regularized system is ill-conditioned")
    return np.linalg.solve(a, b)


def mmse_precoder(h_est: np.ndarray, power: float, noise_power: float,
                  num_satellites: int) -> PrecodingMatrix:
    """Regularized channel inverse with global then per-satellite scaling."""
    h_est = np.asarray(h_est, dtype=complex)
    if not np.any(h_est):
        raise NumericalError("channel estimate is identically zero")
    num_users = h_est.shape[0]
    loading = noise_power * num_users / power
    gram = h_est.conj().T @ h_est + loading * np.eye(h_est.shape[1])
    w_raw = _regularized_solve(gram, h_est.conj().T)
    w_raw *= np.sqrt(power / np.trace(w_raw.conj().T @ w_raw).real)
    return normalize_power(w_raw, power, num_satellites)


def local_mmse(view: CsitView, power: float, noise_power: float,
               num_users: int, num_satellites: int) -> np.ndarray:
    """MMSE slice from one satellite's own CSIT block; norm^2 = P/K."""
    if view.mode != ViewMode.LOCAL:
        raise ValueError("local_mmse requires a LOCAL view")
    h_k = view.matrix
    loading = noise_power * num_users / power
    gram = h_k.conj().T @ h_k + loading * np.eye(h_k.shape[1])
    w_raw = _regularized_solve(gram, h_k.conj().T)
    norm_sq = np.sum(np.abs(w_raw) ** 2)
    if norm_sq == 0.0:
        raise NumericalError("local MMSE slice collapsed to zero")
    return w_raw * np.sqrt((power / num_satellites) / norm_sq)


def limited_mmse(view: CsitView, power: float, noise_power: float,
                 antennas_per_satellite: int, num_satellites: int) -> np.ndarray:
    """MMSE slice from a full-width limited view; own block vs. full Gram."""
    if view.mode not in (ViewMode.LIMITED1, ViewMode.LIMITED2):
        raise ValueError("limited_mmse requires a LIMITED1 or LIMITED2 view")
    n = antennas_per_satellite
    sat = view.satellite_index
    h_full = view.matrix
    h_own = h_full[:, sat * n:(sat + 1) * n]
    num_users = h_full.shape[0]
    loading = noise_power * num_users / power
    gram = h_full @ h_full.conj().T + loading * np.eye(num_users)
    w_raw = _regularized_solve(gram, h_own).conj().T
    norm_sq = np.sum(np.abs(w_raw) ** 2)
    if norm_sq == 0.0:
        raise NumericalError("limited MMSE slice collapsed to zero")
    return w_raw * np.sqrt((power / num_satellites) / norm_sq)


def distributed_mmse(views: list[CsitView], cfg: ScenarioConfig) -> PrecodingMatrix:
    """Stack per-satellite MMSE slices into a full precoding matrix."""
    slices = []
    for view in views:
        if view.mode == ViewMode.LOCAL:
            slices.append(local_mmse(view, cfg.power_budget_w,
                                     cfg.noise_power_w, cfg.num_users,
                                     cfg.num_satellites))
        else:
            slices.append(limited_mmse(view, cfg.power_budget_w,
                                       cfg.noise_power_w,
                                       cfg.antennas_per_satellite,
                                       cfg.num_satellites))
    stacked = np.vstack(slices)
    return normalize_power(stacked, cfg.power_budget_w, cfg.num_satellites)


def estimate_aod_cosine(h_row: np.ndarray, spacing: float,
                        wavelength: float) -> float:
    """Recover cos(AOD) from the mean adjacent-antenna phase increment.

    Unambiguous while |cos| < wavelength / (2 * spacing).
    """
    h_row = np.asarray(h_row)
    if h_row.size < 2:
        return 0.0
    accum = np.sum(h_row[1:] * np.conj(h_row[:-1]))
    return float(np.angle(accum) / (2.0 * np.pi * spacing / wavelength))


def slnr_autocorrelation(cos_aod: float, aod_bound: float, n_antennas: int,
                         spacing: float, wavelength: float) -> np.ndarray:
    """Closed-form expectation of the error-perturbed steering outer product.

    Entry (m, n) = conj(a_m) a_n * sin(x * bound) / (x * bound) with
    x = kappa_n - kappa_m the per-antenna phase slopes; 1 on the diagonal.
    """
    if aod_bound < 0:
        raise ValueError("aod_bound must be >= 0")
    a = steering_vector(cos_aod, n_antennas, spacing, wavelength)
    m = np.arange(1, n_antennas + 1)
    kappa = 2.0 * np.pi * (spacing / wavelength) * (n_antennas + 1 - 2 * m) / 2.0
    diff = kappa[np.newaxis, :] - kappa[:, np.newaxis]
    # np.sinc(t) = sin(pi t) / (pi t), exact 1 at t = 0
    damping = np.sinc(diff * aod_bound / np.pi)
    return np.conj(a)[:, np.newaxis] * a[np.newaxis, :] * damping


def robust_slnr_precoder(cfg: ScenarioConfig, h_est: np.ndarray,
                         aod_bound: float, aod_cosines: np.ndarray | None = None
                         ) -> PrecodingMatrix:
    """Leakage-based robust precoder; single satellite only.

    Per user, takes the principal eigenvector of the leakage-plus-noise
    whitened autocorrelation. AOD cosines default to estimates recovered
    from the CSIT phase ramp; pass true cosines to override.
    """
    if cfg.num_satellites != 1:
        raise ValueError("robust SLNR precoding is defined for one satellite")
    h_est = np.asarray(h_est, dtype=complex)
    num_users, n = h_est.shape
    power, noise = cfg.power_budget_w, cfg.noise_power_w
    if aod_cosines is None:
        aod_cosines = np.array([
            estimate_aod_cosine(h_est[u], cfg.antenna_spacing_m, cfg.wavelength_m)
            for u in range(num_users)
        ])
    channel_power = np.sum(np.abs(h_est) ** 2, axis=1) / n
    autocorr = [slnr_autocorrelation(aod_cosines[u], aod_bound, n,
                                     cfg.antenna_spacing_m, cfg.wavelength_m)
                for u in range(num_users)]
    loading = noise * num_users / power
    columns = np.empty((n, num_users), dtype=complex)
    for u in range(num_users):
        leakage = sum(channel_power[v] * autocorr[v]
                      for v in range(num_users) if v != u)
        leakage = np.asarray(leakage + loading * np.eye(n), dtype=complex)
        target = _regularized_solve(leakage, channel_power[u] * autocorr[u])
        vals, vecs = np.linalg.eig(target)
        idx = int(np.argmax(np.abs(vals)))
        vec = vecs[:, idx]
        vec = vec / np.linalg.norm(vec)
        residual = np.linalg.norm(target @ vec - vals[idx] * vec)
        if not np.isfinite(residual) or residual > 1e-8:
            raise NumericalError(
                f"SLNR eigenpair residual {residual:.2e} exceeds tolerance")
        columns[:, u] = (power / num_users) * vec
    return normalize_power(columns, power, cfg.num_satellites)


ANALYTICAL_PRECODERS = {
    "mmse": ViewMode.GLOBAL,
    "slnr": ViewMode.GLOBAL,
    "mmse-local": ViewMode.LOCAL,
    "mmse-l1": ViewMode.LIMITED1,
    "mmse-l2": ViewMode.LIMITED2,
}


def make_precoder(name: str, cfg: ScenarioConfig, err: ErrorConfig,
                  checkpoint_dir=None):
    """Resolve a precoder name to (callable(views) -> PrecodingMatrix, mode).

    Learned precoders ("sac", "sac-hybrid") require a checkpoint directory.
    """
    if name == "mmse":
        return (lambda views: mmse_precoder(views[0].matrix, cfg.power_budget_w,
                                            cfg.noise_power_w,
                                            cfg.num_satellites),
                ViewMode.GLOBAL)
    if name == "slnr":
        return (lambda views: robust_slnr_precoder(cfg, views[0].matrix,
                                                   err.aod_error_bound),
                ViewMode.GLOBAL)
    if name in ("mmse-local", "mmse-l1", "mmse-l2"):
        return (lambda views: distributed_mmse(views, cfg),
                ANALYTICAL_PRECODERS[name])
    if name in ("sac", "sac-hybrid"):
        from .sac import load_learned_precoder
        return load_learned_precoder(name, cfg, err, checkpoint_dir)
    raise ValueError(f"unknown precoder {name!r}")
