"""Scenario, error, training, and experiment configuration.

Configuration files are YAML with nested sections. All quantities are SI;
keys carrying dB values are suffixed explicitly (e.g. ``sat_gain_dbi``) and
converted to linear scale once at parse time.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .exceptions import ConfigError

SPEED_OF_LIGHT = 299792458.0  # m/s

VIEW_MODES = ("global", "local", "limited1", "limited2")
HYBRID_VARIANTS = ("none", "power-scale", "entry-scale")


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical constellation and link-budget constants."""

    num_satellites: int
    num_users: int
    antennas_per_satellite: int
    mean_user_distance_m: float
    user_roam_m: float
    mean_sat_distance_m: float = 10e3
    sat_roam_m: float = 0.0
    altitude_m: float = 600e3
    wavelength_m: float = SPEED_OF_LIGHT / 2e9
    antenna_spacing_m: float | None = None  # defaults to 3/2 wavelength
    sat_gain: float = db_to_linear(20.0)
    user_gain: float = db_to_linear(0.0)
    noise_power_w: float = 6e-13
    power_budget_w: float = 100.0
    fading_std: float = 0.1  # std of the underlying normal of the lognormal
    phase_mode: str = "distance"  # "distance" or "uniform"
    allow_overloaded: bool = False

    def __post_init__(self):
        if self.antenna_spacing_m is None:
            object.__setattr__(self, "antenna_spacing_m", 1.5 * self.wavelength_m)
        for name in ("num_satellites", "num_users", "antennas_per_satellite"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        positive = (
            "altitude_m", "wavelength_m", "antenna_spacing_m", "sat_gain",
            "user_gain", "noise_power_w", "power_budget_w",
            "mean_sat_distance_m", "mean_user_distance_m",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be strictly positive")
        for name in ("sat_roam_m", "user_roam_m", "fading_std"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.phase_mode not in ("distance", "uniform"):
            raise ConfigError(f"unknown phase_mode {self.phase_mode!r}")
        kn = self.num_satellites * self.antennas_per_satellite
        if kn < self.num_users and not self.allow_overloaded:
            raise ConfigError(
                f"K*N = {kn} < U = {self.num_users}; "
                "set allow_overloaded to permit this"
            )

    @property
    def total_antennas(self) -> int:
        return self.num_satellites * self.antennas_per_satellite

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        raw = _convert_db_keys(raw, {"sat_gain": "dbi", "user_gain": "dbi"})
        return cls(**_coerce_fields(cls, raw))


@dataclass(frozen=True)
class ErrorConfig:
    """CSIT uncertainty parameters."""

    aod_error_bound: float = 0.0        # additive on cos(AOD)
    phase_error_variance: float = 0.0   # rad^2
    limited2_scale: float = 2.0

    def __post_init__(self):
        if self.aod_error_bound < 0:
            raise ConfigError("aod_error_bound must be >= 0")
        if self.phase_error_variance < 0:
            raise ConfigError("phase_error_variance must be >= 0")
        if self.limited2_scale < 1:
            raise ConfigError("limited2_scale must be >= 1")

    @classmethod
    def from_dict(cls, raw: dict) -> "ErrorConfig":
        return cls(**_coerce_fields(cls, raw))


@dataclass(frozen=True)
class TrainConfig:
    """Learner hyperparameters; defaults target long production runs."""

    episodes: int = 13000
    steps_per_episode: int = 1000
    training_interval: int = 10
    batch_size: int = 1024
    actor_lr: float = 4.2e-5
    critic_lr: float = 8.8e-6
    entropy_scale: float = 1.0       # entropy weight is exp(entropy_scale)
    actor_l2: float = 0.01
    critic_l2: float = 0.01
    buffer_capacity: int = 100_000
    min_samples: int = 1000
    warmup_samples: int = 100
    hidden_sizes: tuple[int, ...] = (512, 512, 512, 512)
    actor_activation: str = "penalized-tanh"
    critic_activation: str = "leaky-relu"
    batch_norm: bool = True
    standardize_inputs: bool = True
    view_mode: str = "global"
    hybrid: str = "none"
    vanilla: bool = False
    checkpoint_every: int = 0  # episodes between resume snapshots; 0 = final only

    def __post_init__(self):
        for name in (
            "episodes", "steps_per_episode", "training_interval", "batch_size",
            "buffer_capacity", "min_samples", "warmup_samples",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("actor_lr", "critic_lr"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be strictly positive")
        for name in ("actor_l2", "critic_l2"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not self.hidden_sizes or any(s < 1 for s in self.hidden_sizes):
            raise ConfigError("hidden_sizes must be non-empty positive counts")
        if self.view_mode not in VIEW_MODES:
            raise ConfigError(f"unknown view_mode {self.view_mode!r}")
        if self.hybrid not in HYBRID_VARIANTS:
            raise ConfigError(f"unknown hybrid variant {self.hybrid!r}")
        if isinstance(self.hidden_sizes, list):
            object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))

    def effective(self) -> "TrainConfig":
        """Resolve ablation flags: vanilla mode strips the adaptations."""
        if not self.vanilla:
            return self
        return dataclasses.replace(
            self,
            training_interval=1,
            batch_norm=False,
            standardize_inputs=False,
            actor_l2=0.0,
            critic_l2=0.0,
        )

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        return cls(**_coerce_fields(cls, raw))


@dataclass(frozen=True)
class ExperimentConfig:
    """Top-level experiment description consumed by the CLI."""

    scenario: ScenarioConfig
    error: ErrorConfig = ErrorConfig()
    train: TrainConfig = TrainConfig()
    precoders: tuple[str, ...] = ("mmse",)
    sweep_grid: tuple[float, ...] = (0.0,)
    sweep_variable: str = "aod"  # "aod" or "phase"
    n_eval_draws: int = 5000
    seed: int = 0
    output_dir: str = "out"
    sinr_squared: bool = False

    def __post_init__(self):
        if isinstance(self.precoders, list):
            object.__setattr__(self, "precoders", tuple(self.precoders))
        if isinstance(self.sweep_grid, list):
            object.__setattr__(self, "sweep_grid", tuple(self.sweep_grid))
        if self.n_eval_draws < 1:
            raise ConfigError("n_eval_draws must be >= 1")
        if self.sweep_variable not in ("aod", "phase"):
            raise ConfigError(f"unknown sweep_variable {self.sweep_variable!r}")
        if list(self.sweep_grid) != sorted(self.sweep_grid):
            raise ConfigError("sweep_grid must be sorted ascending")
        if any(g < 0 for g in self.sweep_grid):
            raise ConfigError("sweep_grid values must be >= 0")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        try:
            scenario = ScenarioConfig.from_dict(raw.pop("scenario"))
        except KeyError:
            raise ConfigError("config is missing the 'scenario' section") from None
        error = ErrorConfig.from_dict(raw.pop("error", {}))
        train = TrainConfig.from_dict(raw.pop("train", {}))
        raw = _coerce_fields(cls, raw)
        try:
            return cls(scenario=scenario, error=error, train=train, **raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_yaml(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path} does not contain a mapping")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dump_yaml(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))


def _coerce_fields(cls, raw: dict) -> dict:
    """Cast incoming values to the declared field types.

    YAML 1.1 reads exponent forms like ``100.0e3`` as strings, so numeric
    fields are coerced explicitly; unknown keys and bad values raise
    ConfigError instead of TypeError deep inside the dataclass.
    """
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    out = {}
    for key, value in raw.items():
        if key not in types:
            raise ConfigError(f"unknown {cls.__name__} field {key!r}")
        kind = str(types[key])
        try:
            if value is None or kind.startswith("bool"):
                out[key] = value
            elif kind.startswith("int"):
                out[key] = int(value)
            elif kind.startswith("float"):
                out[key] = float(value)
            elif kind.startswith("tuple[float"):
                out[key] = tuple(float(v) for v in value)
            elif kind.startswith("tuple[int"):
                out[key] = tuple(int(v) for v in value)
            else:
                out[key] = value
        except (TypeError, ValueError):
            raise ConfigError(
                f"cannot interpret {cls.__name__}.{key} = {value!r}") from None
    return out


def _convert_db_keys(raw: dict, db_fields: dict[str, str]) -> dict:
    """Resolve '<field>_db'/'<field>_dbi' keys into linear-scale fields."""
    out = dict(raw)
    for base, suffix in db_fields.items():
        key = f"{base}_{suffix}"
        if key in out:
            if base in out:
                raise ConfigError(f"both {base} and {key} given")
            out[base] = db_to_linear(float(out.pop(key)))
    return out


def toy_scenario() -> ScenarioConfig:
    """Small single-satellite scenario used by desk-scale training runs."""
    return ScenarioConfig(
        num_satellites=1,
        num_users=2,
        antennas_per_satellite=2,
        mean_user_distance_m=100e3,
        user_roam_m=50e3,
    )


def toy_train_config(**overrides) -> TrainConfig:
    """Desk-scale learner preset: same algorithm, lrs sized for short runs."""
    base = dict(
        episodes=200,
        steps_per_episode=100,
        training_interval=1,
        batch_size=256,
        actor_lr=5e-4,
        critic_lr=2e-3,
        entropy_scale=-7.0,
        buffer_capacity=20_000,
        min_samples=500,
        hidden_sizes=(64, 64),
    )
    base.update(overrides)
    return TrainConfig(**base)


def single_sat_scenario(users: int = 3, antennas: int = 16,
                        user_distance_m: float = 100e3) -> ScenarioConfig:
    """The single-satellite evaluation scenario family."""
    return ScenarioConfig(
        num_satellites=1,
        num_users=users,
        antennas_per_satellite=antennas,
        mean_user_distance_m=user_distance_m,
        user_roam_m=user_distance_m / 2,
    )
