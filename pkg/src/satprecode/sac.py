"""Soft actor-critic precoder learning.

One agent precodes from global CSIT; in distributed modes one agent per
satellite maps its local view to its own precoding slice. Rewards are the
immediate achieved sum rate (no bootstrapping), critics regress it, and the
actor follows the pessimistic critic plus an entropy bonus through the
reparameterized Gaussian sample.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import CsitView, ViewMode, draw_step, local_views
from .config import ErrorConfig, ScenarioConfig, TrainConfig
from .exceptions import (CheckpointError, ConfigError, MissingArtifactError,
                         NumericalError)
from .metrics import PrecodingMatrix, normalize_power, sum_rate
from .nn import (AdamState, Network, NetworkSpec, adam_step, read_checkpoint,
                 write_checkpoint)
from .precoders import robust_slnr_precoder
from .rng import StreamBundle, stream

# State layout: all amplitudes first, then all phases, both in row-major
# flattening order of the view matrix.
STATE_LAYOUT = "amps-then-phases"
STD_GUARD = 1e-12
LOG_2PI = float(np.log(2.0 * np.pi))
# Shift making softplus(0 + offset) == 1, the neutral power scale.
NEUTRAL_SOFTPLUS_OFFSET = float(np.log(np.e - 1.0))
# Raw log-spread outputs are clamped to this range before exponentiation;
# without a ceiling the entropy bonus can grow the spread without limit
# because power normalization makes the environment scale-invariant.
LOG_SPREAD_MIN = -12.0
LOG_SPREAD_MAX = 2.0

__all__ = [
    "Standardizer", "warmup_standardizer", "input_transform", "sample_action",
    "output_transform", "hybrid_transform", "ReplayBuffer", "SacAgent",
    "build_agents", "run_inference_step", "run_training", "agents_precoder",
    "load_learned_precoder", "save_agents", "load_agents",
]


# -- input / output transforms ------------------------------------------------

@dataclass
class Standardizer:
    """Frozen per-channel amplitude/phase scaling from the warm-up period."""

    amp_mean: np.ndarray
    amp_std: np.ndarray
    phase_std: np.ndarray
    degenerate: np.ndarray  # bool flags where a guard epsilon was substituted
    frozen: bool = True

    @classmethod
    def identity(cls, width: int) -> "Standardizer":
        return cls(np.zeros(width), np.ones(width), np.ones(width),
                   np.zeros(width, dtype=bool))

    @classmethod
    def from_samples(cls, amps: np.ndarray, phases: np.ndarray) -> "Standardizer":
        amp_std = amps.std(axis=0)
        phase_std = phases.std(axis=0)
        degenerate = (amp_std <= STD_GUARD) | (phase_std <= STD_GUARD)
        amp_std = np.where(amp_std <= STD_GUARD, 1.0, amp_std)
        phase_std = np.where(phase_std <= STD_GUARD, 1.0, phase_std)
        return cls(amps.mean(axis=0), amp_std, phase_std, degenerate)


def input_transform(view_matrix: np.ndarray, std: Standardizer) -> np.ndarray:
    """Flatten a complex view into the standardized real state vector."""
    if not std.frozen:
        raise ValueError("standardizer must be frozen before use")
    flat = np.asarray(view_matrix).ravel(order="C")
    amps = (np.abs(flat) - std.amp_mean) / std.amp_std
    phases = np.angle(flat) / std.phase_std
    return np.concatenate([amps, phases])


def warmup_standardizer(cfg: ScenarioConfig, err: ErrorConfig,
                        view_mode: ViewMode | str, n_samples: int,
                        master_seed: int) -> list[Standardizer]:
    """Estimate per-agent input statistics from fresh CSIT draws."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    mode = ViewMode(view_mode)
    amp_samples: list[list[np.ndarray]] | None = None
    phase_samples: list[list[np.ndarray]] | None = None
    for i in range(n_samples):
        streams = StreamBundle(master_seed, "warmup", i)
        chan, est = draw_step(cfg, err, streams)
        views = local_views(cfg, est, chan, err, mode)
        if amp_samples is None:
            amp_samples = [[] for _ in views]
            phase_samples = [[] for _ in views]
        for agent_idx, view in enumerate(views):
            flat = view.matrix.ravel(order="C")
            amp_samples[agent_idx].append(np.abs(flat))
            phase_samples[agent_idx].append(np.angle(flat))
    return [Standardizer.from_samples(np.array(a), np.array(p))
            for a, p in zip(amp_samples, phase_samples)]


def sample_action(mean: np.ndarray, log_spread: np.ndarray, train: bool,
                  rng: np.random.Generator | None = None):
    """Draw an action; returns (action, logprob). Infer mode takes the mean
    and omits the logprob."""
    if not train:
        return mean.copy(), None
    if rng is None:
        raise ValueError("train-mode sampling needs a random stream")
    noise = rng.standard_normal(mean.shape)
    action = mean + np.exp(log_spread) * noise
    logprob = float(np.sum(-0.5 * LOG_2PI - log_spread - 0.5 * noise ** 2))
    return action, logprob


def output_transform(action: np.ndarray, num_users: int, rows: int,
                     power: float, num_slices: int) -> PrecodingMatrix:
    """Pair real halves into complex entries, reshape, normalize power."""
    action = np.asarray(action, dtype=float).ravel()
    if action.size != 2 * num_users * rows:
        raise ValueError(
            f"action length {action.size} != 2*{num_users}*{rows}")
    half = action.size // 2
    w = (action[:half] + 1j * action[half:]).reshape(rows, num_users)
    return normalize_power(w, power, num_slices)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def hybrid_transform(action: np.ndarray, base: PrecodingMatrix, variant: str,
                     power: float, num_slices: int) -> PrecodingMatrix:
    """Adapt an analytical precoding: per-user power scales or an
    elementwise complex multiplier. A zero action is the neutral element."""
    rows, num_users = base.matrix.shape
    action = np.asarray(action, dtype=float).ravel()
    if variant == "power-scale":
        if action.size != num_users:
            raise ValueError("power-scale action must have one entry per user")
        factors = _softplus(action + NEUTRAL_SOFTPLUS_OFFSET)
        w = base.matrix * factors[np.newaxis, :]
    elif variant == "entry-scale":
        if action.size != 2 * rows * num_users:
            raise ValueError("entry-scale action must cover every entry twice")
        half = action.size // 2
        mult = ((1.0 + action[:half]) + 1j * action[half:]).reshape(
            rows, num_users)
        w = base.matrix * mult
    else:
        raise ValueError(f"unknown hybrid variant {variant!r}")
    return normalize_power(w, power, num_slices)


# -- replay buffer ------------------------------------------------------------

class ReplayBuffer:
    """Fixed-capacity FIFO ring of (state, action, reward) tuples."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int,
                 min_samples: int):
        if capacity < 1 or min_samples < 1:
            raise ValueError("capacity and min_samples must be >= 1")
        self.capacity = capacity
        self.min_samples = min_samples
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self._ptr = 0
        self._fill = 0

    def __len__(self) -> int:
        return self._fill

    def push(self, state: np.ndarray, action: np.ndarray,
             reward: float) -> None:
        if not np.isfinite(reward) or reward < 0:
            raise ValueError(f"reward must be finite and >= 0, got {reward}")
        self.states[self._ptr] = state
        self.actions[self._ptr] = action
        self.rewards[self._ptr] = reward
        self._ptr = (self._ptr + 1) % self.capacity
        self._fill = min(self._fill + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        if self._fill < self.min_samples:
            raise ValueError(
                f"buffer holds {self._fill} < min_samples {self.min_samples}")
        idx = rng.integers(0, self._fill, size=batch_size)
        return (self.states[idx].copy(), self.actions[idx].copy(),
                self.rewards[idx].copy())

    def snapshot(self):
        """Stored rewards oldest to newest (ring-order diagnostic)."""
        if self._fill < self.capacity:
            order = np.arange(self._fill)
        else:
            order = np.arange(self.capacity)
            order = (order + self._ptr) % self.capacity
        return (self.states[order], self.actions[order], self.rewards[order])

    def state_dict(self) -> dict[str, np.ndarray]:
        return {"states": self.states, "actions": self.actions,
                "rewards": self.rewards,
                "cursor": np.array([self._ptr, self._fill])}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        self.states[...] = state["states"]
        self.actions[...] = state["actions"]
        self.rewards[...] = state["rewards"]
        self._ptr, self._fill = (int(v) for v in state["cursor"])


# -- the agent ----------------------------------------------------------------

class SacAgent:
    """Actor, twin critics, buffer, and standardizer for one precoding unit."""

    def __init__(self, cfg: ScenarioConfig, train_cfg: TrainConfig,
                 agent_index: int, standardizer: Standardizer,
                 master_seed: int):
        self.cfg = cfg
        self.train_cfg = train_cfg
        self.agent_index = agent_index
        self.standardizer = standardizer
        self.view_mode = ViewMode(train_cfg.view_mode)
        self.hybrid = train_cfg.hybrid

        u, k, n = cfg.num_users, cfg.num_satellites, cfg.antennas_per_satellite
        width = k * n if self.view_mode != ViewMode.LOCAL else n
        self.state_dim = 2 * u * width
        if self.hybrid == "power-scale":
            self.action_dim = u
        elif self.hybrid == "entry-scale":
            self.action_dim = 2 * u * n
        elif self.view_mode == ViewMode.GLOBAL:
            self.action_dim = 2 * u * k * n
        else:
            self.action_dim = 2 * u * n
        self.slice_rows = k * n if self.view_mode == ViewMode.GLOBAL else n
        self.slice_count = k if self.view_mode == ViewMode.GLOBAL else 1
        self.slice_power = (cfg.power_budget_w if self.view_mode == ViewMode.GLOBAL
                            else cfg.power_budget_w / k)

        hidden = tuple(train_cfg.hidden_sizes)
        actor_spec = NetworkSpec((self.state_dim, *hidden, 2 * self.action_dim),
                                 train_cfg.actor_activation,
                                 train_cfg.batch_norm)
        critic_spec = NetworkSpec(
            (self.state_dim + self.action_dim, *hidden, 1),
            train_cfg.critic_activation, train_cfg.batch_norm)
        self.actor = Network(actor_spec, stream(master_seed, "init",
                                                agent_index, "actor"))
        self.critic1 = Network(critic_spec, stream(master_seed, "init",
                                                   agent_index, "critic1"))
        self.critic2 = Network(critic_spec, stream(master_seed, "init",
                                                   agent_index, "critic2"))
        self.actor_opt = AdamState.for_params(self.actor.trainable(),
                                              train_cfg.actor_lr)
        self.critic1_opt = AdamState.for_params(self.critic1.trainable(),
                                                train_cfg.critic_lr)
        self.critic2_opt = AdamState.for_params(self.critic2.trainable(),
                                                train_cfg.critic_lr)
        self.buffer = ReplayBuffer(train_cfg.buffer_capacity, self.state_dim,
                                   self.action_dim, train_cfg.min_samples)

    # -- acting ---------------------------------------------------------------

    def make_neutral(self) -> None:
        """Zero the actor's output layer so the mean action is the neutral
        element (identity adaptation for hybrid variants)."""
        self.actor.dense[-1]["W"][...] = 0.0
        self.actor.dense[-1]["b"][...] = 0.0

    def policy(self, state: np.ndarray):
        out, _ = self.actor.forward(state[np.newaxis, :], train=False)
        log_spread = np.clip(out[0, self.action_dim:], LOG_SPREAD_MIN,
                             LOG_SPREAD_MAX)
        return out[0, :self.action_dim], log_spread

    def act(self, view: CsitView, train: bool,
            rng: np.random.Generator | None = None):
        state = input_transform(view.matrix, self.standardizer)
        mean, log_spread = self.policy(state)
        action, logprob = sample_action(mean, log_spread, train, rng)
        return state, action, logprob

    def action_to_precoding(self, action: np.ndarray, view: CsitView,
                            err: ErrorConfig) -> PrecodingMatrix:
        if self.hybrid != "none":
            base = robust_slnr_precoder(self.cfg, view.matrix,
                                        err.aod_error_bound)
            return hybrid_transform(action, base, self.hybrid,
                                    self.slice_power, self.slice_count)
        return output_transform(action, self.cfg.num_users, self.slice_rows,
                                self.slice_power, self.slice_count)

    # -- learning -------------------------------------------------------------

    def ready(self) -> bool:
        return len(self.buffer) >= self.train_cfg.min_samples

    def critic_loss_and_grads(self, critic: Network, states: np.ndarray,
                              actions: np.ndarray, rewards: np.ndarray):
        """Mean squared regression of the immediate reward, plus L2."""
        tc = self.train_cfg
        batch = states.shape[0]
        out, trace = critic.forward(np.hstack([states, actions]), train=True)
        residual = out[:, 0] - rewards
        loss = float(np.mean(residual ** 2)) + tc.critic_l2 * critic.l2_value()
        if not np.isfinite(loss):
            raise NumericalError("critic loss is non-finite")
        grads, _ = critic.backward(trace, (2.0 / batch) * residual[:, None])
        critic.add_l2_grads(grads, tc.critic_l2)
        return loss, grads

    def actor_loss_and_grads(self, states: np.ndarray, noise: np.ndarray):
        """Pessimistic-critic loss plus entropy and L2 terms.

        The gradient flows through the reparameterized draw
        a = mu + exp(sigma') * noise; the critics are held fixed. Returns
        (loss, grads, diagnostics).
        """
        tc = self.train_cfg
        batch = states.shape[0]
        out, trace = self.actor.forward(states, train=True)
        mean, raw_spread = out[:, :self.action_dim], out[:, self.action_dim:]
        log_spread = np.clip(raw_spread, LOG_SPREAD_MIN, LOG_SPREAD_MAX)
        clip_mask = (raw_spread > LOG_SPREAD_MIN) & (raw_spread < LOG_SPREAD_MAX)
        spread = np.exp(log_spread)
        action = mean + spread * noise
        sa = np.hstack([states, action])
        q1, trace1 = self.critic1.forward(sa, train=True, update_stats=False)
        q2, trace2 = self.critic2.forward(sa, train=True, update_stats=False)
        q1, q2 = q1[:, 0], q2[:, 0]
        pick1 = q1 <= q2
        gout1 = np.where(pick1, -1.0 / batch, 0.0)[:, None]
        gout2 = np.where(pick1, 0.0, -1.0 / batch)[:, None]
        _, dx1 = self.critic1.backward(trace1, gout1)
        _, dx2 = self.critic2.backward(trace2, gout2)
        d_action = (dx1 + dx2)[:, self.state_dim:]

        entropy_w = float(np.exp(tc.entropy_scale))
        diff = action - mean  # = spread * noise
        var = spread ** 2
        logprob = np.sum(-0.5 * LOG_2PI - log_spread - 0.5 * noise ** 2, axis=1)
        d_action += (entropy_w / batch) * (-diff / var)
        d_mean = d_action + (entropy_w / batch) * (diff / var)
        d_log_spread = (d_action * diff
                        + (entropy_w / batch) * (diff ** 2 / var - 1.0))
        d_log_spread = np.where(clip_mask, d_log_spread, 0.0)
        loss = (float(np.mean(-np.minimum(q1, q2)))
                + entropy_w * float(np.mean(logprob))
                + tc.actor_l2 * self.actor.l2_value())
        if not np.isfinite(loss):
            raise NumericalError("actor loss is non-finite")
        grads, _ = self.actor.backward(trace,
                                       np.hstack([d_mean, d_log_spread]))
        self.actor.add_l2_grads(grads, tc.actor_l2)
        return loss, grads, {"mean_spread": float(np.mean(spread))}

    def train_on_batch(self, batch_rng: np.random.Generator,
                       noise_rng: np.random.Generator) -> dict[str, float]:
        """One SAC update: both critics on the batch, then the actor."""
        tc = self.train_cfg
        states, actions, rewards = self.buffer.sample(tc.batch_size, batch_rng)
        critic_losses = []
        for critic, opt in ((self.critic1, self.critic1_opt),
                            (self.critic2, self.critic2_opt)):
            loss, grads = self.critic_loss_and_grads(critic, states, actions,
                                                     rewards)
            adam_step(critic.trainable(), critic.grads_flat(grads), opt)
            critic_losses.append(loss)
        noise = noise_rng.standard_normal((states.shape[0], self.action_dim))
        actor_loss, grads, diag = self.actor_loss_and_grads(states, noise)
        adam_step(self.actor.trainable(), self.actor.grads_flat(grads),
                  self.actor_opt)
        return {
            "actor_loss": actor_loss,
            "critic1_loss": critic_losses[0],
            "critic2_loss": critic_losses[1],
            "mean_spread": diag["mean_spread"],
        }

    # -- persistence ----------------------------------------------------------

    def checkpoint_meta(self) -> dict:
        cfg = self.cfg
        return {
            "agent_index": self.agent_index,
            "view_mode": self.view_mode.value,
            "hybrid": self.hybrid,
            "layout": STATE_LAYOUT,
            "num_users": cfg.num_users,
            "num_satellites": cfg.num_satellites,
            "antennas_per_satellite": cfg.antennas_per_satellite,
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "actor_spec": self.actor.spec.to_dict(),
            "critic_spec": self.critic1.spec.to_dict(),
            "adam_steps": [self.actor_opt.step, self.critic1_opt.step,
                           self.critic2_opt.step],
            "adam_lrs": [self.actor_opt.lr, self.critic1_opt.lr,
                         self.critic2_opt.lr],
        }

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {}
        arrays.update(self.actor.state_arrays("actor"))
        arrays.update(self.critic1.state_arrays("critic1"))
        arrays.update(self.critic2.state_arrays("critic2"))
        arrays.update(self.actor_opt.state_arrays("opt/actor"))
        arrays.update(self.critic1_opt.state_arrays("opt/critic1"))
        arrays.update(self.critic2_opt.state_arrays("opt/critic2"))
        arrays["std/amp_mean"] = self.standardizer.amp_mean
        arrays["std/amp_std"] = self.standardizer.amp_std
        arrays["std/phase_std"] = self.standardizer.phase_std
        arrays["std/degenerate"] = self.standardizer.degenerate.astype(np.uint8)
        return arrays

    def save(self, path: str | Path) -> None:
        write_checkpoint(path, self.checkpoint_meta(), self.state_arrays())

    def load(self, path: str | Path) -> None:
        meta, arrays = read_checkpoint(path)
        expected = self.checkpoint_meta()
        for key in ("view_mode", "hybrid", "layout", "num_users",
                    "num_satellites", "antennas_per_satellite", "state_dim",
                    "action_dim", "actor_spec", "critic_spec"):
            if meta.get(key) != expected[key]:
                raise CheckpointError(
                    f"checkpoint field {key!r} mismatch: "
                    f"{meta.get(key)!r} != {expected[key]!r}")
        self.actor.load_arrays("actor", arrays)
        self.critic1.load_arrays("critic1", arrays)
        self.critic2.load_arrays("critic2", arrays)
        steps = meta["adam_steps"]
        lrs = meta["adam_lrs"]
        for opt, prefix, step, lr in (
                (self.actor_opt, "opt/actor", steps[0], lrs[0]),
                (self.critic1_opt, "opt/critic1", steps[1], lrs[1]),
                (self.critic2_opt, "opt/critic2", steps[2], lrs[2])):
            opt.load_arrays(prefix, arrays, step)
            opt.lr = float(lr)
        self.standardizer = Standardizer(
            arrays["std/amp_mean"], arrays["std/amp_std"],
            arrays["std/phase_std"], arrays["std/degenerate"].astype(bool))


def build_agents(cfg: ScenarioConfig, train_cfg: TrainConfig,
                 master_seed: int) -> list[SacAgent]:
    """Create the agent set for the configured view mode, warm-up included."""
    tc = train_cfg.effective()
    mode = ViewMode(tc.view_mode)
    num_agents = 1 if mode == ViewMode.GLOBAL else cfg.num_satellites
    if tc.hybrid != "none" and cfg.num_satellites != 1:
        raise ConfigError("hybrid adaptation requires a single satellite")
    u, k, n = cfg.num_users, cfg.num_satellites, cfg.antennas_per_satellite
    width = k * n if mode != ViewMode.LOCAL else n
    agents = [SacAgent(cfg, tc, i, Standardizer.identity(u * width), master_seed)
              for i in range(num_agents)]
    if tc.hybrid != "none":
        # Zero mean action is the identity adaptation, so a hybrid agent
        # starts out reproducing the analytical precoder exactly.
        for agent in agents:
            agent.make_neutral()
    return agents


# -- inference and training loops ----------------------------------------------

def _assemble(agents: list[SacAgent], precodings: list[PrecodingMatrix],
              cfg: ScenarioConfig) -> PrecodingMatrix:
    if len(precodings) == 1 and agents[0].view_mode == ViewMode.GLOBAL:
        return precodings[0]
    matrix = np.vstack([p.matrix for p in precodings])
    powers = np.concatenate([p.per_satellite_power for p in precodings])
    zero = tuple(i for i, p in enumerate(precodings) if p.zero_slices)
    return PrecodingMatrix(matrix, powers, zero)


def run_inference_step(cfg: ScenarioConfig, err: ErrorConfig,
                       agents: list[SacAgent], streams: StreamBundle,
                       train: bool, push: bool = True,
                       squared: bool = False):
    """One simulation step: draw, act per agent, evaluate, store experiences.

    Returns (reward, precoding, channel realization).
    """
    mode = agents[0].view_mode
    chan, est = draw_step(cfg, err, streams)
    views = local_views(cfg, est, chan, err, mode)
    if len(views) != len(agents):
        raise ValueError("agent count does not match the view count")
    records = []
    precodings = []
    for agent, view in zip(agents, views):
        rng = streams.get(f"agent{agent.agent_index}-action") if train else None
        state, action, _ = agent.act(view, train, rng)
        precodings.append(agent.action_to_precoding(action, view, err))
        records.append((agent, state, action))
    precoding = _assemble(agents, precodings, cfg)
    reward = sum_rate(chan.matrix, precoding, cfg.noise_power_w,
                      squared=squared).sum_rate
    if push:
        for agent, state, action in records:
            agent.buffer.push(state, action, reward)
    return reward, precoding, chan


@dataclass
class EpisodeRow:
    episode: int
    mean_reward: float
    actor_loss: float
    critic1_loss: float
    critic2_loss: float
    mean_spread: float


def run_training(cfg: ScenarioConfig, err: ErrorConfig,
                 train_cfg: TrainConfig, master_seed: int,
                 out_dir: str | Path | None = None,
                 agents: list[SacAgent] | None = None,
                 resume: bool = False,
                 neutral_start: bool = False,
                 episode_callback=None) -> tuple[list[SacAgent], list[EpisodeRow]]:
    """Full training run; deterministic given (configs, master_seed).

    Every simulation step's randomness is keyed by the global step index, so
    an interrupted run resumed from the persisted state reproduces the
    uninterrupted trajectory.
    """
    tc = train_cfg.effective()
    if agents is None:
        agents = build_agents(cfg, tc, master_seed)
    if tc.standardize_inputs:
        stds = warmup_standardizer(cfg, err, tc.view_mode, tc.warmup_samples,
                                   master_seed)
        for agent, std in zip(agents, stds):
            agent.standardizer = std
    if neutral_start:
        for agent in agents:
            agent.make_neutral()

    out_dir = Path(out_dir) if out_dir is not None else None
    start_episode = 0
    global_step = 0
    if resume:
        if out_dir is None:
            raise ValueError("resume requires an output directory")
        start_episode, global_step = _load_train_state(out_dir, agents)

    rows: list[EpisodeRow] = []
    for episode in range(start_episode, tc.episodes):
        rewards = np.empty(tc.steps_per_episode)
        last_losses = {"actor_loss": float("nan"),
                       "critic1_loss": float("nan"),
                       "critic2_loss": float("nan"),
                       "mean_spread": float("nan")}
        for step in range(tc.steps_per_episode):
            streams = StreamBundle(master_seed, "train", global_step)
            reward, _, _ = run_inference_step(cfg, err, agents, streams,
                                              train=True)
            rewards[step] = reward
            global_step += 1
            if (global_step % tc.training_interval == 0
                    and all(agent.ready() for agent in agents)):
                for agent in agents:
                    losses = agent.train_on_batch(
                        streams.get(f"agent{agent.agent_index}-batch"),
                        streams.get(f"agent{agent.agent_index}-noise"))
                last_losses = losses
        row = EpisodeRow(episode, float(rewards.mean()), **last_losses)
        rows.append(row)
        if episode_callback is not None:
            episode_callback(row)
        if (out_dir is not None and tc.checkpoint_every
                and (episode + 1) % tc.checkpoint_every == 0):
            _save_train_state(out_dir, agents, episode + 1, global_step)
    if out_dir is not None:
        _save_train_state(out_dir, agents, tc.episodes, global_step)
    return agents, rows


def _state_path(out_dir: Path) -> Path:
    return out_dir / "train_state.npz"


def save_agents(out_dir: Path, agents: list[SacAgent]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for agent in agents:
        agent.save(out_dir / f"agent{agent.agent_index}.ckpt")


def _save_train_state(out_dir: Path, agents: list[SacAgent],
                      episode: int, global_step: int) -> None:
    save_agents(out_dir, agents)
    payload = {"progress": np.array([episode, global_step])}
    for agent in agents:
        for key, arr in agent.buffer.state_dict().items():
            payload[f"agent{agent.agent_index}/{key}"] = arr
    np.savez(_state_path(out_dir), **payload)


def _load_train_state(out_dir: Path, agents: list[SacAgent]) -> tuple[int, int]:
    state_path = _state_path(out_dir)
    if not state_path.exists():
        raise MissingArtifactError(f"no training state at {state_path}")
    data = np.load(state_path)
    for agent in agents:
        agent.load(out_dir / f"agent{agent.agent_index}.ckpt")
        prefix = f"agent{agent.agent_index}/"
        agent.buffer.load_state({
            key[len(prefix):]: data[key] for key in data.files
            if key.startswith(prefix)
        })
    episode, global_step = (int(v) for v in data["progress"])
    return episode, global_step


# -- evaluation as a precoder ---------------------------------------------------

def agents_precoder(agents: list[SacAgent], err: ErrorConfig):
    """Wrap trained agents as a deterministic precoder callable."""
    cfg = agents[0].cfg

    def precoder(views: list[CsitView]) -> PrecodingMatrix:
        precodings = []
        for agent, view in zip(agents, views):
            _, action, _ = agent.act(view, train=False)
            precodings.append(agent.action_to_precoding(action, view, err))
        return _assemble(agents, precodings, cfg)

    return precoder


def load_agents(checkpoint_dir: str | Path, cfg: ScenarioConfig,
                train_cfg: TrainConfig | None = None) -> list[SacAgent]:
    """Rebuild agents from a checkpoint directory, validating shapes."""
    checkpoint_dir = Path(checkpoint_dir)
    paths = sorted(checkpoint_dir.glob("agent*.ckpt"))
    if not paths:
        raise MissingArtifactError(
            f"no agent checkpoints under {checkpoint_dir}")
    metas = [read_checkpoint(p)[0] for p in paths]
    meta = metas[0]
    hidden = tuple(meta["actor_spec"]["layer_sizes"][1:-1])
    base = train_cfg if train_cfg is not None else TrainConfig()
    tc = dataclasses.replace(
        base,
        hidden_sizes=hidden,
        batch_norm=meta["actor_spec"]["batch_norm"],
        actor_activation=meta["actor_spec"]["hidden_activation"],
        critic_activation=meta["critic_spec"]["hidden_activation"],
        view_mode=meta["view_mode"],
        hybrid=meta["hybrid"],
    )
    agents = build_agents(cfg, tc, master_seed=0)
    if len(agents) != len(paths):
        raise CheckpointError(
            f"expected {len(agents)} agent checkpoints, found {len(paths)}")
    for agent, path in zip(agents, paths):
        agent.load(path)
    return agents


def load_learned_precoder(name: str, cfg: ScenarioConfig, err: ErrorConfig,
                          checkpoint_dir: str | Path):
    """Registry hook: (callable, view mode) for 'sac' / 'sac-hybrid'."""
    if checkpoint_dir is None:
        raise MissingArtifactError(f"precoder {name!r} needs a checkpoint dir")
    agents = load_agents(checkpoint_dir, cfg)
    is_hybrid = agents[0].hybrid != "none"
    if name == "sac-hybrid" and not is_hybrid:
        raise CheckpointError("checkpoint does not hold a hybrid agent")
    if name == "sac" and is_hybrid:
        raise CheckpointError("checkpoint holds a hybrid agent; use sac-hybrid")
    return agents_precoder(agents, err), agents[0].view_mode
