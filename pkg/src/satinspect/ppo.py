"""PPO training loop: fixed-length rollouts, GAE, clipped surrogate with an
adaptive KL penalty, and clipped value loss.

One training iteration collects exactly one rollout fragment from a single
persistent environment (episodes continue across fragment boundaries), runs
the configured number of full-batch SGD passes, adapts the KL coefficient,
and feeds the fuel-penalty weight schedule with the episodes that finished
during the iteration.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch

from .dynamics import FORCE_LEVELS, DynamicsParams
from .env import (
    EpisodeMetrics,
    InspectionEnv,
    Mode,
    RewardWeightState,
    update_reward_weight,
)
from .geometry import generate_points
from .policy import PolicyValueNet, init_parameters, sample_action, save_checkpoint
from .sensors import ObsConfig, get_config


class TrainingDivergedError(RuntimeError):
    """The PPO loss became non-finite."""


# Named sub-streams derived from the master seed; adding consumers on one
# stream never perturbs the draws of another.
STREAM_ENV = 0
STREAM_POLICY_INIT = 1
STREAM_ACTIONS = 2
STREAM_EVAL_ENV = 3
STREAM_EVAL_ACTIONS = 4
STREAM_TRACE = 5


def derive_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for one named stream of a master seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


@dataclass(frozen=True)
class PPOConfig:
    """Training hyperparameters; defaults follow the experiment protocol."""

    sgd_iters: int = 30
    gamma: float = 0.99
    gae_lambda: float = 0.928544
    max_episode_len: int = 1223
    rollout_fragment: int = 1500
    train_batch: int = 1500
    minibatch: int = 1500
    total_timesteps: int = 5_000_000
    lr: float = 5e-5
    kl_coeff_init: float = 0.2
    kl_target: float = 0.01
    vf_loss_coeff: float = 1.0
    entropy_coeff: float = 0.0
    clip: float = 0.3
    vf_clip: float = 10.0
    hidden: tuple[int, ...] = (256, 256)
    normalize_advantages: bool = True
    use_clip: bool = True
    use_kl_penalty: bool = True
    checkpoint_interval: int = 200  # iterations between checkpoints

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


def config_hash(payload: dict) -> str:
    """Stable hash of a JSON-serializable configuration."""
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


@dataclass
class RolloutBatch:
    """One fragment of experience plus its advantage targets."""

    observations: np.ndarray  # (T, obs_dim) float32
    actions: np.ndarray  # (T, 3) int64 choice indices
    log_probs: np.ndarray  # (T,) float64, joint log-prob at collection time
    logits: np.ndarray  # (T, 3, 3) float32, behavior-policy logits
    rewards: np.ndarray  # (T,) float64
    values: np.ndarray  # (T,) float64
    dones: np.ndarray  # (T,) bool
    bootstrap_value: float  # value of the observation after the last step
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None


def gae_advantages(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    gamma: float,
    lam: float,
    bootstrap_value: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over one fragment.

    delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t, accumulated with
    factor gamma*lam and restarted at episode boundaries; the value after
    the final step enters through bootstrap_value. Returns are A + V.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    n = rewards.shape[0]
    advantages = np.zeros(n)
    next_value = float(bootstrap_value)
    running = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        advantages[t] = running
        next_value = values[t]
    return advantages, advantages + values


class RolloutCollector:
    """Owns one environment and cuts its experience into fixed fragments."""

    def __init__(self, env: InspectionEnv, action_rng: np.random.Generator):
        self.env = env
        self.action_rng = action_rng
        self._obs: np.ndarray | None = None
        self.total_steps = 0

    def collect(self, net: PolicyValueNet, steps: int) -> tuple[RolloutBatch, list[EpisodeMetrics]]:
        obs_dim = self.env.obs_config.obs_dim
        if net.input_dim != obs_dim:
            raise ValueError(
                f"policy input dim {net.input_dim} does not match observation dim {obs_dim}"
            )
        observations = np.zeros((steps, obs_dim), dtype=np.float32)
        actions = np.zeros((steps, 3), dtype=np.int64)
        log_probs = np.zeros(steps)
        logits_all = np.zeros((steps, 3, 3), dtype=np.float32)
        rewards = np.zeros(steps)
        values = np.zeros(steps)
        dones = np.zeros(steps, dtype=bool)
        completed: list[EpisodeMetrics] = []

        if self._obs is None:
            _, obs = self.env.reset()
            self._obs = obs.values.astype(np.float32)

        for t in range(steps):
            obs_t = self._obs
            with torch.no_grad():
                logits, value = net(torch.from_numpy(obs_t))
                log_softmax = torch.log_softmax(logits, dim=-1)
            probs = torch.exp(log_softmax).numpy().astype(np.float64)
            idx = sample_action(probs, self.action_rng)
            force = np.array([FORCE_LEVELS[i] for i in idx])
            state, obs, reward, done = self.env.step(force)

            observations[t] = obs_t
            actions[t] = idx
            log_probs[t] = float(log_softmax.numpy()[np.arange(3), idx].sum())
            logits_all[t] = logits.numpy()
            rewards[t] = reward
            values[t] = float(value)
            dones[t] = done is not None
            self.total_steps += 1

            if done is not None:
                completed.append(
                    EpisodeMetrics(
                        total_reward=state.total_reward,
                        inspected_points=state.status.count,
                        episode_length=state.step_index,
                        success=state.done.value == "all_inspected",
                        delta_v=state.cumulative_delta_v,
                        done_reason=state.done.value,
                    )
                )
                _, obs = self.env.reset()
            self._obs = obs.values.astype(np.float32)

        if dones[-1]:
            bootstrap = 0.0
        else:
            with torch.no_grad():
                _, tail_value = net(torch.from_numpy(self._obs))
            bootstrap = float(tail_value)
        batch = RolloutBatch(
            observations=observations,
            actions=actions,
            log_probs=log_probs,
            logits=logits_all,
            rewards=rewards,
            values=values,
            dones=dones,
            bootstrap_value=bootstrap,
        )
        return batch, completed


def collect_rollout(
    net: PolicyValueNet, collector: RolloutCollector, config: PPOConfig
) -> tuple[RolloutBatch, list[EpisodeMetrics]]:
    """Collect one fragment and attach (optionally normalized) GAE targets."""
    batch, completed = collector.collect(net, config.rollout_fragment)
    advantages, returns = gae_advantages(
        batch.rewards,
        batch.values,
        batch.dones,
        config.gamma,
        config.gae_lambda,
        batch.bootstrap_value,
    )
    batch.returns = returns
    if config.normalize_advantages:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
    batch.advantages = advantages
    return batch, completed


def compute_ppo_loss(
    net: PolicyValueNet,
    observations: torch.Tensor,
    actions: torch.Tensor,
    old_log_probs: torch.Tensor,
    old_logits: torch.Tensor,
    advantages: torch.Tensor,
    returns: torch.Tensor,
    config: PPOConfig,
    kl_coeff: float,
) -> tuple[torch.Tensor, dict]:
    """Clipped surrogate + KL penalty + clipped value loss (+ entropy term)."""
    logits, values = net(observations)
    log_probs = net.log_prob(logits, actions)
    ratio = torch.exp(log_probs - old_log_probs)
    if config.use_clip:
        clipped = torch.clamp(ratio, 1.0 - config.clip, 1.0 + config.clip)
        surrogate = torch.minimum(ratio * advantages, clipped * advantages).mean()
    else:
        surrogate = (ratio * advantages).mean()

    new_log_softmax = torch.log_softmax(logits, dim=-1)
    old_log_softmax = torch.log_softmax(old_logits, dim=-1)
    old_probs = torch.exp(old_log_softmax)
    kl = (old_probs * (old_log_softmax - new_log_softmax)).sum(dim=(-2, -1)).mean()

    vf_errors = (values - returns) ** 2
    vf_loss = torch.clamp(vf_errors, max=config.vf_clip).mean()

    entropy = -(torch.exp(new_log_softmax) * new_log_softmax).sum(dim=(-2, -1)).mean()

    loss = -surrogate + config.vf_loss_coeff * vf_loss - config.entropy_coeff * entropy
    if config.use_kl_penalty:
        loss = loss + kl_coeff * kl
    parts = {
        "policy_loss": float(-surrogate.detach()),
        "vf_loss": float(vf_loss.detach()),
        "kl": float(kl.detach()),
        "entropy": float(entropy.detach()),
    }
    return loss, parts


def adapt_kl_coeff(kl_coeff: float, measured_kl: float, target: float) -> float:
    """Standard adaptive rule: x1.5 when KL > 2*target, x0.5 when KL < target/2."""
    if measured_kl > 2.0 * target:
        return kl_coeff * 1.5
    if measured_kl < target / 2.0:
        return kl_coeff * 0.5
    return kl_coeff


def ppo_update(
    net: PolicyValueNet,
    optimizer: torch.optim.Optimizer,
    batch: RolloutBatch,
    config: PPOConfig,
    kl_coeff: float,
) -> tuple[dict, float]:
    """Run the configured SGD passes over the fragment; adapt the KL coeff."""
    observations = torch.from_numpy(batch.observations)
    actions = torch.from_numpy(batch.actions)
    old_log_probs = torch.from_numpy(batch.log_probs.astype(np.float32))
    old_logits = torch.from_numpy(batch.logits)
    advantages = torch.from_numpy(batch.advantages.astype(np.float32))
    returns = torch.from_numpy(batch.returns.astype(np.float32))

    parts: dict = {}
    for _ in range(config.sgd_iters):
        loss, parts = compute_ppo_loss(
            net, observations, actions, old_log_probs, old_logits, advantages, returns,
            config, kl_coeff,
        )
        if not torch.isfinite(loss):
            raise TrainingDivergedError(f"non-finite PPO loss: {parts}")
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

    with torch.no_grad():
        _, parts = compute_ppo_loss(
            net, observations, actions, old_log_probs, old_logits, advantages, returns,
            config, kl_coeff,
        )
    new_coeff = adapt_kl_coeff(kl_coeff, parts["kl"], config.kl_target)
    stats = dict(parts)
    stats["kl_coeff"] = new_coeff
    return stats, new_coeff


@dataclass
class TrainResult:
    """Outcome of one seeded training run."""

    config_name: str
    seed: int
    rows: list[dict] = field(default_factory=list)
    net: PolicyValueNet | None = None
    final_weight: float | None = None


def _mean(values: list[float]) -> float:
    return float(np.mean(values)) if values else float("nan")


def train(
    config_name: str,
    seed: int,
    config: PPOConfig | None = None,
    params: DynamicsParams | None = None,
    on_iteration: Optional[Callable[[dict], None]] = None,
    checkpoint_dir: str | Path | None = None,
    checkpoint_manifest: dict | None = None,
) -> TrainResult:
    """Train one seed of one observation configuration.

    Deterministic for a fixed (config_name, seed, config): all draws come
    from named sub-streams of the seed and torch runs single-threaded.
    """
    config = config or PPOConfig()
    obs_config = get_config(config_name)
    torch.set_num_threads(1)

    env = InspectionEnv(
        obs_config,
        rng=derive_rng(seed, STREAM_ENV),
        params=params,
        chief=generate_points(),
        weights=RewardWeightState(mode=Mode.TRAINING),
    )
    net = PolicyValueNet(obs_config.obs_dim, hidden=config.hidden)
    init_parameters(net, derive_rng(seed, STREAM_POLICY_INIT))
    optimizer = torch.optim.Adam(net.parameters(), lr=config.lr)
    collector = RolloutCollector(env, derive_rng(seed, STREAM_ACTIONS))

    result = TrainResult(config_name=config_name, seed=seed, net=net)
    kl_coeff = config.kl_coeff_init
    iteration = 0
    while collector.total_steps < config.total_timesteps:
        iteration += 1
        batch, completed = collect_rollout(net, collector, config)
        stats, kl_coeff = ppo_update(net, optimizer, batch, config, kl_coeff)

        if completed:
            fraction = _mean([m.inspected_points / env.chief.num_points for m in completed])
            env.set_reward_weight(update_reward_weight(env.weights, fraction))
        row = {
            "iteration": iteration,
            "timesteps": collector.total_steps,
            "episodes": len(completed),
            "reward_mean": _mean([m.total_reward for m in completed]),
            "inspected_mean": _mean([m.inspected_points for m in completed]),
            "length_mean": _mean([m.episode_length for m in completed]),
            "success_rate": _mean([1.0 if m.success else 0.0 for m in completed]),
            "delta_v_mean": _mean([m.delta_v for m in completed]),
            "reward_weight": env.weights.w,
            "policy_loss": stats["policy_loss"],
            "vf_loss": stats["vf_loss"],
            "kl": stats["kl"],
            "kl_coeff": stats["kl_coeff"],
            "entropy": stats["entropy"],
        }
        result.rows.append(row)
        if on_iteration is not None:
            on_iteration(row)
        if checkpoint_dir is not None and iteration % config.checkpoint_interval == 0:
            _save(net, Path(checkpoint_dir) / f"iter_{iteration:06d}", iteration,
                  collector.total_steps, checkpoint_manifest)

    result.final_weight = env.weights.w
    if checkpoint_dir is not None:
        _save(net, Path(checkpoint_dir) / "final", iteration, collector.total_steps,
              checkpoint_manifest)
    return result


def _save(net, directory, iteration, timesteps, extra):
    manifest = {"iteration": iteration, "timesteps": timesteps}
    manifest.update(extra or {})
    save_checkpoint(net, directory, manifest)
