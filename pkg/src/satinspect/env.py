"""Inspection episode lifecycle: randomized reset, stepping, reward, termination.

Each step propagates the deputy, advances the sun, marks newly inspected
points, refreshes the uninspected-points sensor when its inputs changed,
scores the step, and checks the termination conditions in priority order.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, replace
from typing import Optional, Protocol

import numpy as np

from .dynamics import (
    DynamicsParams,
    HillState,
    ThrustCommand,
    build_transition,
    delta_v,
    propagate,
)
from .geometry import (
    NUM_POINTS,
    TWO_PI,
    ChiefModel,
    PointStatus,
    SunState,
    advance_sun,
    generate_points,
    illuminated_mask,
    sun_direction,
    update_inspected,
)
from .sensors import ClusterState, ObsConfig, Observation, assemble, ups_sensor

CRASH_DISTANCE = 15.0  # m, chief radius 10 plus deputy radius 5
MAX_DISTANCE = 800.0  # m
MAX_STEPS = 1223  # two apparent sun revolutions

REWARD_PER_POINT = 0.1
CRASH_PENALTY = -1.0

W_INITIAL = 0.001
W_MIN = 0.001
W_MAX = 0.1
W_STEP = 0.00005
W_RAISE_ABOVE = 0.90  # raise w when mean inspected fraction exceeds this
W_LOWER_BELOW = 0.80  # lower w when it drops below this
W_EVALUATION = 0.1

SUN_EXCLUSION_COS = np.cos(np.radians(30.0))  # boresight-sun separation limit at reset

TRACE_HEADER = [
    "step_index",
    "x",
    "y",
    "z",
    "xdot",
    "ydot",
    "zdot",
    "fx",
    "fy",
    "fz",
    "reward",
    "newly_inspected",
    "sun_angle",
    "done_reason",
]


class DoneReason(enum.Enum):
    ALL_INSPECTED = "all_inspected"
    CRASH = "crash"
    OUT_OF_BOUNDS = "out_of_bounds"
    TIMEOUT = "timeout"


class Mode(enum.Enum):
    TRAINING = "training"
    EVALUATION = "evaluation"


@dataclass(frozen=True)
class RewardWeightState:
    """Fuel-penalty multiplier; evaluation pins it to 0.1."""

    w: float = W_INITIAL
    mode: Mode = Mode.TRAINING

    def __post_init__(self) -> None:
        if self.mode is Mode.EVALUATION:
            object.__setattr__(self, "w", W_EVALUATION)
        elif not W_MIN <= self.w <= W_MAX:
            raise ValueError(f"w must lie in [{W_MIN}, {W_MAX}]")


def update_reward_weight(weights: RewardWeightState, fraction: float) -> RewardWeightState:
    """Adapt w from the mean inspected fraction of the previous iteration."""
    if weights.mode is not Mode.TRAINING:
        raise ValueError("reward weight only adapts in training mode")
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    w = weights.w
    if fraction > W_RAISE_ABOVE:
        w += W_STEP
    elif fraction < W_LOWER_BELOW:
        w -= W_STEP
    return replace(weights, w=min(max(w, W_MIN), W_MAX))


@dataclass(frozen=True)
class InitSample:
    """Raw draws behind one episode initialization."""

    sun_angle: float
    radius: float
    azimuth: float
    elevation: float
    speed: float
    vel_azimuth: float
    vel_elevation: float
    negated: bool


def spherical_to_cartesian(magnitude: float, azimuth: float, elevation: float) -> np.ndarray:
    """Map (r, psi, phi) to (r cos psi cos phi, r sin psi cos phi, r sin phi)."""
    cos_el = np.cos(elevation)
    return magnitude * np.array(
        [np.cos(azimuth) * cos_el, np.sin(azimuth) * cos_el, np.sin(elevation)]
    )


def draw_init_sample(rng: np.random.Generator) -> InitSample:
    """Draw the episode initialization uniformly; draw order is fixed."""
    sun_angle = rng.uniform(0.0, TWO_PI)
    radius = rng.uniform(50.0, 100.0)
    azimuth = rng.uniform(0.0, TWO_PI)
    elevation = rng.uniform(-np.pi / 2, np.pi / 2)
    speed = rng.uniform(0.0, 0.3)
    vel_azimuth = rng.uniform(0.0, TWO_PI)
    vel_elevation = rng.uniform(-np.pi / 2, np.pi / 2)
    position = spherical_to_cartesian(radius, azimuth, elevation)
    boresight = -position / np.linalg.norm(position)
    sun = sun_direction(SunState(angle=sun_angle))
    negated = bool(np.dot(boresight, sun) > SUN_EXCLUSION_COS)
    return InitSample(
        sun_angle=sun_angle,
        radius=radius,
        azimuth=azimuth,
        elevation=elevation,
        speed=speed,
        vel_azimuth=vel_azimuth,
        vel_elevation=vel_elevation,
        negated=negated,
    )


def initial_state_from_sample(sample: InitSample) -> tuple[HillState, SunState]:
    """Materialize the deputy state and sun angle from one init sample.

    Positions whose boresight (deputy toward chief) falls within 30 degrees
    of the sun are negated; the velocity draw is untouched.
    """
    position = spherical_to_cartesian(sample.radius, sample.azimuth, sample.elevation)
    if sample.negated:
        position = -position
    velocity = spherical_to_cartesian(sample.speed, sample.vel_azimuth, sample.vel_elevation)
    return HillState(position=position, velocity=velocity), SunState(angle=sample.sun_angle)


@dataclass
class EpisodeState:
    """Mutable per-episode state owned by one environment instance."""

    dynamics: HillState
    sun: SunState
    status: PointStatus
    clusters: ClusterState
    step_index: int = 0
    cumulative_delta_v: float = 0.0
    total_reward: float = 0.0
    done: Optional[DoneReason] = None
    lit_mask: np.ndarray | None = None
    ups_fallback: np.ndarray | None = None


def check_termination(state: EpisodeState, num_points: int = NUM_POINTS) -> Optional[DoneReason]:
    """First matching condition in priority order, or None."""
    distance = float(np.linalg.norm(state.dynamics.position))
    if state.status.count == num_points:
        return DoneReason.ALL_INSPECTED
    if distance < CRASH_DISTANCE:
        return DoneReason.CRASH
    if distance > MAX_DISTANCE:
        return DoneReason.OUT_OF_BOUNDS
    if state.step_index >= MAX_STEPS:
        return DoneReason.TIMEOUT
    return None


def step_reward(newly_inspected: int, step_delta_v: float, crashed: bool, w: float) -> float:
    """Inspection bonus minus weighted fuel use, minus the crash penalty."""
    reward = REWARD_PER_POINT * newly_inspected - w * step_delta_v
    if crashed:
        reward += CRASH_PENALTY
    return reward


@dataclass(frozen=True)
class EpisodeMetrics:
    total_reward: float
    inspected_points: int
    episode_length: int
    success: bool
    delta_v: float
    done_reason: str


class Policy(Protocol):
    def act(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Map an observation vector to a per-axis force vector."""


class ZeroThrustPolicy:
    """Coast: never fires a thruster."""

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return np.zeros(3)


class RandomPolicy:
    """Uniform over the 27 joint thrust choices."""

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        from .dynamics import FORCE_LEVELS

        return np.array([FORCE_LEVELS[i] for i in rng.integers(0, 3, size=3)])


class InspectionEnv:
    """One deputy inspecting one chief; owns a single episode at a time."""

    def __init__(
        self,
        obs_config: ObsConfig,
        rng: np.random.Generator,
        params: DynamicsParams | None = None,
        chief: ChiefModel | None = None,
        weights: RewardWeightState | None = None,
    ):
        self.obs_config = obs_config
        self.params = params if params is not None else DynamicsParams()
        self.chief = chief if chief is not None else generate_points()
        self.weights = weights if weights is not None else RewardWeightState()
        self._rng = rng
        self._transition = build_transition(self.params)
        self._state: EpisodeState | None = None

    @property
    def state(self) -> EpisodeState:
        if self._state is None:
            raise RuntimeError("environment has not been reset")
        return self._state

    def set_reward_weight(self, weights: RewardWeightState) -> None:
        self.weights = weights

    def reset(self) -> tuple[EpisodeState, Observation]:
        sample = draw_init_sample(self._rng)
        dynamics, sun = initial_state_from_sample(sample)
        status = PointStatus.fresh(self.chief.num_points)
        clusters, ups_vec = ups_sensor(
            ClusterState(), status, self.chief, sun, trigger=True, deputy_pos=dynamics.position
        )
        state = EpisodeState(
            dynamics=dynamics,
            sun=sun,
            status=status,
            clusters=clusters,
            lit_mask=illuminated_mask(self.chief, sun),
        )
        self._state = state
        return state, self._observe(state, ups_vec)

    def step(self, action: ThrustCommand | np.ndarray) -> tuple[EpisodeState, Observation, float, Optional[DoneReason]]:
        state = self.state
        if state.done is not None:
            raise RuntimeError(f"episode already terminated ({state.done.value})")
        cmd = action if isinstance(action, ThrustCommand) else ThrustCommand(force=np.asarray(action))

        state.dynamics = propagate(state.dynamics, cmd, self._transition)
        state.sun = advance_sun(state.sun, self.params)
        state.status, newly = update_inspected(
            state.status, self.chief, state.dynamics.position, state.sun
        )
        lit = illuminated_mask(self.chief, state.sun)
        trigger = newly > 0 or not np.array_equal(lit, state.lit_mask)
        state.lit_mask = lit
        ups_vec = state.clusters.target
        if self.obs_config.use_ups:
            state.clusters, ups_vec = ups_sensor(
                state.clusters,
                state.status,
                self.chief,
                state.sun,
                trigger=trigger,
                deputy_pos=state.dynamics.position,
            )

        step_dv = delta_v(cmd, self.params)
        state.cumulative_delta_v += step_dv
        state.step_index += 1
        reason = check_termination(state, self.chief.num_points)
        reward = step_reward(newly, step_dv, reason is DoneReason.CRASH, self.weights.w)
        state.total_reward += reward
        state.done = reason
        obs = self._observe(state, ups_vec)
        return state, obs, reward, reason

    def _observe(self, state: EpisodeState, ups_vec: np.ndarray) -> Observation:
        try:
            obs = assemble(
                self.obs_config,
                state.dynamics,
                state.status,
                state.sun,
                ups_vec=ups_vec if self.obs_config.use_ups else None,
                radius=self.chief.radius,
            )
        except ValueError:
            # deputy sitting exactly on the cluster surface point: fall back
            # to the last cluster direction that produced a valid segment
            if state.ups_fallback is None:
                raise
            obs = assemble(
                self.obs_config,
                state.dynamics,
                state.status,
                state.sun,
                ups_vec=state.ups_fallback,
                radius=self.chief.radius,
            )
            return obs
        if self.obs_config.use_ups:
            state.ups_fallback = ups_vec
        return obs


@dataclass
class TraceRow:
    step_index: int
    state: HillState
    force: np.ndarray
    reward: float
    newly_inspected: int
    sun_angle: float
    done_reason: str


def run_episode(
    env: InspectionEnv,
    policy: Policy,
    action_rng: np.random.Generator,
    trace: list[TraceRow] | None = None,
) -> EpisodeMetrics:
    """Play one full episode; optionally record a per-step trace."""
    state, obs = env.reset()
    prev_count = 0
    while state.done is None:
        force = policy.act(obs.values, action_rng)
        state, obs, reward, done = env.step(force)
        if trace is not None:
            trace.append(
                TraceRow(
                    step_index=state.step_index,
                    state=state.dynamics,
                    force=np.asarray(force, dtype=float),
                    reward=reward,
                    newly_inspected=state.status.count - prev_count,
                    sun_angle=state.sun.angle,
                    done_reason=done.value if done else "",
                )
            )
        prev_count = state.status.count
    return EpisodeMetrics(
        total_reward=state.total_reward,
        inspected_points=state.status.count,
        episode_length=state.step_index,
        success=state.done is DoneReason.ALL_INSPECTED,
        delta_v=state.cumulative_delta_v,
        done_reason=state.done.value,
    )


def evaluate_policy(
    policy: Policy,
    obs_config: ObsConfig,
    env_rng: np.random.Generator,
    action_rng: np.random.Generator,
    episodes: int = 100,
    params: DynamicsParams | None = None,
    chief: ChiefModel | None = None,
) -> list[EpisodeMetrics]:
    """Run fresh episodes with the evaluation reward weight (w = 0.1)."""
    env = InspectionEnv(
        obs_config,
        rng=env_rng,
        params=params,
        chief=chief,
        weights=RewardWeightState(mode=Mode.EVALUATION),
    )
    return [run_episode(env, policy, action_rng) for _ in range(episodes)]


def write_trace(path, rows: list[TraceRow]) -> None:
    """Write an episode trace as CSV with the fixed header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for row in rows:
            writer.writerow(
                [row.step_index]
                + [repr(float(v)) for v in row.state.position]
                + [repr(float(v)) for v in row.state.velocity]
                + [repr(float(v)) for v in row.force]
                + [
                    repr(float(row.reward)),
                    row.newly_inspected,
                    repr(float(row.sun_angle)),
                    row.done_reason,
                ]
            )
