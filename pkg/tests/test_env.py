"""Episode lifecycle: reset geometry, reward accounting, termination, traces."""

import math

import numpy as np
import pytest

from satinspect.dynamics import DynamicsParams, HillState, ThrustCommand
from satinspect.env import (
    CRASH_DISTANCE,
    MAX_DISTANCE,
    MAX_STEPS,
    DoneReason,
    EpisodeState,
    InitSample,
    InspectionEnv,
    Mode,
    RandomPolicy,
    RewardWeightState,
    TRACE_HEADER,
    ZeroThrustPolicy,
    check_termination,
    draw_init_sample,
    evaluate_policy,
    initial_state_from_sample,
    run_episode,
    spherical_to_cartesian,
    step_reward,
    update_reward_weight,
    write_trace,
)
from satinspect.geometry import PointStatus, SunState, generate_points, sun_direction
from satinspect.ppo import STREAM_ACTIONS, STREAM_ENV, derive_rng
from satinspect.sensors import ClusterState, get_config


def sample(**overrides):
    base = dict(
        sun_angle=0.0,
        radius=75.0,
        azimuth=0.0,
        elevation=0.0,
        speed=0.0,
        vel_azimuth=0.0,
        vel_elevation=0.0,
        negated=False,
    )
    base.update(overrides)
    return InitSample(**base)


def make_env(name="all_sensors", seed=0, weights=None):
    return InspectionEnv(get_config(name), rng=derive_rng(seed, STREAM_ENV), weights=weights)


def test_spherical_map_examples():
    assert np.allclose(spherical_to_cartesian(75.0, 0.0, 0.0), [75.0, 0.0, 0.0], atol=1e-12)
    assert np.allclose(spherical_to_cartesian(75.0, 0.0, math.pi / 2), [0.0, 0.0, 75.0],
                       atol=1e-9)
    out = spherical_to_cartesian(2.0, math.pi / 4, math.pi / 3)
    assert out[2] == pytest.approx(2.0 * math.sin(math.pi / 3))


def test_initial_state_negation_case():
    # sun at pi means the boresight (-x) points straight at the sun: negate
    state, sun = initial_state_from_sample(sample(sun_angle=math.pi, negated=True))
    assert np.allclose(state.position, [-75.0, 0.0, 0.0], atol=1e-12)
    assert sun.angle == pytest.approx(math.pi)


def test_draw_init_sample_flags_sun_pointing():
    rng = np.random.default_rng(0)
    seen_negated = False
    for _ in range(300):
        s = draw_init_sample(rng)
        state, sun = initial_state_from_sample(s)
        boresight = -state.position / np.linalg.norm(state.position)
        cos_angle = float(boresight @ sun_direction(sun))
        # after negation no boresight may fall within 30 degrees of the sun
        assert cos_angle <= math.cos(math.radians(30.0)) + 1e-12
        seen_negated = seen_negated or s.negated
        assert 50.0 <= np.linalg.norm(state.position) <= 100.0
        assert np.linalg.norm(state.velocity) <= 0.3 + 1e-12
    assert seen_negated


def test_reset_clears_state_and_builds_observation():
    env = make_env("all_sensors", seed=4)
    state, obs = env.reset()
    assert state.step_index == 0
    assert state.status.count == 0
    assert state.cumulative_delta_v == 0.0
    assert state.done is None
    assert obs.values.shape == (11,)
    assert np.linalg.norm(obs.segment("ups")) == pytest.approx(1.0, abs=1e-9)
    assert 0.5 <= np.linalg.norm(obs.segment("position")) <= 1.0


def test_step_reward_examples():
    assert step_reward(0, 0.0, False, 0.001) == 0.0
    assert step_reward(5, 0.25, False, 0.001) == pytest.approx(0.49975, abs=1e-12)
    assert step_reward(0, 0.25, True, 0.1) == pytest.approx(-1.025, abs=1e-12)


def test_zero_thrust_no_new_points_gives_zero_reward():
    env = make_env("no_sensors", seed=1)
    env.reset()
    state = env.state
    state.status, _ = state.status.mark(np.ones_like(state.status.flags))
    _, _, reward, done = env.step(np.zeros(3))
    assert reward == 0.0
    assert done is DoneReason.ALL_INSPECTED


def test_crash_step_reward_and_priority():
    env = make_env("no_sensors", seed=2)
    env.reset()
    env.state.dynamics = HillState(position=np.array([16.0, 0.0, 0.0]),
                                   velocity=np.array([-0.25, 0.0, 0.0]))
    state, obs, reward, done = env.step(np.array([-0.1, 0.0, 0.0]))
    assert done is DoneReason.CRASH
    assert np.linalg.norm(state.dynamics.position) < CRASH_DISTANCE
    newly = state.status.count
    dv = 0.1 / 12.0 * 10.0
    assert reward == pytest.approx(0.1 * newly - env.weights.w * dv - 1.0, abs=1e-12)


def test_step_after_done_rejected():
    env = make_env("no_sensors", seed=3)
    env.reset()
    env.state.done = DoneReason.TIMEOUT
    with pytest.raises(RuntimeError, match="terminated"):
        env.step(np.zeros(3))


def termination_state(count, distance, step_index):
    chief = generate_points()
    flags = np.zeros(chief.num_points, dtype=bool)
    flags[:count] = True
    return EpisodeState(
        dynamics=HillState(position=np.array([distance, 0.0, 0.0]), velocity=np.zeros(3)),
        sun=SunState(0.0),
        status=PointStatus(flags=flags),
        clusters=ClusterState(),
        step_index=step_index,
    )


def test_check_termination_priority_order():
    assert check_termination(termination_state(99, 14.0, 5)) is DoneReason.ALL_INSPECTED
    assert check_termination(termination_state(50, 14.0, 5)) is DoneReason.CRASH
    assert check_termination(termination_state(50, 801.0, 5)) is DoneReason.OUT_OF_BOUNDS
    assert check_termination(termination_state(98, 100.0, MAX_STEPS)) is DoneReason.TIMEOUT
    assert check_termination(termination_state(98, 100.0, 5)) is None
    assert MAX_DISTANCE == 800.0 and MAX_STEPS == 1223


def test_reward_weight_schedule():
    w = RewardWeightState()
    assert w.w == 0.001
    assert update_reward_weight(w, 0.92).w == pytest.approx(0.00105, abs=1e-12)
    assert update_reward_weight(w, 0.75).w == 0.001  # clamped at the floor
    mid = RewardWeightState(w=0.05)
    assert update_reward_weight(mid, 0.85).w == 0.05  # dead zone
    top = RewardWeightState(w=0.1)
    assert update_reward_weight(top, 0.95).w == 0.1  # clamped at the ceiling
    with pytest.raises(ValueError):
        update_reward_weight(RewardWeightState(mode=Mode.EVALUATION), 0.5)
    with pytest.raises(ValueError):
        update_reward_weight(w, 1.5)


def test_evaluation_mode_pins_weight():
    weights = RewardWeightState(w=0.003, mode=Mode.EVALUATION)
    assert weights.w == 0.1


def test_episode_reward_decomposition():
    env = make_env("all_sensors", seed=8, weights=RewardWeightState(mode=Mode.EVALUATION))
    policy = RandomPolicy()
    rng = derive_rng(8, STREAM_ACTIONS)
    for _ in range(5):
        metrics = run_episode(env, policy, rng)
        crash_term = 1.0 if metrics.done_reason == "crash" else 0.0
        expected = 0.1 * metrics.inspected_points - 0.1 * metrics.delta_v - crash_term
        assert metrics.total_reward == pytest.approx(expected, abs=1e-9)
        assert metrics.episode_length <= MAX_STEPS
        if metrics.success:
            assert metrics.inspected_points == 99


def test_determinism_same_seed_same_trajectory():
    def collect(seed):
        env = make_env("sun_angle_ups", seed=seed)
        rng = derive_rng(seed, STREAM_ACTIONS)
        env.reset()
        rows = []
        policy = RandomPolicy()
        state, obs = env.reset()
        while state.done is None:
            force = policy.act(obs.values, rng)
            state, obs, reward, _ = env.step(force)
            rows.append((obs.values.copy(), reward))
        return rows

    first = collect(123)
    second = collect(123)
    assert len(first) == len(second)
    for (obs1, r1), (obs2, r2) in zip(first, second):
        assert np.array_equal(obs1, obs2)
        assert r1 == r2


def test_evaluate_zero_thrust_policy():
    metrics = evaluate_policy(
        ZeroThrustPolicy(),
        get_config("no_sensors"),
        env_rng=derive_rng(42, 3),
        action_rng=derive_rng(42, 4),
        episodes=20,
    )
    assert len(metrics) == 20
    assert all(m.delta_v == 0.0 for m in metrics)
    assert np.mean([m.success for m in metrics]) < 0.05


def test_evaluate_random_policy_baseline():
    metrics = evaluate_policy(
        RandomPolicy(),
        get_config("all_sensors"),
        env_rng=derive_rng(7, 3),
        action_rng=derive_rng(7, 4),
        episodes=50,
    )
    assert np.mean([m.success for m in metrics]) < 0.05
    assert np.mean([m.delta_v for m in metrics]) > 10.0


def test_trace_written_with_contract(tmp_path):
    env = make_env("all_sensors", seed=5, weights=RewardWeightState(mode=Mode.EVALUATION))
    trace = []
    metrics = run_episode(env, RandomPolicy(), derive_rng(5, STREAM_ACTIONS), trace=trace)
    path = tmp_path / "trace.csv"
    write_trace(path, trace)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == ",".join(TRACE_HEADER)
    assert len(lines) - 1 == metrics.episode_length <= MAX_STEPS
    last = lines[-1].split(",")
    assert last[-1] == metrics.done_reason
    for line in lines[1:-1]:
        assert line.endswith(",")  # done_reason empty until the final row
    if metrics.done_reason == "crash":
        position = np.array([float(v) for v in last[1:4]])
        assert np.linalg.norm(position) < CRASH_DISTANCE
    total = sum(float(line.split(",")[10]) for line in lines[1:])
    assert total == pytest.approx(metrics.total_reward, abs=1e-9)
    inspected = sum(int(line.split(",")[11]) for line in lines[1:])
    assert inspected == metrics.inspected_points
