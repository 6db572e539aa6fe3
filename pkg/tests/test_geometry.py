"""Surface lattice, sun motion, and inspection-test oracles (scalar double loops)."""

import math

import numpy as np
import pytest

from satinspect.dynamics import DynamicsParams
from satinspect.geometry import (
    CHIEF_RADIUS,
    NUM_POINTS,
    TWO_PI,
    PointStatus,
    SunState,
    advance_sun,
    generate_points,
    illuminated_mask,
    is_illuminated,
    is_visible,
    sun_direction,
    update_inspected,
    visible_mask,
)


@pytest.fixture(scope="module")
def chief():
    return generate_points()


def brute_force_visible(chief, deputy_pos):
    """Tangent-plane test written as a plain per-point loop."""
    result = []
    for normal in chief.point_normals:
        dot = sum(float(a) * float(b) for a, b in zip(normal, deputy_pos))
        result.append(dot >= chief.radius)
    return np.array(result)


def brute_force_illuminated(chief, sun_angle):
    sun = [math.cos(sun_angle), -math.sin(sun_angle), 0.0]
    result = []
    for normal in chief.point_normals:
        dot = sum(float(a) * float(b) for a, b in zip(normal, sun))
        result.append(dot > 0.0)
    return np.array(result)


def test_generate_points_validation():
    with pytest.raises(ValueError):
        generate_points(count=0)
    with pytest.raises(ValueError):
        generate_points(radius=0.0)


def test_single_point_is_plus_x():
    chief = generate_points(count=1)
    assert np.allclose(chief.point_normals, [[1.0, 0.0, 0.0]], atol=1e-15)


def test_two_points_widely_separated():
    chief = generate_points(count=2)
    cos_sep = float(chief.point_normals[0] @ chief.point_normals[1])
    assert math.degrees(math.acos(cos_sep)) > 90.0


def test_lattice_properties(chief):
    assert chief.num_points == NUM_POINTS
    norms = np.linalg.norm(chief.point_normals, axis=1)
    assert np.max(np.abs(norms - 1.0)) < 1e-12
    # near-uniform balance of the 99-point lattice
    assert np.linalg.norm(chief.point_normals.sum(axis=0)) < 2.0
    # deterministic reconstruction
    again = generate_points()
    assert np.array_equal(chief.point_normals, again.point_normals)


def test_lattice_spacing_regular(chief):
    dots = np.clip(chief.point_normals @ chief.point_normals.T, -1.0, 1.0)
    np.fill_diagonal(dots, -2.0)
    nearest = np.arccos(dots.max(axis=1))
    assert nearest.min() > 0.0  # no duplicate points
    assert nearest.std() / nearest.mean() < 0.5


def test_sun_direction_convention():
    assert np.allclose(sun_direction(SunState(0.0)), [1.0, 0.0, 0.0], atol=1e-15)
    assert np.allclose(sun_direction(SunState(math.pi)), [-1.0, 0.0, 0.0], atol=1e-12)
    # clockwise-positive: a quarter turn points along -y
    assert np.allclose(sun_direction(SunState(math.pi / 2)), [0.0, -1.0, 0.0], atol=1e-12)


def test_sun_angle_wraps():
    assert SunState(TWO_PI + 0.25).angle == pytest.approx(0.25, rel=1e-12)
    assert SunState(-0.1).angle == pytest.approx(TWO_PI - 0.1, rel=1e-12)


def test_advance_sun():
    params = DynamicsParams()
    sun = advance_sun(SunState(0.0), params)
    assert sun.angle == pytest.approx(0.01027, rel=1e-12)
    wrapped = advance_sun(SunState(TWO_PI - 0.005), params)
    assert wrapped.angle == pytest.approx(0.00527, rel=1e-9)


def test_sun_sweeps_two_revolutions_per_episode():
    params = DynamicsParams()
    sun = SunState(0.0)
    for _ in range(1223):
        sun = advance_sun(sun, params)
    total = 1223 * params.mean_motion * params.dt
    assert total == pytest.approx(12.56021, rel=1e-6)
    assert total == pytest.approx(2.0 * TWO_PI, rel=2e-3)  # ~two revolutions


def test_is_visible_examples():
    deputy = np.array([100.0, 0.0, 0.0])
    assert is_visible(np.array([1.0, 0.0, 0.0]), deputy, CHIEF_RADIUS)
    assert not is_visible(np.array([-1.0, 0.0, 0.0]), deputy, CHIEF_RADIUS)
    # limb point: dot = 0 < radius
    assert not is_visible(np.array([0.0, 1.0, 0.0]), deputy, CHIEF_RADIUS)


def test_is_illuminated_examples():
    sun = SunState(0.0)
    assert is_illuminated(np.array([1.0, 0.0, 0.0]), sun)
    assert not is_illuminated(np.array([-1.0, 0.0, 0.0]), sun)
    # terminator point: strict inequality counts it dark
    assert not is_illuminated(np.array([0.0, 0.0, 1.0]), sun)


def test_visible_mask_matches_brute_force(chief):
    rng = np.random.default_rng(42)
    for _ in range(200):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        deputy = direction * rng.uniform(15.0, 800.0)
        assert np.array_equal(visible_mask(chief, deputy), brute_force_visible(chief, deputy))


def test_illuminated_mask_matches_brute_force(chief):
    for degrees in range(360):
        angle = math.radians(degrees)
        got = illuminated_mask(chief, SunState(angle))
        assert np.array_equal(got, brute_force_illuminated(chief, angle))


def test_illuminated_count_stays_near_half(chief):
    counts = [
        int(illuminated_mask(chief, SunState(math.radians(d))).sum()) for d in range(360)
    ]
    assert 44 <= min(counts) and max(counts) <= 55


def test_update_inspected_is_idempotent_when_done(chief):
    status = PointStatus(flags=np.ones(NUM_POINTS, dtype=bool))
    new_status, newly = update_inspected(status, chief, np.array([100.0, 0.0, 0.0]), SunState(0.0))
    assert newly == 0
    assert np.array_equal(new_status.flags, status.flags)


def test_update_inspected_matches_brute_force(chief):
    deputy = np.array([100.0, 0.0, 0.0])
    sun = SunState(0.0)
    status, newly = update_inspected(PointStatus.fresh(), chief, deputy, sun)
    expected = brute_force_visible(chief, deputy) & brute_force_illuminated(chief, 0.0)
    assert newly == int(expected.sum())
    assert np.array_equal(status.flags, expected)


def test_update_inspected_union_over_two_positions(chief):
    sun = SunState(0.0)
    first_pos = np.array([100.0, 0.0, 0.0])
    second_pos = np.array([-100.0, 0.0, 0.0])
    status, _ = update_inspected(PointStatus.fresh(), chief, first_pos, sun)
    status, newly = update_inspected(status, chief, second_pos, sun)
    mask1 = brute_force_visible(chief, first_pos) & brute_force_illuminated(chief, 0.0)
    mask2 = brute_force_visible(chief, second_pos) & brute_force_illuminated(chief, 0.0)
    assert np.array_equal(status.flags, mask1 | mask2)
    assert newly == int((mask2 & ~mask1).sum())


def test_inspected_count_is_monotone(chief):
    rng = np.random.default_rng(3)
    status = PointStatus.fresh()
    previous = 0
    sun = SunState(1.0)
    for _ in range(300):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        deputy = direction * rng.uniform(16.0, 300.0)
        sun = advance_sun(sun, DynamicsParams())
        status, _ = update_inspected(status, chief, deputy, sun)
        assert status.count >= previous
        previous = status.count
