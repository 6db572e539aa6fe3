"""Chief surface model, apparent sun motion, and point inspection tests.

The chief is a sphere carrying a fixed lattice of inspectable surface
points. A point is inspected when it is simultaneously on the deputy's
side of the sphere (tangent-plane test) and on the sunlit hemisphere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DynamicsParams

CHIEF_RADIUS = 10.0  # m
NUM_POINTS = 99
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SunState:
    """Sun angle [rad] from +x, positive clockwise, wrapped to [0, 2pi)."""

    angle: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "angle", float(self.angle) % TWO_PI)


@dataclass(frozen=True)
class ChiefModel:
    """Sphere radius [m] plus outward unit normals of the surface points."""

    radius: float
    point_normals: np.ndarray  # (num_points, 3) unit rows

    def __post_init__(self) -> None:
        normals = np.array(self.point_normals, dtype=float)
        normals.flags.writeable = False
        object.__setattr__(self, "point_normals", normals)

    @property
    def num_points(self) -> int:
        return self.point_normals.shape[0]

    def surface_points(self) -> np.ndarray:
        return self.radius * self.point_normals


@dataclass(frozen=True)
class PointStatus:
    """Per-point inspected flags; flags only ever flip False -> True."""

    flags: np.ndarray  # (num_points,) bool

    def __post_init__(self) -> None:
        flags = np.array(self.flags, dtype=bool)
        flags.flags.writeable = False
        object.__setattr__(self, "flags", flags)

    @classmethod
    def fresh(cls, num_points: int = NUM_POINTS) -> "PointStatus":
        return cls(flags=np.zeros(num_points, dtype=bool))

    @property
    def count(self) -> int:
        return int(self.flags.sum())

    def mark(self, mask: np.ndarray) -> tuple["PointStatus", int]:
        """OR a boolean mask into the flags; returns (new status, newly set)."""
        newly = int(np.count_nonzero(mask & ~self.flags))
        return PointStatus(flags=self.flags | mask), newly


def generate_points(count: int = NUM_POINTS, radius: float = CHIEF_RADIUS) -> ChiefModel:
    """Quasi-uniform point lattice on the sphere (golden-angle spiral).

    Deterministic: the same count always yields the same normals. count=1
    degenerates to the single point +x.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    i = np.arange(count, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / count
    azimuth = np.pi * (3.0 - np.sqrt(5.0)) * i
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    normals = np.column_stack([rho * np.cos(azimuth), rho * np.sin(azimuth), z])
    # renormalize to kill rounding in the trig path
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return ChiefModel(radius=radius, point_normals=normals)


def sun_direction(sun: SunState) -> np.ndarray:
    """Unit vector from the chief toward the sun, in the x-y plane.

    The clockwise-positive angle convention maps angle theta to
    (cos theta, -sin theta, 0).
    """
    return np.array([np.cos(sun.angle), -np.sin(sun.angle), 0.0])


def advance_sun(sun: SunState, params: DynamicsParams) -> SunState:
    """Rotate the sun by one step at the chief's mean motion."""
    return SunState(angle=sun.angle + params.mean_motion * params.dt)


def is_visible(point_normal: np.ndarray, deputy_pos: np.ndarray, radius: float) -> bool:
    """Whether the deputy lies on or above the point's tangent plane."""
    return bool(np.dot(point_normal, deputy_pos) >= radius)


def is_illuminated(point_normal: np.ndarray, sun: SunState) -> bool:
    """Whether the point is on the open sunlit hemisphere (terminator is dark)."""
    return bool(np.dot(point_normal, sun_direction(sun)) > 0.0)


def visible_mask(chief: ChiefModel, deputy_pos: np.ndarray) -> np.ndarray:
    """Vectorized tangent-plane test over all points."""
    return chief.point_normals @ deputy_pos >= chief.radius


def illuminated_mask(chief: ChiefModel, sun: SunState) -> np.ndarray:
    """Vectorized hemisphere test over all points."""
    return chief.point_normals @ sun_direction(sun) > 0.0


def update_inspected(
    status: PointStatus,
    chief: ChiefModel,
    deputy_pos: np.ndarray,
    sun: SunState,
) -> tuple[PointStatus, int]:
    """Mark every currently visible-and-illuminated point as inspected."""
    mask = visible_mask(chief, deputy_pos) & illuminated_mask(chief, sun)
    return status.mark(mask)
