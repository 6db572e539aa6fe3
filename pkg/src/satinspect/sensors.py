"""Auxiliary sensors, reference-frame transforms, and observation assembly.

Three sensors augment the deputy's pose: an inspected-point count, the sun
angle, and a unit vector toward the largest cluster of uninspected points
(spherical k-means over the point normals). Pose and UPS segments can each
be expressed chief-centered or agent-centered; the twelve named
configurations used by the experiment sweeps are registered here.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import HillState
from .geometry import CHIEF_RADIUS, ChiefModel, PointStatus, SunState

POSITION_SCALE = 100.0  # observation positions are divided by this
VELOCITY_SCALE = 2.0  # observation velocities are multiplied by this

KMEANS_MAX_ITER = 50
KMEANS_TOL = 1e-6
CLUSTER_SPLIT_SPREAD = np.pi / 2  # split a cluster wider than this
CLUSTER_SIZE_DIVISOR = 10  # k never exceeds uninspected_count // 10


class Frame(enum.Enum):
    CHIEF_CENTERED = "chief"
    AGENT_CENTERED = "agent"


@dataclass(frozen=True)
class ObsConfig:
    """Which sensors are present and the reference frame of each segment."""

    use_count: bool = False
    use_sun: bool = False
    use_ups: bool = False
    pose_frame: Frame = Frame.CHIEF_CENTERED
    ups_frame: Frame = Frame.CHIEF_CENTERED

    @property
    def obs_dim(self) -> int:
        return 6 + int(self.use_count) + int(self.use_sun) + 3 * int(self.use_ups)

    @property
    def layout(self) -> tuple[tuple[str, int], ...]:
        """Ordered (segment name, width) pairs."""
        segments = [("position", 3), ("velocity", 3)]
        if self.use_count:
            segments.append(("count", 1))
        if self.use_sun:
            segments.append(("sun", 1))
        if self.use_ups:
            segments.append(("ups", 3))
        return tuple(segments)

    def to_dict(self) -> dict:
        return {
            "use_count": self.use_count,
            "use_sun": self.use_sun,
            "use_ups": self.use_ups,
            "pose_frame": self.pose_frame.value,
            "ups_frame": self.ups_frame.value,
        }


# The 8 sensor-ablation configurations plus the 4 reference-frame ones.
CONFIGS: dict[str, ObsConfig] = {
    "no_sensors": ObsConfig(),
    "count": ObsConfig(use_count=True),
    "sun_angle": ObsConfig(use_sun=True),
    "ups": ObsConfig(use_ups=True),
    "count_sun_angle": ObsConfig(use_count=True, use_sun=True),
    "count_ups": ObsConfig(use_count=True, use_ups=True),
    "sun_angle_ups": ObsConfig(use_sun=True, use_ups=True),
    "all_sensors": ObsConfig(use_count=True, use_sun=True, use_ups=True),
    "frame_all_chief": ObsConfig(use_sun=True, use_ups=True),
    "frame_agent_pose": ObsConfig(use_sun=True, use_ups=True, pose_frame=Frame.AGENT_CENTERED),
    "frame_agent_ups": ObsConfig(use_sun=True, use_ups=True, ups_frame=Frame.AGENT_CENTERED),
    "frame_all_agent": ObsConfig(
        use_sun=True,
        use_ups=True,
        pose_frame=Frame.AGENT_CENTERED,
        ups_frame=Frame.AGENT_CENTERED,
    ),
}


def get_config(name: str) -> ObsConfig:
    try:
        return CONFIGS[name]
    except KeyError:
        valid = ", ".join(sorted(CONFIGS))
        raise ValueError(f"unknown configuration {name!r}; valid names: {valid}") from None


@dataclass(frozen=True)
class Observation:
    """Flat observation vector plus its named segment layout."""

    values: np.ndarray
    layout: tuple[tuple[str, int], ...]

    def segment(self, name: str) -> np.ndarray:
        offset = 0
        for seg_name, width in self.layout:
            if seg_name == name:
                return self.values[offset : offset + width]
            offset += width
        raise KeyError(name)


@dataclass(frozen=True)
class ClusterState:
    """Warm-start state of the uninspected-points clustering."""

    centroids: np.ndarray = field(default_factory=lambda: np.array([[1.0, 0.0, 0.0]]))
    k: int = 1
    last_uninspected_count: int = -1
    target: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))


def count_sensor(status: PointStatus) -> float:
    """Inspected-point count scaled by 1/100."""
    return status.count / 100.0


def sun_sensor(sun: SunState) -> float:
    """Raw sun angle [rad]; identical in both reference frames."""
    return sun.angle


def _normalize_rows(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return vectors / norms


def _lloyd_spherical(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Spherical k-means: assign by max cosine, renormalize means each pass."""
    centroids = _normalize_rows(np.array(centroids, dtype=float))
    k = centroids.shape[0]
    for _ in range(KMEANS_MAX_ITER):
        labels = np.argmax(points @ centroids.T, axis=1)
        new_centroids = centroids.copy()
        for j in range(k):
            members = points[labels == j]
            if members.shape[0] == 0:
                # re-seed an empty cluster at the point farthest from all centroids
                farthest = np.argmin(np.max(points @ centroids.T, axis=1))
                new_centroids[j] = points[farthest]
                continue
            mean = members.mean(axis=0)
            norm = np.linalg.norm(mean)
            if norm > 1e-12:
                new_centroids[j] = mean / norm
        shift = np.max(np.linalg.norm(new_centroids - centroids, axis=1))
        centroids = new_centroids
        if shift < KMEANS_TOL:
            break
    labels = np.argmax(points @ centroids.T, axis=1)
    return labels, centroids


def _widest_cluster(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> tuple[int, float, int]:
    """Return (cluster index, max angular spread, index of its farthest member)."""
    widest, spread, far_point = 0, 0.0, 0
    for j in range(centroids.shape[0]):
        member_idx = np.nonzero(labels == j)[0]
        if member_idx.size == 0:
            continue
        cosines = np.clip(points[member_idx] @ centroids[j], -1.0, 1.0)
        worst = int(np.argmin(cosines))
        angle = float(np.arccos(cosines[worst]))
        if angle > spread:
            widest, spread, far_point = j, angle, int(member_idx[worst])
    return widest, spread, far_point


def _prune_centroids(points: np.ndarray, centroids: np.ndarray, k: int) -> np.ndarray:
    """Keep the k centroids with the most assigned points."""
    labels = np.argmax(points @ centroids.T, axis=1)
    counts = np.bincount(labels, minlength=centroids.shape[0])
    keep = np.sort(np.argsort(-counts, kind="stable")[:k])
    return centroids[keep]


def ups_sensor(
    state: ClusterState,
    status: PointStatus,
    chief: ChiefModel,
    sun: SunState,
    trigger: bool,
    deputy_pos: np.ndarray | None = None,
) -> tuple[ClusterState, np.ndarray]:
    """Unit vector from the chief's center toward the chosen uninspected cluster.

    When triggered, reclusters the uninspected point normals starting from
    the previous centroids, splitting overly wide clusters while the count
    stays within uninspected_count // 10, then targets the largest cluster
    (ties broken toward the deputy). Without a trigger, or with nothing
    left to inspect, the cached vector is returned unchanged.
    """
    if not trigger:
        return state, state.target
    points = chief.point_normals[~status.flags]
    uninspected = points.shape[0]
    if uninspected == 0:
        return replace(state, last_uninspected_count=0), state.target

    cap = max(1, uninspected // CLUSTER_SIZE_DIVISOR)
    k = min(max(state.k, 1), cap)
    centroids = state.centroids
    if centroids.shape[0] > k:
        centroids = _prune_centroids(points, centroids, k)
    labels, centroids = _lloyd_spherical(points, centroids)

    while k < cap:
        _, spread, far_point = _widest_cluster(points, labels, centroids)
        if spread <= CLUSTER_SPLIT_SPREAD:
            break
        centroids = np.vstack([centroids, points[far_point]])
        k += 1
        labels, centroids = _lloyd_spherical(points, centroids)

    counts = np.bincount(labels, minlength=k)
    best = np.nonzero(counts == counts.max())[0]
    if best.size > 1 and deputy_pos is not None and np.linalg.norm(deputy_pos) > 0.0:
        toward_deputy = deputy_pos / np.linalg.norm(deputy_pos)
        best = best[np.argmax(centroids[best] @ toward_deputy)]
    else:
        best = best[0]
    target = centroids[int(best)].copy()
    new_state = ClusterState(
        centroids=centroids,
        k=k,
        last_uninspected_count=uninspected,
        target=target,
    )
    return new_state, target


def to_agent_centered_pose(state: HillState) -> HillState:
    """Chief position and velocity as seen from the deputy: negate both."""
    return HillState(position=-state.position, velocity=-state.velocity)


def to_agent_centered_ups(
    ups_chief: np.ndarray, deputy_pos: np.ndarray, radius: float = CHIEF_RADIUS
) -> np.ndarray:
    """Re-root the cluster direction at the deputy: unit(radius*u - p)."""
    offset = radius * np.asarray(ups_chief, dtype=float) - np.asarray(deputy_pos, dtype=float)
    norm = np.linalg.norm(offset)
    if norm == 0.0:
        raise ValueError("deputy coincides with the cluster surface point")
    return offset / norm


def assemble(
    config: ObsConfig,
    state: HillState,
    status: PointStatus,
    sun: SunState,
    ups_vec: np.ndarray | None = None,
    radius: float = CHIEF_RADIUS,
) -> Observation:
    """Build the normalized observation vector for a configuration.

    The pose segment is position/100 and velocity*2 in the configured
    frame; ups_vec is the chief-frame cluster direction and is transformed
    here when the UPS frame is agent-centered.
    """
    if config.use_ups and ups_vec is None:
        raise ValueError("ups_vec is required when use_ups is set")
    pose = state if config.pose_frame is Frame.CHIEF_CENTERED else to_agent_centered_pose(state)
    parts = [pose.position / POSITION_SCALE, pose.velocity * VELOCITY_SCALE]
    if config.use_count:
        parts.append(np.array([count_sensor(status)]))
    if config.use_sun:
        parts.append(np.array([sun_sensor(sun)]))
    if config.use_ups:
        if config.ups_frame is Frame.CHIEF_CENTERED:
            parts.append(np.asarray(ups_vec, dtype=float))
        else:
            parts.append(to_agent_centered_ups(ups_vec, state.position, radius))
    return Observation(values=np.concatenate(parts), layout=config.layout)
