"""Clohessy-Wiltshire relative motion with zero-order-hold thrust.

The deputy's state relative to the chief is propagated in Hill's frame
(x radial, y in-track, z cross-track) with the exact closed-form discrete
transition for a circular chief orbit, so each 10 s step is a single
matrix multiply instead of a numerical integration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MEAN_MOTION = 0.001027  # rad/s, chief orbit
DEPUTY_MASS = 12.0  # kg
STEP_SECONDS = 10.0  # s, control interval

FORCE_LEVELS = (-0.1, 0.0, 0.1)  # N, admissible per-axis thrust


class SimulationDivergedError(RuntimeError):
    """Propagation produced a non-finite state."""


@dataclass(frozen=True)
class DynamicsParams:
    """Chief orbit rate, deputy mass, and control interval."""

    mean_motion: float = MEAN_MOTION
    mass: float = DEPUTY_MASS
    dt: float = STEP_SECONDS

    def __post_init__(self) -> None:
        if self.mean_motion <= 0.0 or self.mass <= 0.0 or self.dt <= 0.0:
            raise ValueError("mean_motion, mass and dt must be strictly positive")


@dataclass(frozen=True)
class HillState:
    """Deputy position [m] and velocity [m/s] in the chief-centered Hill frame."""

    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self) -> None:
        pos = np.array(self.position, dtype=float)
        vel = np.array(self.velocity, dtype=float)
        if pos.shape != (3,) or vel.shape != (3,):
            raise ValueError("position and velocity must be 3-vectors")
        if not (np.isfinite(pos).all() and np.isfinite(vel).all()):
            raise ValueError("state components must be finite")
        pos.flags.writeable = False
        vel.flags.writeable = False
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "velocity", vel)

    def as_vector(self) -> np.ndarray:
        """Return the 6-vector [x, y, z, xdot, ydot, zdot]."""
        return np.concatenate([self.position, self.velocity])

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "HillState":
        vec = np.asarray(vec, dtype=float)
        return cls(position=vec[:3], velocity=vec[3:6])


@dataclass(frozen=True)
class ThrustCommand:
    """Per-axis thruster force [N]; each component is one of FORCE_LEVELS."""

    force: np.ndarray

    def __post_init__(self) -> None:
        force = np.array(self.force, dtype=float)
        if force.shape != (3,):
            raise ValueError("force must be a 3-vector")
        for component in force:
            if component not in FORCE_LEVELS:
                raise ValueError(
                    f"force components must be one of {FORCE_LEVELS}, got {component!r}"
                )
        force.flags.writeable = False
        object.__setattr__(self, "force", force)

    @classmethod
    def from_indices(cls, indices: np.ndarray) -> "ThrustCommand":
        """Build a command from per-axis choices in {0, 1, 2}."""
        indices = np.asarray(indices)
        return cls(force=np.array([FORCE_LEVELS[int(i)] for i in indices]))


ZERO_THRUST = ThrustCommand(force=np.zeros(3))


@dataclass(frozen=True)
class DiscreteTransition:
    """Exact discrete transition s' = phi @ s + gamma @ F over one step."""

    phi: np.ndarray  # (6, 6)
    gamma: np.ndarray  # (6, 3)


def cw_matrices(mean_motion: float, dt: float, mass: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form ZOH discretization of the CW equations over dt >= 0.

    Returns (phi, gamma) with phi the state-transition matrix and gamma the
    input matrix for a force held constant over the step.
    """
    n = mean_motion
    nt = n * dt
    s = np.sin(nt)
    c = np.cos(nt)
    v = 2.0 * np.sin(nt / 2.0) ** 2  # 1 - cos(nt) without cancellation
    phi = np.array(
        [
            [4.0 - 3.0 * c, 0.0, 0.0, s / n, 2.0 * v / n, 0.0],
            [6.0 * (s - nt), 1.0, 0.0, -2.0 * v / n, (4.0 * s - 3.0 * nt) / n, 0.0],
            [0.0, 0.0, c, 0.0, 0.0, s / n],
            [3.0 * n * s, 0.0, 0.0, c, 2.0 * s, 0.0],
            [-6.0 * n * v, 0.0, 0.0, -2.0 * s, 4.0 * c - 3.0, 0.0],
            [0.0, 0.0, -n * s, 0.0, 0.0, c],
        ]
    )
    # gamma = integral of phi(sigma) @ B over the step, B = [0; I/m]
    gamma = (
        np.array(
            [
                [v / n**2, 2.0 * (nt - s) / n**2, 0.0],
                [-2.0 * (nt - s) / n**2, 4.0 * v / n**2 - 1.5 * dt**2, 0.0],
                [0.0, 0.0, v / n**2],
                [s / n, 2.0 * v / n, 0.0],
                [-2.0 * v / n, 4.0 * s / n - 3.0 * dt, 0.0],
                [0.0, 0.0, s / n],
            ]
        )
        / mass
    )
    return phi, gamma


def build_transition(params: DynamicsParams) -> DiscreteTransition:
    """Discretize the relative-motion dynamics for the configured step."""
    phi, gamma = cw_matrices(params.mean_motion, params.dt, params.mass)
    phi.flags.writeable = False
    gamma.flags.writeable = False
    return DiscreteTransition(phi=phi, gamma=gamma)


def propagate(state: HillState, cmd: ThrustCommand, trans: DiscreteTransition) -> HillState:
    """Advance the deputy one step under a constant thrust command."""
    new_vec = trans.phi @ state.as_vector() + trans.gamma @ cmd.force
    if not np.isfinite(new_vec).all():
        raise SimulationDivergedError(f"propagation produced non-finite state {new_vec}")
    return HillState.from_vector(new_vec)


def delta_v(cmd: ThrustCommand, params: DynamicsParams) -> float:
    """Fuel use of one step: L1 thrust norm over mass, times step duration [m/s]."""
    fx, fy, fz = (float(f) for f in cmd.force)
    return (abs(fx) + abs(fy) + abs(fz)) / params.mass * params.dt
