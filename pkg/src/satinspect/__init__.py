"""Spacecraft inspection RL environment, PPO trainer, and analysis toolkit."""

__version__ = "0.1.0"

from .dynamics import (  # noqa: F401
    DynamicsParams,
    HillState,
    ThrustCommand,
    build_transition,
    delta_v,
    propagate,
)
from .env import (  # noqa: F401
    DoneReason,
    EpisodeMetrics,
    InspectionEnv,
    RewardWeightState,
    evaluate_policy,
)
from .geometry import ChiefModel, PointStatus, SunState, generate_points  # noqa: F401
from .metrics import AggregateStat, RunRecord, bootstrap_ci, iqm  # noqa: F401
from .sensors import CONFIGS, ObsConfig, Observation, get_config  # noqa: F401
