"""Run directory layout and file schemas.

Each seeded run owns one directory:

    manifest.json     configuration, seed, hyperparameters, config hash
    metrics.csv       one row per training iteration
    eval.csv          one row per final-evaluation episode
    checkpoints/      flat-binary policy checkpoints (see policy module)
    traces/           optional per-episode step traces

All CSV values are written with repr() round-trip precision so identical
runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .env import EpisodeMetrics
from .metrics import RunRecord
from .ppo import PPOConfig, config_hash
from .sensors import get_config

MANIFEST_SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"
METRICS_NAME = "metrics.csv"
EVAL_NAME = "eval.csv"
CHECKPOINTS_DIR = "checkpoints"
TRACES_DIR = "traces"

METRICS_HEADER = [
    "iteration",
    "timesteps",
    "episodes",
    "reward_mean",
    "inspected_mean",
    "length_mean",
    "success_rate",
    "delta_v_mean",
    "reward_weight",
    "policy_loss",
    "vf_loss",
    "kl",
    "kl_coeff",
    "entropy",
]

EVAL_HEADER = [
    "episode",
    "total_reward",
    "inspected_points",
    "episode_length",
    "success",
    "delta_v",
    "done_reason",
]


@dataclass(frozen=True)
class ExperimentSpec:
    """One sweep request: a configuration trained over a list of seeds."""

    config_name: str
    seeds: tuple[int, ...]
    total_timesteps: int
    eval_episodes: int = 100
    output_dir: str = "runs"
    overrides: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        get_config(self.config_name)  # unknown names rejected at parse time

    def to_dict(self) -> dict:
        return {
            "config_name": self.config_name,
            "seeds": list(self.seeds),
            "total_timesteps": self.total_timesteps,
            "eval_episodes": self.eval_episodes,
            "output_dir": self.output_dir,
            "overrides": dict(self.overrides),
        }


def run_dir(spec: ExperimentSpec, seed: int) -> Path:
    return Path(spec.output_dir) / spec.config_name / f"seed_{seed}"


def build_manifest(spec: ExperimentSpec, seed: int, ppo: PPOConfig) -> dict:
    obs = get_config(spec.config_name)
    payload = {
        "config_name": spec.config_name,
        "obs": obs.to_dict(),
        "ppo": ppo.to_dict(),
    }
    return {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "version": __version__,
        "config_name": spec.config_name,
        "config_hash": config_hash(payload),
        "seed": seed,
        "obs": obs.to_dict(),
        "ppo": ppo.to_dict(),
        "eval_episodes": spec.eval_episodes,
        "experiment_spec": spec.to_dict(),
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }


def write_manifest(directory: Path, manifest: dict) -> None:
    with open(directory / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(directory: Path) -> dict:
    with open(Path(directory) / MANIFEST_NAME) as fh:
        return json.load(fh)


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


class MetricsWriter:
    """Appends one metrics.csv row per training iteration."""

    def __init__(self, directory: Path):
        self._path = Path(directory) / METRICS_NAME
        with open(self._path, "w", newline="") as fh:
            csv.writer(fh).writerow(METRICS_HEADER)

    def write(self, row: dict) -> None:
        with open(self._path, "a", newline="") as fh:
            csv.writer(fh).writerow([_cell(row[key]) for key in METRICS_HEADER])


def write_eval(directory: Path, episodes: list[EpisodeMetrics]) -> Path:
    path = Path(directory) / EVAL_NAME
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVAL_HEADER)
        for i, m in enumerate(episodes):
            writer.writerow(
                [
                    i,
                    repr(float(m.total_reward)),
                    m.inspected_points,
                    m.episode_length,
                    int(m.success),
                    repr(float(m.delta_v)),
                    m.done_reason,
                ]
            )
    return path


def load_run(directory: str | Path) -> RunRecord:
    """Rebuild a RunRecord from a self-describing run directory."""
    directory = Path(directory)
    manifest = read_manifest(directory)
    record = RunRecord(config_name=manifest["config_name"], seed=manifest["seed"])

    metrics_path = directory / METRICS_NAME
    if metrics_path.exists():
        with open(metrics_path, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
        record.timesteps = np.array([int(r["timesteps"]) for r in rows])
        for key in METRICS_HEADER:
            if key in ("iteration", "timesteps"):
                continue
            record.series[key] = np.array([float(r[key]) for r in rows])

    eval_path = directory / EVAL_NAME
    if eval_path.exists():
        with open(eval_path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        record.eval_episodes = {
            "total_reward": np.array([float(r["total_reward"]) for r in rows]),
            "inspected_points": np.array([float(r["inspected_points"]) for r in rows]),
            "episode_length": np.array([float(r["episode_length"]) for r in rows]),
            "success": np.array([float(r["success"]) for r in rows]),
            "delta_v": np.array([float(r["delta_v"]) for r in rows]),
        }
    return record


def write_curve_csv(path: Path, timesteps: np.ndarray, stats) -> None:
    """Sample-complexity curve: timesteps, iqm, ci_low, ci_high."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timesteps", "iqm", "ci_low", "ci_high"])
        for t, stat in zip(timesteps, stats):
            writer.writerow([int(t), repr(stat.iqm), repr(stat.ci_low), repr(stat.ci_high)])


def write_table_csv(path: Path, rows) -> None:
    """Tidy aggregate table: one row per configuration and metric."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config", "metric", "iqm", "ci_low", "ci_high", "n"])
        for config_name, row in rows:
            for metric, stat in row.items():
                writer.writerow(
                    [config_name, metric, repr(stat.iqm), repr(stat.ci_low),
                     repr(stat.ci_high), stat.n]
                )
