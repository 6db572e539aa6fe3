"""Multi-seed aggregation: interquartile means, bootstrap confidence
intervals, sample-complexity curves, and final-policy tables.

The IQM trims a quarter of the probability mass from each tail, giving
fractional weight to the boundary observations when the sample size is not
divisible by four, so exactly the middle half is averaged.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# metric key -> table column label
EVAL_METRICS = {
    "total_reward": "Total Reward",
    "inspected_points": "Inspected Points",
    "episode_length": "Episode Length",
    "success": "Success Rate",
    "delta_v": "Delta V",
}

# per-iteration series tracked for sample-complexity curves
CURVE_METRICS = {
    "reward_mean": "Total Reward",
    "inspected_mean": "Inspected Points",
    "length_mean": "Episode Length",
    "success_rate": "Success Rate",
    "delta_v_mean": "Delta V",
}

BOOTSTRAP_RESAMPLES = 2000


@dataclass(frozen=True)
class AggregateStat:
    """Point estimate with its bootstrap interval."""

    iqm: float
    ci_low: float
    ci_high: float
    n: int


@dataclass
class RunRecord:
    """Metric series of one seeded run plus its final-evaluation episodes."""

    config_name: str
    seed: int
    timesteps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    series: dict[str, np.ndarray] = field(default_factory=dict)
    eval_episodes: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def has_eval(self) -> bool:
        return bool(self.eval_episodes) and next(iter(self.eval_episodes.values())).size > 0


def _trim_weights(n: int) -> np.ndarray:
    trim = 0.25 * n
    g = int(np.floor(trim))
    frac = trim - g
    weights = np.ones(n)
    weights[:g] = 0.0
    if g > 0:
        weights[n - g :] = 0.0
    if frac > 0.0:
        weights[g] = 1.0 - frac
        weights[n - 1 - g] = 1.0 - frac
    return weights


def iqm(values: Sequence[float]) -> float:
    """Mean of the middle 50% of the sample (fractional boundary weights)."""
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise ValueError("iqm of an empty sample")
    weights = _trim_weights(x.size)
    return float(np.dot(weights, x) / weights.sum())


def bootstrap_ci(
    values: Sequence[float],
    statistic: Callable[[np.ndarray], float] = iqm,
    level: float = 0.95,
    resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int | tuple = 0,
) -> AggregateStat:
    """Percentile bootstrap interval around the statistic; seeded and exact
    to rerun."""
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise ValueError("bootstrap needs at least 2 observations")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    idx = rng.integers(0, x.size, size=(resamples, x.size))
    if statistic is iqm:
        # vectorized fast path: sort each resample, dot with the trim weights
        samples = np.sort(x[idx], axis=1)
        weights = _trim_weights(x.size)
        stats = samples @ weights / weights.sum()
    else:
        stats = np.array([statistic(x[row]) for row in idx])
    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(stats, [100.0 * alpha, 100.0 * (1.0 - alpha)])
    point = statistic(x)
    return AggregateStat(
        iqm=point, ci_low=min(float(lo), point), ci_high=max(float(hi), point), n=int(x.size)
    )


def degenerate_stat(value: float) -> AggregateStat:
    return AggregateStat(iqm=float(value), ci_low=float(value), ci_high=float(value), n=1)


def sample_complexity(
    records: Sequence[RunRecord],
    metric: str,
    resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0,
) -> tuple[np.ndarray, list[AggregateStat]]:
    """Per-iteration IQM + CI across seeds of one configuration.

    Series are truncated to the shortest run. The x axis is environment
    timesteps consumed up to each iteration.
    """
    if not records:
        raise ValueError("no runs supplied")
    configs = {r.config_name for r in records}
    if len(configs) > 1:
        raise ValueError(f"mixed configurations in one curve: {sorted(configs)}")
    length = min(r.series[metric].size for r in records)
    timesteps = records[0].timesteps[:length]
    stats = []
    for i in range(length):
        values = np.array([r.series[metric][i] for r in records], dtype=float)
        if values.size == 1:
            stats.append(degenerate_stat(values[0]))
        else:
            stats.append(bootstrap_ci(values, resamples=resamples, seed=(seed, i)))
    return timesteps, stats


def final_policy_table(
    records: Sequence[RunRecord],
    pooled: bool = True,
    resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0,
) -> list[tuple[str, dict[str, AggregateStat]]]:
    """Aggregate final-evaluation episodes per configuration and metric.

    Episodes are pooled across seeds by default; pooled=False aggregates
    per-seed means instead. Configurations without evaluation data are
    skipped with a warning.
    """
    by_config: dict[str, list[RunRecord]] = {}
    for record in records:
        by_config.setdefault(record.config_name, []).append(record)

    rows = []
    for config_name, group in by_config.items():
        with_eval = [r for r in group if r.has_eval]
        if not with_eval:
            warnings.warn(f"no evaluation data for configuration {config_name!r}; row skipped")
            continue
        if len(with_eval) < len(group):
            warnings.warn(f"{len(group) - len(with_eval)} run(s) of {config_name!r} lack eval data")
        row: dict[str, AggregateStat] = {}
        for metric_index, metric in enumerate(EVAL_METRICS):
            if pooled:
                values = np.concatenate([r.eval_episodes[metric] for r in with_eval])
            else:
                values = np.array([float(np.mean(r.eval_episodes[metric])) for r in with_eval])
            if values.size == 1:
                row[metric] = degenerate_stat(values[0])
            else:
                row[metric] = bootstrap_ci(values, resamples=resamples, seed=(seed, metric_index))
        rows.append((config_name, row))
    return rows


def _format_value(x: float) -> str:
    rounded = round(x, 2)
    if rounded == int(rounded):
        return f"{rounded:.1f}"
    return f"{rounded:g}"


def format_stat(stat: AggregateStat) -> str:
    """Render one cell as 'IQM [lo, hi]'."""
    return (
        f"{_format_value(stat.iqm)} "
        f"[{_format_value(stat.ci_low)}, {_format_value(stat.ci_high)}]"
    )


def format_final_table(rows: list[tuple[str, dict[str, AggregateStat]]]) -> str:
    """Aligned plain-text table, one configuration per row."""
    headers = ["Configuration"] + list(EVAL_METRICS.values())
    cells = [
        [name] + [format_stat(row[m]) for m in EVAL_METRICS] for name, row in rows
    ]
    widths = [max(len(h), *(len(c[i]) for c in cells)) if cells else len(h)
              for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)),
        "  ".join("-" * w for w in widths),
    ]
    for row_cells in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row_cells, widths)))
    return "\n".join(lines) + "\n"
