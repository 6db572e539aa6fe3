"""Statistics oracles: trimmed means, bootstrap intervals, curves, tables."""

import numpy as np
import pytest

from satinspect.metrics import (
    AggregateStat,
    EVAL_METRICS,
    RunRecord,
    bootstrap_ci,
    final_policy_table,
    format_final_table,
    format_stat,
    iqm,
    sample_complexity,
)


def weighted_iqm_oracle(values):
    """Independent re-derivation: average the middle half of the probability
    mass, weighting each sorted observation by its overlap with [0.25, 0.75]."""
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    total = 0.0
    weight_sum = 0.0
    for i, v in enumerate(x):
        lo, hi = i / n, (i + 1) / n
        overlap = max(0.0, min(hi, 0.75) - max(lo, 0.25))
        total += overlap * v
        weight_sum += overlap
    return total / weight_sum


def test_iqm_examples():
    assert iqm([1, 2, 3, 4, 5, 6, 7, 8]) == 4.5
    assert iqm([3.7] * 12) == 3.7
    assert iqm([0, 0, 0, 100]) == 0.0
    assert iqm(range(1, 1001)) == 500.5
    with pytest.raises(ValueError):
        iqm([])


def test_iqm_fractional_trimming_matches_mass_oracle():
    rng = np.random.default_rng(17)
    for n in [1, 2, 3, 5, 6, 7, 9, 10, 11, 13, 50, 101]:
        values = rng.normal(size=n)
        assert iqm(values) == pytest.approx(weighted_iqm_oracle(values), abs=1e-12)


def test_iqm_permutation_invariant_and_monotone():
    rng = np.random.default_rng(23)
    values = rng.normal(size=37)
    shuffled = values.copy()
    rng.shuffle(shuffled)
    assert iqm(values) == pytest.approx(iqm(shuffled), abs=1e-12)
    for index in [0, 10, 36]:
        bumped = values.copy()
        bumped[index] += 1.0
        assert iqm(bumped) >= iqm(values) - 1e-12


def test_iqm_lies_inside_quartiles():
    rng = np.random.default_rng(29)
    for _ in range(50):
        values = rng.normal(size=int(rng.integers(4, 200))) * rng.uniform(0.1, 10)
        q25, q75 = np.percentile(values, [25, 75])
        assert q25 - 1e-9 <= iqm(values) <= q75 + 1e-9


def test_bootstrap_constant_data_zero_width():
    stat = bootstrap_ci([2.5] * 10, seed=1)
    assert stat.ci_low == stat.iqm == stat.ci_high == 2.5
    assert stat.n == 10


def test_bootstrap_contains_point_estimate_and_reproduces():
    rng = np.random.default_rng(31)
    values = rng.standard_normal(10)
    a = bootstrap_ci(values, resamples=2000, seed=7)
    b = bootstrap_ci(values, resamples=2000, seed=7)
    assert a == b
    assert a.ci_low <= a.iqm <= a.ci_high
    assert a.iqm == pytest.approx(iqm(values))
    with pytest.raises(ValueError):
        bootstrap_ci([1.0])


def test_bootstrap_width_shrinks_with_sample_size():
    rng = np.random.default_rng(37)
    widths = {10: [], 100: []}
    for n in widths:
        for trial in range(50):
            values = rng.standard_normal(n)
            stat = bootstrap_ci(values, resamples=400, seed=(n, trial))
            widths[n].append(stat.ci_high - stat.ci_low)
    assert np.median(widths[100]) < np.median(widths[10])


def make_record(name, seed, series, evals=None):
    iterations = len(next(iter(series.values()))) if series else 0
    record = RunRecord(
        config_name=name,
        seed=seed,
        timesteps=np.arange(1, iterations + 1) * 1500,
        series={k: np.asarray(v, dtype=float) for k, v in series.items()},
    )
    if evals is not None:
        record.eval_episodes = {k: np.asarray(v, dtype=float) for k, v in evals.items()}
    return record


def test_sample_complexity_single_seed_degenerate():
    record = make_record("ups", 1, {"reward_mean": [1.0, 2.0, 3.0]})
    timesteps, stats = sample_complexity([record], "reward_mean")
    assert np.array_equal(timesteps, [1500, 3000, 4500])
    assert [s.iqm for s in stats] == [1.0, 2.0, 3.0]
    assert all(s.ci_low == s.iqm == s.ci_high for s in stats)


def test_sample_complexity_identical_seeds_zero_width():
    records = [make_record("ups", s, {"reward_mean": [4.0, 5.0]}) for s in range(10)]
    _, stats = sample_complexity(records, "reward_mean")
    assert [s.iqm for s in stats] == [4.0, 5.0]
    assert all(s.ci_high - s.ci_low == 0.0 for s in stats)


def test_sample_complexity_hand_case_and_truncation():
    per_seed = [[1.0, 2.0, 9.0], [2.0, 4.0, 9.0], [3.0, 6.0], [4.0, 8.0]]
    records = [make_record("count", s, {"inspected_mean": v})
               for s, v in enumerate(per_seed)]
    timesteps, stats = sample_complexity(records, "inspected_mean")
    assert timesteps.size == 2  # truncated to the shortest run
    # n=4 trims one from each end: IQM = mean of the middle two
    assert stats[0].iqm == pytest.approx((2.0 + 3.0) / 2)
    assert stats[1].iqm == pytest.approx((4.0 + 6.0) / 2)


def test_sample_complexity_rejects_mixed_configs():
    a = make_record("ups", 1, {"reward_mean": [1.0]})
    b = make_record("count", 2, {"reward_mean": [1.0]})
    with pytest.raises(ValueError, match="mixed"):
        sample_complexity([a, b], "reward_mean")
    with pytest.raises(ValueError):
        sample_complexity([], "reward_mean")


def constant_evals(value, episodes=100):
    return {key: [value] * episodes for key in EVAL_METRICS}


def test_final_table_single_run_constant():
    record = make_record("ups", 1, {}, evals=constant_evals(7.0))
    rows = final_policy_table([record])
    assert rows[0][0] == "ups"
    for stat in rows[0][1].values():
        assert stat.iqm == stat.ci_low == stat.ci_high == 7.0


def test_final_table_pooled_uniform_grid():
    evals = {key: np.arange(1, 501, dtype=float) for key in EVAL_METRICS}
    evals2 = {key: np.arange(501, 1001, dtype=float) for key in EVAL_METRICS}
    records = [
        make_record("ups", 1, {}, evals=evals),
        make_record("ups", 2, {}, evals=evals2),
    ]
    rows = final_policy_table(records)
    for stat in rows[0][1].values():
        assert stat.iqm == pytest.approx(500.5)
        assert stat.n == 1000


def test_final_table_success_rate_is_indicator_iqm():
    evals = constant_evals(1.0, episodes=60)
    evals["success"] = [1.0] * 30 + [0.0] * 30
    record = make_record("ups", 3, {}, evals=evals)
    rows = final_policy_table([record])
    assert rows[0][1]["success"].iqm == pytest.approx(iqm(evals["success"]))


def test_final_table_skips_missing_eval_with_warning():
    with_eval = make_record("ups", 1, {}, evals=constant_evals(2.0))
    without = make_record("count", 2, {"reward_mean": [1.0]})
    with pytest.warns(UserWarning, match="row skipped"):
        rows = final_policy_table([with_eval, without])
    assert [name for name, _ in rows] == ["ups"]


def test_format_stat_layout():
    text = format_stat(AggregateStat(iqm=3.234, ci_low=3.11, ci_high=3.351, n=1000))
    assert text == "3.23 [3.11, 3.35]"
    whole = format_stat(AggregateStat(iqm=8.0, ci_low=7.93, ci_high=8.07, n=1000))
    assert whole == "8.0 [7.93, 8.07]"


def test_format_final_table_renders_rows():
    record = make_record("sun_angle_ups", 1, {}, evals=constant_evals(3.0))
    text = format_final_table(final_policy_table([record]))
    assert "sun_angle_ups" in text
    assert "Total Reward" in text and "Delta V" in text
    assert "3.0 [3.0, 3.0]" in text
