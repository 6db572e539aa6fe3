"""Command-line front end: train, eval, report, trace.

Sweep requests can come from flags or a JSON spec file (flags win). Seeds
run independently, optionally in parallel; every run directory is
self-describing, so the report command needs nothing but the directories.
Defaults for common options can be set through SATINSPECT_* environment
variables (SATINSPECT_OUTDIR, SATINSPECT_JOBS, SATINSPECT_TIMESTEPS,
SATINSPECT_EVAL_EPISODES).
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from multiprocessing import get_context
from pathlib import Path

from .artifacts import (
    CHECKPOINTS_DIR,
    ExperimentSpec,
    MetricsWriter,
    build_manifest,
    load_run,
    run_dir,
    write_curve_csv,
    write_eval,
    write_manifest,
    write_table_csv,
)
from .env import TraceRow, evaluate_policy, run_episode, write_trace
from .env import InspectionEnv, Mode, RewardWeightState
from .metrics import CURVE_METRICS, final_policy_table, format_final_table, sample_complexity
from .policy import TorchPolicy, load_checkpoint
from .ppo import (
    PPOConfig,
    STREAM_EVAL_ACTIONS,
    STREAM_EVAL_ENV,
    derive_rng,
    train,
)
from .sensors import CONFIGS, get_config


def _env_default(name: str, fallback, cast=None):
    value = os.environ.get(f"SATINSPECT_{name}")
    if value is None:
        return fallback
    if cast is not None:
        return cast(value)
    return type(fallback)(value) if fallback is not None else value


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip() != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def _parse_hidden(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in text.split(",") if s.strip() != "")


PPO_OVERRIDE_FLAGS = {
    "lr": float,
    "gamma": float,
    "gae_lambda": float,
    "clip": float,
    "kl_coeff_init": float,
    "kl_target": float,
    "vf_loss_coeff": float,
    "vf_clip": float,
    "entropy_coeff": float,
    "sgd_iters": int,
    "checkpoint_interval": int,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satinspect",
        description="Spacecraft inspection RL: training, evaluation, and reporting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one configuration across seeds")
    p_train.add_argument("--config", choices=sorted(CONFIGS), help="observation configuration")
    p_train.add_argument("--seeds", type=_parse_seeds, help="comma-separated integer seeds")
    p_train.add_argument(
        "--timesteps", type=int, default=None,
        help="total environment timesteps per seed (default 5000000)",
    )
    p_train.add_argument(
        "--eval-episodes", type=int, default=None,
        help="final-evaluation episodes per seed, 0 disables (default 100)",
    )
    p_train.add_argument("--outdir", default=None, help="parent directory for run artifacts")
    p_train.add_argument("--jobs", type=int, default=_env_default("JOBS", 1))
    p_train.add_argument("--overwrite", action="store_true",
                         help="replace existing run directories")
    p_train.add_argument("--spec", help="JSON file with an experiment spec; flags override")
    p_train.add_argument("--rollout-fragment", type=int, default=None,
                         help="fragment length; also sets train/minibatch size")
    p_train.add_argument("--hidden", type=_parse_hidden, default=None,
                         help="comma-separated hidden layer sizes")
    for flag, cast in PPO_OVERRIDE_FLAGS.items():
        p_train.add_argument(f"--{flag.replace('_', '-')}", type=cast, default=None)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint for fresh episodes")
    p_eval.add_argument("checkpoint", help="checkpoint directory (or run directory)")
    p_eval.add_argument("--episodes", type=int, default=_env_default("EVAL_EPISODES", 100))
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", default="eval.csv")
    p_eval.add_argument("--deterministic", action="store_true",
                        help="argmax actions instead of sampling")
    p_eval.set_defaults(func=cmd_eval)

    p_report = sub.add_parser("report", help="aggregate run directories into tables and curves")
    p_report.add_argument("run_dirs", nargs="+", help="seed run directories")
    p_report.add_argument("--outdir", default="report")
    p_report.add_argument("--resamples", type=int, default=2000)
    p_report.add_argument("--bootstrap-seed", type=int, default=0)
    p_report.add_argument("--per-seed", action="store_true",
                          help="aggregate per-seed means instead of pooled episodes")
    p_report.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p_report.set_defaults(func=cmd_report)

    p_trace = sub.add_parser("trace", help="record one evaluation episode step by step")
    p_trace.add_argument("checkpoint")
    p_trace.add_argument("--seed", type=int, default=0)
    p_trace.add_argument("--out", default="trace.csv")
    p_trace.add_argument("--deterministic", action="store_true")
    p_trace.set_defaults(func=cmd_trace)

    return parser


def _first(*candidates):
    for value in candidates:
        if value is not None:
            return value
    return None


def _spec_from_args(args: argparse.Namespace) -> tuple[ExperimentSpec, PPOConfig]:
    base: dict = {}
    if args.spec:
        with open(args.spec) as fh:
            base = json.load(fh)
    config_name = args.config or base.get("config_name")
    seeds = args.seeds or tuple(base.get("seeds", ()))
    if not config_name or not seeds:
        raise SystemExit("train requires --config and --seeds (or a spec file providing them)")

    overrides = dict(base.get("overrides", {}))
    for flag in PPO_OVERRIDE_FLAGS:
        value = getattr(args, flag)
        if value is not None:
            overrides[flag] = value
    if args.hidden is not None:
        overrides["hidden"] = list(args.hidden)
    if args.rollout_fragment is not None:
        overrides["rollout_fragment"] = args.rollout_fragment

    spec = ExperimentSpec(
        config_name=config_name,
        seeds=tuple(seeds),
        total_timesteps=_first(
            args.timesteps, base.get("total_timesteps"),
            _env_default("TIMESTEPS", None, cast=int), 5_000_000,
        ),
        eval_episodes=_first(
            args.eval_episodes, base.get("eval_episodes"),
            _env_default("EVAL_EPISODES", None, cast=int), 100,
        ),
        output_dir=str(_first(
            args.outdir, base.get("output_dir"), _env_default("OUTDIR", None), "runs",
        )),
        overrides=overrides,
    )
    ppo_kwargs = dict(overrides)
    fragment = ppo_kwargs.pop("rollout_fragment", None)
    if "hidden" in ppo_kwargs:
        ppo_kwargs["hidden"] = tuple(ppo_kwargs["hidden"])
    ppo = PPOConfig(total_timesteps=spec.total_timesteps, **ppo_kwargs)
    if fragment is not None:
        ppo = replace(ppo, rollout_fragment=fragment, train_batch=fragment, minibatch=fragment)
    return spec, ppo


def _train_one_seed(spec_dict: dict, seed: int, ppo_dict: dict) -> tuple[int, str]:
    """Worker: train one seed and write its run directory. Returns (seed, '')."""
    spec = ExperimentSpec(
        config_name=spec_dict["config_name"],
        seeds=tuple(spec_dict["seeds"]),
        total_timesteps=spec_dict["total_timesteps"],
        eval_episodes=spec_dict["eval_episodes"],
        output_dir=spec_dict["output_dir"],
        overrides=spec_dict["overrides"],
    )
    ppo_dict = dict(ppo_dict)
    ppo_dict["hidden"] = tuple(ppo_dict["hidden"])
    ppo = PPOConfig(**ppo_dict)

    directory = run_dir(spec, seed)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = build_manifest(spec, seed, ppo)
    write_manifest(directory, manifest)
    writer = MetricsWriter(directory)
    checkpoint_extra = {
        "config_name": spec.config_name,
        "config_hash": manifest["config_hash"],
        "seed": seed,
        "obs": manifest["obs"],
    }
    result = train(
        spec.config_name,
        seed,
        config=ppo,
        on_iteration=writer.write,
        checkpoint_dir=directory / CHECKPOINTS_DIR,
        checkpoint_manifest=checkpoint_extra,
    )
    if spec.eval_episodes > 0:
        episodes = evaluate_policy(
            TorchPolicy(result.net),
            get_config(spec.config_name),
            env_rng=derive_rng(seed, STREAM_EVAL_ENV),
            action_rng=derive_rng(seed, STREAM_EVAL_ACTIONS),
            episodes=spec.eval_episodes,
        )
        write_eval(directory, episodes)
    return seed, ""


def cmd_train(args: argparse.Namespace) -> int:
    spec, ppo = _spec_from_args(args)

    for seed in spec.seeds:
        directory = run_dir(spec, seed)
        if directory.exists():
            if not args.overwrite:
                print(
                    f"error: run directory {directory} already exists (use --overwrite)",
                    file=sys.stderr,
                )
                return 1
            shutil.rmtree(directory)

    spec_dict = spec.to_dict()
    ppo_dict = ppo.to_dict()
    failures: dict[int, str] = {}
    if args.jobs <= 1 or len(spec.seeds) == 1:
        for seed in spec.seeds:
            try:
                _train_one_seed(spec_dict, seed, ppo_dict)
                print(f"[{spec.config_name} seed {seed}] done -> {run_dir(spec, seed)}")
            except Exception as exc:  # noqa: BLE001 - reported per seed
                failures[seed] = str(exc)
    else:
        with ProcessPoolExecutor(
            max_workers=min(args.jobs, len(spec.seeds)), mp_context=get_context("spawn")
        ) as pool:
            futures = {
                pool.submit(_train_one_seed, spec_dict, seed, ppo_dict): seed
                for seed in spec.seeds
            }
            for future, seed in futures.items():
                try:
                    future.result()
                    print(f"[{spec.config_name} seed {seed}] done -> {run_dir(spec, seed)}")
                except Exception as exc:  # noqa: BLE001
                    failures[seed] = str(exc)

    if failures:
        for seed, message in sorted(failures.items()):
            print(f"[{spec.config_name} seed {seed}] FAILED: {message}", file=sys.stderr)
        return 1
    return 0


def _resolve_checkpoint(path: str) -> Path:
    """Accept a checkpoint directory or a run directory (uses checkpoints/final)."""
    p = Path(path)
    if (p / "params.bin").exists():
        return p
    final = p / CHECKPOINTS_DIR / "final"
    if (final / "params.bin").exists():
        return final
    raise SystemExit(f"error: no checkpoint found at {path}")


def _load_policy(path: str, deterministic: bool):
    net, manifest = load_checkpoint(_resolve_checkpoint(path))
    config_name = manifest.get("config_name")
    if config_name is None:
        raise SystemExit("error: checkpoint manifest lacks a configuration name")
    obs_config = get_config(config_name)
    if obs_config.obs_dim != net.input_dim:
        raise SystemExit(
            f"error: checkpoint input dim {net.input_dim} does not match configuration "
            f"{config_name!r} observation dim {obs_config.obs_dim}"
        )
    return TorchPolicy(net, deterministic=deterministic), obs_config, manifest


def cmd_eval(args: argparse.Namespace) -> int:
    policy, obs_config, _ = _load_policy(args.checkpoint, args.deterministic)
    episodes = evaluate_policy(
        policy,
        obs_config,
        env_rng=derive_rng(args.seed, STREAM_EVAL_ENV),
        action_rng=derive_rng(args.seed, STREAM_EVAL_ACTIONS),
        episodes=args.episodes,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    written = write_eval(out.parent, episodes)
    if written != out:
        written.replace(out)
    success = sum(m.success for m in episodes)
    print(f"evaluated {len(episodes)} episodes: {success} successes -> {out}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    records = [load_run(d) for d in args.run_dirs]
    if len(records) == 1:
        print("warning: single run directory; confidence intervals are degenerate",
              file=sys.stderr)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    rows = final_policy_table(
        records, pooled=not args.per_seed, resamples=args.resamples, seed=args.bootstrap_seed
    )
    write_table_csv(outdir / "final_table.csv", rows)
    text = format_final_table(rows)
    (outdir / "final_table.txt").write_text(text)
    print(text, end="")

    by_config: dict[str, list] = {}
    for record in records:
        by_config.setdefault(record.config_name, []).append(record)

    curves_dir = outdir / "curves"
    curves_dir.mkdir(exist_ok=True)
    curves_by_metric: dict[str, dict[str, tuple]] = {m: {} for m in CURVE_METRICS}
    for config_name, group in by_config.items():
        if not all(record.timesteps.size for record in group):
            continue
        for metric in CURVE_METRICS:
            timesteps, stats = sample_complexity(
                group, metric, resamples=args.resamples, seed=args.bootstrap_seed
            )
            write_curve_csv(curves_dir / f"{config_name}__{metric}.csv", timesteps, stats)
            curves_by_metric[metric][config_name] = (timesteps, stats)

    if not args.no_figures:
        from .figures import plot_final_performance, plot_sample_complexity

        figures_dir = outdir / "figures"
        figures_dir.mkdir(exist_ok=True)
        for metric, label in CURVE_METRICS.items():
            if curves_by_metric[metric]:
                plot_sample_complexity(
                    curves_by_metric[metric], label, figures_dir / f"sample_complexity_{metric}.png"
                )
        from .metrics import EVAL_METRICS

        for metric, label in EVAL_METRICS.items():
            stats = {name: row[metric] for name, row in rows}
            if stats:
                plot_final_performance(stats, label, figures_dir / f"final_{metric}.png")
    return 0


def cmd_trace(args: argparse.Namespace) -> int:
    policy, obs_config, _ = _load_policy(args.checkpoint, args.deterministic)
    env = InspectionEnv(
        obs_config,
        rng=derive_rng(args.seed, STREAM_EVAL_ENV),
        weights=RewardWeightState(mode=Mode.EVALUATION),
    )
    trace_rows: list[TraceRow] = []
    metrics = run_episode(env, policy, derive_rng(args.seed, STREAM_EVAL_ACTIONS), trace=trace_rows)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trace(out, trace_rows)
    print(
        f"episode finished: {metrics.done_reason} after {metrics.episode_length} steps, "
        f"{metrics.inspected_points} points -> {out}"
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
