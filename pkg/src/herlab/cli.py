"""Experiment runner and diagnostics CLI.

Runs seeded training per (relabel mode, seed), writes per-run metrics CSVs
with JSON manifests, aggregates success curves across seeds (median and
interquartile range), and produces goal-distribution dumps for the
relabeled-reward diagnostic. Config files are flat key=value text; CLI
flags override file values.

Output layout for `herlab --out OUT --label L`:

    OUT/L/manifest.json                 experiment manifest
    OUT/L/<mode>/seed<k>/metrics.csv    per-run metrics
    OUT/L/<mode>/seed<k>/manifest.json  resolved per-run config
    OUT/L/<mode>/seed<k>/goals.csv      goal dump (with --dump-goals)
    OUT/L/<mode>/aggregate.csv          cross-seed success aggregate
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import METRICS_COLUMNS, MetricsLog, TrainConfig, train
from .envs import ENV_NAMES
from .relabel import STRATEGIES, RelabelMode, apply_relabeling

AGGREGATE_COLUMNS = ("episode", "env_steps", "success_median", "success_q1", "success_q3")
GOALS_COLUMNS = ("achieved_goal", "desired_goal", "relabeled_goal", "relabeled_reward")


@dataclass
class ExperimentSpec:
    """A training config fanned out over seeds and (optionally) modes."""

    config: TrainConfig
    seeds: list
    out_dir: Path
    label: str = "experiment"
    modes: list = field(default_factory=list)  # comparison set; defaults to [config.mode]
    dump_goals: int = 0

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        self.seeds = [int(s) for s in self.seeds]
        if not self.seeds:
            raise ValueError("seed list must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seed list must be duplicate-free")
        if not self.modes:
            self.modes = [self.config.mode]


def _config_dict(config):
    return {
        "env": config.env,
        "mode": config.mode.label,
        "episodes": config.episodes,
        "trajectories_per_episode": config.trajectories_per_episode,
        "horizon": config.horizon,
        "updates_per_trajectory": config.updates_per_trajectory,
        "batch_size": config.batch_size,
        "replay_ratio": config.replay_ratio,
        "gamma": config.gamma,
        "polyak": config.polyak,
        "actor_lr": config.actor_lr,
        "critic_lr": config.critic_lr,
        "model_lr": config.model_lr,
        "exploration_noise": config.exploration_noise,
        "random_action_prob": config.random_action_prob,
        "model_updates_per_batch": config.model_updates_per_batch,
        "buffer_capacity": config.buffer_capacity,
        "agent_hidden": list(config.agent_hidden),
        "model_hidden": list(config.model_hidden),
        "action_l2": config.action_l2,
        "eval_trials": config.eval_trials,
        "threshold": config.threshold,
        "seed": config.seed,
    }


def aggregate_success(logs):
    """Median and interquartile success per episode across per-seed logs."""
    if not logs:
        raise ValueError("nothing to aggregate")
    n_rows = len(logs[0].rows)
    if any(len(log.rows) != n_rows for log in logs):
        raise ValueError("per-seed logs have mismatched lengths")
    rows = []
    for i in range(n_rows):
        success = np.array([log.rows[i]["success_rate"] for log in logs])
        rows.append(
            {
                "episode": logs[0].rows[i]["episode"],
                "env_steps": logs[0].rows[i]["env_steps"],
                "success_median": float(np.median(success)),
                "success_q1": float(np.percentile(success, 25)),
                "success_q3": float(np.percentile(success, 75)),
            }
        )
    return rows


def write_aggregate_csv(path, rows):
    with open(path, "w") as fh:
        fh.write(",".join(AGGREGATE_COLUMNS) + "\n")
        for row in rows:
            cells = [str(row["episode"]), str(row["env_steps"])]
            cells += [repr(float(row[c])) for c in AGGREGATE_COLUMNS[2:]]
            fh.write(",".join(cells) + "\n")


def read_aggregate_csv(path):
    rows = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != AGGREGATE_COLUMNS:
            raise ValueError(f"{path} is not an aggregate CSV")
        for line in fh:
            vals = line.strip().split(",")
            rows.append(
                {
                    "episode": int(vals[0]),
                    "env_steps": int(vals[1]),
                    "success_median": float(vals[2]),
                    "success_q1": float(vals[3]),
                    "success_q3": float(vals[4]),
                }
            )
    return rows


def dump_goal_distribution(path, buffer, mode, threshold, achieved_goal_fn, count, rng,
                           model=None, policy=None, meta=None):
    """Sample stored transitions, relabel every one under mode, dump rows.

    Rows are: achieved_goal (of the transition), desired_goal (original),
    relabeled_goal, relabeled_reward. The mode is applied at ratio 1 so the
    dump characterizes the relabeling distribution itself.
    """
    if len(buffer) == 0:
        raise ValueError("cannot dump goals from an empty buffer")
    if count < 1:
        raise ValueError("count must be >= 1")
    minibatch = buffer.sample_minibatch(count, rng)
    relabeled, _ = apply_relabeling(
        minibatch, mode, 1.0, threshold, rng,
        model=model, policy=policy, achieved_goal_fn=achieved_goal_fn,
    )
    with open(path, "w") as fh:
        fh.write("# herlab goal dump v1\n")
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write("# columns: achieved_goal desired_goal relabeled_goal relabeled_reward\n")
        for (orig, _), (new, _) in zip(minibatch, relabeled):
            achieved = np.asarray(achieved_goal_fn(orig.next_state), dtype=np.float64)
            cells = [
                " ".join(f"{v:.17g}" for v in achieved),
                " ".join(f"{v:.17g}" for v in orig.desired_goal),
                " ".join(f"{v:.17g}" for v in new.desired_goal),
                f"{new.reward:.17g}",
            ]
            fh.write(" ".join(cells) + "\n")
    return path


def read_goal_dump(path):
    """Returns (achieved, desired, relabeled, rewards) arrays from a dump."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([float(v) for v in line.split()])
    if not rows:
        raise ValueError(f"goal dump {path} contains no data rows")
    data = np.array(rows)
    goal_dim = (data.shape[1] - 1) // 3
    return (
        data[:, 0:goal_dim],
        data[:, goal_dim : 2 * goal_dim],
        data[:, 2 * goal_dim : 3 * goal_dim],
        data[:, -1],
    )


def diagnostic_mean_relabeled_reward(path):
    """Mean of the relabeled_reward column of a goal dump."""
    _, _, _, rewards = read_goal_dump(path)
    return float(np.mean(rewards))


def run_experiment(spec):
    """Train every (mode, seed) pair sequentially; write all result files.

    Returns a dict with per-run and aggregate paths. Failures are recorded
    in the per-run manifest and re-raised after the sweep as RuntimeError.
    """
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    root = spec.out_dir / spec.label
    root.mkdir(parents=True, exist_ok=True)
    results = {"runs": [], "aggregates": [], "manifest": root / "manifest.json"}
    failures = []

    for mode in spec.modes:
        mode_dir = root / mode.label
        mode_dir.mkdir(parents=True, exist_ok=True)
        logs = []
        for seed in spec.seeds:
            run_dir = mode_dir / f"seed{seed}"
            run_dir.mkdir(parents=True, exist_ok=True)
            config = TrainConfig(**{**_config_dict(spec.config), "mode": mode, "seed": seed,
                                    "agent_hidden": tuple(spec.config.agent_hidden),
                                    "model_hidden": tuple(spec.config.model_hidden)})
            manifest = {
                "label": spec.label,
                "mode": mode.label,
                "seed": seed,
                "config": _config_dict(config),
                "status": "ok",
            }
            metrics_path = run_dir / "metrics.csv"
            try:
                result = train(config)
                result.metrics.write_csv(metrics_path)
                logs.append(result.metrics)
                results["runs"].append(metrics_path)
                if spec.dump_goals:
                    dump_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2**20]))
                    from .envs import make_env

                    env = make_env(config.env, threshold=config.threshold, horizon=config.horizon)
                    dump_goal_distribution(
                        run_dir / "goals.csv",
                        result.buffer,
                        mode,
                        env.spec.threshold,
                        env.achieved_goal,
                        spec.dump_goals,
                        dump_rng,
                        model=result.model,
                        policy=result.nets.policy,
                        meta={"label": spec.label, "mode": mode.label, "seed": seed},
                    )
            except Exception as exc:  # noqa: BLE001 - recorded, then surfaced
                manifest["status"] = f"failed: {exc}"
                failures.append((mode.label, seed, exc))
            with open(run_dir / "manifest.json", "w") as fh:
                json.dump(manifest, fh, indent=2, sort_keys=True)
                fh.write("\n")
        if logs:
            agg_path = mode_dir / "aggregate.csv"
            write_aggregate_csv(agg_path, aggregate_success(logs))
            results["aggregates"].append(agg_path)

    experiment_manifest = {
        "label": spec.label,
        "seeds": spec.seeds,
        "modes": [m.label for m in spec.modes],
        "config": _config_dict(spec.config),
        "dump_goals": spec.dump_goals,
        "failures": [f"{m}/seed{s}: {e}" for m, s, e in failures],
    }
    with open(results["manifest"], "w") as fh:
        json.dump(experiment_manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if failures:
        raise RuntimeError(f"{len(failures)} run(s) failed; see manifests under {root}")
    return results


# --- config file and flags ----------------------------------------------------

CONFIG_KEYS = {
    "env": str,
    "mode": str,
    "strategy": str,
    "n_steps": int,
    "replay_ratio": float,
    "episodes": int,
    "trajectories_per_episode": int,
    "horizon": int,
    "updates_per_trajectory": int,
    "batch_size": int,
    "gamma": float,
    "polyak": float,
    "actor_lr": float,
    "critic_lr": float,
    "model_lr": float,
    "exploration_noise": float,
    "random_action_prob": float,
    "model_updates_per_batch": int,
    "buffer_capacity": int,
    "action_l2": float,
    "trials": int,
    "threshold": float,
    "seed": int,
    "seeds": str,
    "out": str,
    "label": str,
    "dump_goals": int,
}


def load_config_file(path):
    """Flat `key = value` text; '#' starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in CONFIG_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = CONFIG_KEYS[key](value.strip())
    return values


def _parse_seeds(text):
    return [int(p) for p in str(text).replace(",", " ").split()]


def build_mode(kind, strategy, n_steps):
    if kind == "none":
        return RelabelMode.none()
    if kind == "her":
        return RelabelMode.her(strategy)
    if kind == "fr":
        return RelabelMode.foresight(strategy, n_steps)
    if kind == "mher":
        return RelabelMode.mher_style(n_steps)
    raise ValueError(f"unknown mode {kind!r}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="herlab",
        description="Seeded goal-relabeling experiments: HER, model-based foresight relabeling, DDPG baselines.",
    )
    parser.add_argument("--config", help="flat key=value config file; flags override it")
    parser.add_argument("--env", choices=ENV_NAMES, help="environment name")
    parser.add_argument("--mode", choices=("none", "her", "fr", "mher"), help="relabeling mode")
    parser.add_argument("--strategy", choices=STRATEGIES, help="start-state strategy for her/fr")
    parser.add_argument("--n-steps", type=int, dest="n_steps", help="model rollout depth for fr/mher")
    parser.add_argument("--replay-ratio", type=float, dest="replay_ratio", help="relabeling probability")
    parser.add_argument("--episodes", type=int, help="training episodes")
    parser.add_argument("--seed", type=int, help="single seed")
    parser.add_argument("--seeds", help="comma-separated seed list (overrides --seed)")
    parser.add_argument("--out", help="output directory root")
    parser.add_argument("--label", help="experiment label (output subdirectory)")
    parser.add_argument("--dump-goals", type=int, dest="dump_goals", metavar="N",
                        help="after each run, dump N relabeled-goal rows and print the mean relabeled reward")
    parser.add_argument("--trials", type=int, help="evaluation trials per episode")
    parser.add_argument("--compare-modes", dest="compare_modes",
                        help="comma-separated mode labels (e.g. 'none,her-future,fr-episode-5') "
                             "to run under the identical budget")
    return parser


def parse_mode_label(label):
    """Inverse of RelabelMode.label, e.g. 'fr-episode-5' or 'her-future'."""
    parts = label.split("-")
    if parts[0] == "none":
        return RelabelMode.none()
    if parts[0] == "her" and len(parts) == 2:
        return RelabelMode.her(parts[1])
    if parts[0] == "fr" and len(parts) == 3:
        return RelabelMode.foresight(parts[1], int(parts[2]))
    if parts[0] == "mher" and len(parts) == 2:
        return RelabelMode.mher_style(int(parts[1]))
    raise ValueError(f"cannot parse mode label {label!r}")


def spec_from_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    values = load_config_file(args.config) if args.config else {}
    for key in CONFIG_KEYS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            values[key] = flag_value

    kind = values.get("mode", "her")
    strategy = values.get("strategy", "future")
    n_steps = values.get("n_steps", 0)
    mode = build_mode(kind, strategy, n_steps)

    config_kwargs = {"mode": mode}
    for key in ("env", "episodes", "trajectories_per_episode", "horizon", "updates_per_trajectory",
                "batch_size", "replay_ratio", "gamma", "polyak", "actor_lr", "critic_lr", "model_lr",
                "exploration_noise", "random_action_prob", "model_updates_per_batch",
                "buffer_capacity", "action_l2", "threshold"):
        if key in values:
            config_kwargs[key] = values[key]
    if "trials" in values:
        config_kwargs["eval_trials"] = values["trials"]
    config = TrainConfig(**config_kwargs)

    if "seeds" in values:
        seeds = _parse_seeds(values["seeds"])
    else:
        seeds = [values.get("seed", 0)]
    modes = []
    if args.compare_modes:
        modes = [parse_mode_label(lbl.strip()) for lbl in args.compare_modes.split(",")]
    return ExperimentSpec(
        config=config,
        seeds=seeds,
        out_dir=Path(values.get("out", "runs")),
        label=values.get("label", "experiment"),
        modes=modes,
        dump_goals=int(values.get("dump_goals", 0) or 0),
    )


def main(argv=None):
    spec = spec_from_args(sys.argv[1:] if argv is None else argv)
    try:
        results = run_experiment(spec)
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in results["runs"]:
        print(f"metrics: {path}")
        goals = path.parent / "goals.csv"
        if goals.exists():
            mean_rr = diagnostic_mean_relabeled_reward(goals)
            print(f"goal dump: {goals} (mean relabeled reward {mean_rr:.4f})")
    for path in results["aggregates"]:
        print(f"aggregate: {path}")
    print(f"manifest: {results['manifest']}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
