"""Goal-relabeling reinforcement-learning laboratory.

A self-contained numpy lab for studying goal relabeling under sparse
rewards: hindsight relabeling (future/episode/final), model-based
foresight relabeling driven by a learned delta-dynamics model, the
mher-style anchored-rollout ablation, a DDPG agent, and desk-scale 2D
goal-conditioned environments, with a seeded experiment CLI (`herlab`).
"""

from .agent import (
    METRICS_COLUMNS,
    AgentNets,
    MetricsLog,
    TrainConfig,
    TrainResult,
    batch_arrays,
    collect_trajectory,
    evaluate,
    train,
)
from .cli import (
    ExperimentSpec,
    aggregate_success,
    diagnostic_mean_relabeled_reward,
    dump_goal_distribution,
    run_experiment,
)
from .dynamics import DynamicsModel, VirtualRollout
from .envs import (
    ENV_NAMES,
    GoalEnvSpec,
    LinearEnv,
    PointPush,
    PointReach,
    StepResult,
    compute_reward,
    make_env,
)
from .nets import Adam, Mlp, RunningNormalizer, load_snapshot, save_snapshot
from .relabel import (
    STRATEGIES,
    RelabelMode,
    RelabelStats,
    apply_relabeling,
    foresight_relabel,
    her_relabel,
    mher_relabel,
    select_start_index,
)
from .replay import ReplayBuffer, Trajectory, Transition, load_trajectories, save_trajectories

__all__ = [
    "METRICS_COLUMNS",
    "ENV_NAMES",
    "STRATEGIES",
    "Adam",
    "AgentNets",
    "DynamicsModel",
    "ExperimentSpec",
    "GoalEnvSpec",
    "LinearEnv",
    "MetricsLog",
    "Mlp",
    "PointPush",
    "PointReach",
    "RelabelMode",
    "RelabelStats",
    "ReplayBuffer",
    "RunningNormalizer",
    "StepResult",
    "TrainConfig",
    "TrainResult",
    "Trajectory",
    "Transition",
    "VirtualRollout",
    "aggregate_success",
    "apply_relabeling",
    "batch_arrays",
    "collect_trajectory",
    "compute_reward",
    "diagnostic_mean_relabeled_reward",
    "dump_goal_distribution",
    "evaluate",
    "foresight_relabel",
    "her_relabel",
    "load_snapshot",
    "load_trajectories",
    "make_env",
    "mher_relabel",
    "run_experiment",
    "save_snapshot",
    "save_trajectories",
    "select_start_index",
    "train",
]
