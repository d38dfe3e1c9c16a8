"""DDPG actor-critic agent and the training loop.

The loop interleaves trajectory collection, dynamics-model updates (two
Adam steps per sampled batch, model-based modes only), minibatch goal
relabeling, and critic/actor/target updates, then evaluates the
deterministic policy after every episode. Single-threaded by contract:
one seed fully determines a run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import DynamicsModel
from .envs import make_env
from .nets import Adam, Mlp, RunningNormalizer, load_snapshot, save_snapshot
from .relabel import RelabelMode, apply_relabeling
from .replay import ReplayBuffer, Trajectory, Transition

METRICS_COLUMNS = (
    "episode",
    "env_steps",
    "success_rate",
    "critic_loss",
    "actor_loss",
    "model_loss",
    "mean_relabeled_reward",
    "truncated_rollouts",
)


@dataclass
class TrainConfig:
    """Every knob of the training schedule; defaults follow the lab protocol."""

    env: str = "point-reach"
    mode: RelabelMode = RelabelMode.her("future")
    episodes: int = 30
    trajectories_per_episode: int = 50
    horizon: int = 50
    updates_per_trajectory: int = 40
    batch_size: int = 256
    replay_ratio: float = 0.8
    gamma: float = 0.98
    polyak: float = 0.05
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    model_lr: float = 1e-3
    exploration_noise: float = 0.2
    random_action_prob: float = 0.3
    model_updates_per_batch: int = 2
    buffer_capacity: int = 1000
    agent_hidden: tuple = (64, 64, 64)
    model_hidden: tuple = (256, 256, 256, 256)
    action_l2: float = 1.0
    eval_trials: int = 10
    threshold: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.mode, str):
            raise TypeError("mode must be a RelabelMode (see RelabelMode.her/foresight/mher_style)")
        for name in ("episodes", "trajectories_per_episode", "horizon", "updates_per_trajectory",
                     "batch_size", "model_updates_per_batch", "buffer_capacity", "eval_trials"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 <= self.polyak <= 1.0:
            raise ValueError("polyak must lie in [0, 1]")
        if not 0.0 <= self.replay_ratio <= 1.0:
            raise ValueError("replay_ratio must lie in [0, 1]")
        self.agent_hidden = tuple(self.agent_hidden)
        self.model_hidden = tuple(self.model_hidden)


class AgentNets:
    """Actor pi(s, g), critic Q(s, a, g), target copies, input normalizers.

    The actor MLP emits pre-tanh activations; actions are
    action_bound * tanh(u), which keeps them inside the bounds and gives the
    saturation penalty something to bite on. Critic targets are clipped to
    [-1/(1-gamma), 0], the value range of the sparse -1/0 reward.
    """

    def __init__(
        self,
        state_dim,
        goal_dim,
        action_dim,
        action_bound=1.0,
        hidden=(64, 64, 64),
        gamma=0.98,
        polyak=0.05,
        actor_lr=1e-3,
        critic_lr=1e-3,
        action_l2=1.0,
        rng=None,
    ):
        self.state_dim = int(state_dim)
        self.goal_dim = int(goal_dim)
        self.action_dim = int(action_dim)
        self.action_bound = float(action_bound)
        self.gamma = float(gamma)
        self.polyak = float(polyak)
        self.action_l2 = float(action_l2)
        self.actor = Mlp([state_dim + goal_dim, *hidden, action_dim], rng=rng)
        self.critic = Mlp([state_dim + action_dim + goal_dim, *hidden, 1], rng=rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.state_norm = RunningNormalizer(state_dim)
        self.goal_norm = RunningNormalizer(goal_dim)
        self.actor_opt = Adam(self.actor.parameters(), lr=actor_lr, names=self.actor.parameter_names("actor."))
        self.critic_opt = Adam(self.critic.parameters(), lr=critic_lr, names=self.critic.parameter_names("critic."))
        self.critic_steps = 0
        self.actor_steps = 0
        self.polyak_steps = 0

    # -- forward passes ---------------------------------------------------

    def _actor_input(self, states, goals):
        return np.concatenate(
            [self.state_norm.normalize(states), self.goal_norm.normalize(goals)], axis=-1
        )

    def _critic_input(self, states, actions, goals):
        return np.concatenate(
            [
                self.state_norm.normalize(states),
                np.asarray(actions, dtype=np.float64) / self.action_bound,
                self.goal_norm.normalize(goals),
            ],
            axis=-1,
        )

    def policy(self, states, goals):
        """Deterministic action(s); accepts single vectors or batches."""
        u = self.actor.forward(self._actor_input(states, goals))
        return self.action_bound * np.tanh(u)

    def select_action(self, state, goal, explore, rng, noise_scale=0.2, random_action_prob=0.3):
        """Exploration wrapper: with probability random_action_prob a uniform
        action, otherwise the policy plus Gaussian noise; always clipped."""
        if not explore:
            return self.policy(state, goal)
        if rng.random() < random_action_prob:
            return rng.uniform(-self.action_bound, self.action_bound, self.action_dim)
        action = self.policy(state, goal) + noise_scale * self.action_bound * rng.standard_normal(self.action_dim)
        return np.clip(action, -self.action_bound, self.action_bound)

    # -- losses and updates -------------------------------------------------

    def critic_targets(self, batch):
        """y = clip(r + gamma * Q_target(s', pi_target(s', g), g), -1/(1-gamma), 0)."""
        next_actions = self.action_bound * np.tanh(
            self.actor_target.forward(self._actor_input(batch["next_states"], batch["goals"]))
        )
        next_q = self.critic_target.forward(
            self._critic_input(batch["next_states"], next_actions, batch["goals"])
        )[:, 0]
        targets = batch["rewards"] + self.gamma * next_q
        return np.clip(targets, -1.0 / (1.0 - self.gamma), 0.0)

    def critic_loss(self, batch):
        targets = self.critic_targets(batch)
        q = self.critic.forward(self._critic_input(batch["states"], batch["actions"], batch["goals"]))[:, 0]
        return float(np.mean((q - targets) ** 2))

    def critic_update(self, batch):
        targets = self.critic_targets(batch)
        q, cache = self.critic.forward_cached(
            self._critic_input(batch["states"], batch["actions"], batch["goals"])
        )
        diff = q[:, 0] - targets
        loss = float(np.mean(diff**2))
        if not np.isfinite(loss):
            raise ValueError("non-finite critic loss")
        n = diff.shape[0]
        grads, _ = self.critic.backward(cache, (2.0 / n) * diff[:, None])
        self.critic_opt.step(grads)
        self.critic_steps += 1
        return loss

    def _actor_terms(self, batch):
        u = self.actor.forward(self._actor_input(batch["states"], batch["goals"]))
        actions = self.action_bound * np.tanh(u)
        q = self.critic.forward(self._critic_input(batch["states"], actions, batch["goals"]))[:, 0]
        return u, q

    def actor_loss(self, batch):
        u, q = self._actor_terms(batch)
        return float(-np.mean(q) + self.action_l2 * np.mean(np.sum(u**2, axis=1)))

    def actor_update(self, batch):
        inp = self._actor_input(batch["states"], batch["goals"])
        u, actor_cache = self.actor.forward_cached(inp)
        tanh_u = np.tanh(u)
        actions = self.action_bound * tanh_u
        q, critic_cache = self.critic.forward_cached(
            self._critic_input(batch["states"], actions, batch["goals"])
        )
        n = u.shape[0]
        loss = float(-np.mean(q[:, 0]) + self.action_l2 * np.mean(np.sum(u**2, axis=1)))
        if not np.isfinite(loss):
            raise ValueError("non-finite actor loss")
        # dQ/d(critic action input) pulled back through the tanh squashing;
        # the critic consumes actions / action_bound, so the bounds cancel
        _, critic_input_grad = self.critic.backward(critic_cache, np.full((n, 1), -1.0 / n))
        grad_action_input = critic_input_grad[:, self.state_dim : self.state_dim + self.action_dim]
        upstream_u = grad_action_input * (1.0 - tanh_u**2) + (2.0 * self.action_l2 / n) * u
        grads, _ = self.actor.backward(actor_cache, upstream_u)
        self.actor_opt.step(grads)
        self.actor_steps += 1
        return loss

    def polyak_update(self):
        """target <- (1 - polyak) * target + polyak * main, elementwise."""
        for target_net, main_net in ((self.actor_target, self.actor), (self.critic_target, self.critic)):
            for tp, mp in zip(target_net.parameters(), main_net.parameters()):
                tp *= 1.0 - self.polyak
                tp += self.polyak * mp
        self.polyak_steps += 1

    # -- snapshots -----------------------------------------------------------

    def save(self, path):
        save_snapshot(
            path,
            mlps={
                "actor": self.actor,
                "critic": self.critic,
                "actor_target": self.actor_target,
                "critic_target": self.critic_target,
            },
            normalizers={"state": self.state_norm, "goal": self.goal_norm},
            scalars={
                "action_bound": self.action_bound,
                "gamma": self.gamma,
                "polyak": self.polyak,
                "action_l2": self.action_l2,
            },
        )

    @classmethod
    def load(cls, path):
        mlps, norms, scalars = load_snapshot(path)
        actor = mlps["actor"]
        critic = mlps["critic"]
        goal_dim = norms["goal"].dim
        state_dim = norms["state"].dim
        action_dim = actor.layer_sizes[-1]
        nets = cls(
            state_dim,
            goal_dim,
            action_dim,
            action_bound=scalars["action_bound"],
            hidden=actor.layer_sizes[1:-1],
            gamma=scalars["gamma"],
            polyak=scalars["polyak"],
            action_l2=scalars["action_l2"],
            rng=np.random.default_rng(0),
        )
        nets.actor = actor
        nets.critic = critic
        nets.actor_target = mlps["actor_target"]
        nets.critic_target = mlps["critic_target"]
        nets.state_norm = norms["state"]
        nets.goal_norm = norms["goal"]
        nets.actor_opt = Adam(actor.parameters(), lr=nets.actor_opt.lr, names=actor.parameter_names("actor."))
        nets.critic_opt = Adam(critic.parameters(), lr=nets.critic_opt.lr, names=critic.parameter_names("critic."))
        return nets


def batch_arrays(minibatch):
    """Stack a list of (Transition, Trajectory) pairs into column arrays."""
    return {
        "states": np.stack([tr.state for tr, _ in minibatch]),
        "actions": np.stack([tr.action for tr, _ in minibatch]),
        "next_states": np.stack([tr.next_state for tr, _ in minibatch]),
        "goals": np.stack([tr.desired_goal for tr, _ in minibatch]),
        "rewards": np.array([tr.reward for tr, _ in minibatch]),
    }


def collect_trajectory(env, nets, rng, trajectory_id, explore=True, noise_scale=0.2, random_action_prob=0.3):
    """Run one episode in the real environment and package it for the buffer."""
    state, goal = env.reset(rng)
    transitions = []
    states = [state]
    for t in range(1, env.spec.horizon + 1):
        action = nets.select_action(
            state, goal, explore, rng, noise_scale=noise_scale, random_action_prob=random_action_prob
        )
        res = env.step(state, action, goal)
        transitions.append(
            Transition(
                state=state,
                action=np.asarray(action, dtype=np.float64),
                next_state=res.next_state,
                desired_goal=goal,
                reward=res.reward,
                t=t,
                trajectory_id=trajectory_id,
            )
        )
        state = res.next_state
        states.append(state)
    achieved = np.stack([env.achieved_goal(s) for s in states])
    return Trajectory(transitions, achieved)


def evaluate(nets, env, trials, rng):
    """Deterministic-policy success rate; success = goal reached at any step."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    successes = 0
    for _ in range(trials):
        state, goal = env.reset(rng)
        for _ in range(env.spec.horizon):
            res = env.step(state, nets.policy(state, goal), goal)
            state = res.next_state
            if res.success:
                successes += 1
                break
    return successes / trials


@dataclass
class MetricsLog:
    """One row per episode; the CSV column order is fixed."""

    rows: list = field(default_factory=list)

    def append(self, **kwargs):
        if set(kwargs) != set(METRICS_COLUMNS):
            raise ValueError(f"metrics row must have exactly the columns {METRICS_COLUMNS}")
        self.rows.append(kwargs)

    def column(self, name):
        return [row[name] for row in self.rows]

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write(",".join(METRICS_COLUMNS) + "\n")
            for row in self.rows:
                cells = []
                for col in METRICS_COLUMNS:
                    value = row[col]
                    cells.append(str(value) if isinstance(value, int) else repr(float(value)))
                fh.write(",".join(cells) + "\n")

    @staticmethod
    def read_csv(path):
        log = MetricsLog()
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != METRICS_COLUMNS:
                raise ValueError(f"{path} does not look like a herlab metrics CSV")
            for line in fh:
                values = line.strip().split(",")
                row = {}
                for col, val in zip(METRICS_COLUMNS, values):
                    row[col] = int(val) if col in ("episode", "env_steps", "truncated_rollouts") else float(val)
                log.rows.append(row)
        return log


@dataclass
class TrainResult:
    metrics: MetricsLog
    nets: AgentNets
    model: DynamicsModel | None
    buffer: ReplayBuffer
    counters: dict
    config: TrainConfig


def _mean_or_nan(values):
    return float(np.mean(values)) if values else float("nan")


def train(config):
    """Run the full training schedule for one seed; returns the metrics log
    plus the trained networks, model, and buffer for diagnostics."""
    env = make_env(config.env, threshold=config.threshold, horizon=config.horizon)
    eval_env = make_env(config.env, threshold=config.threshold, horizon=config.horizon)
    seq = np.random.SeedSequence(config.seed)
    init_seq, train_seq, eval_seq = seq.spawn(3)
    rng_init = np.random.default_rng(init_seq)
    rng_train = np.random.default_rng(train_seq)
    rng_eval = np.random.default_rng(eval_seq)

    spec = env.spec
    nets = AgentNets(
        spec.state_dim,
        spec.goal_dim,
        spec.action_dim,
        action_bound=spec.action_bound,
        hidden=config.agent_hidden,
        gamma=config.gamma,
        polyak=config.polyak,
        actor_lr=config.actor_lr,
        critic_lr=config.critic_lr,
        action_l2=config.action_l2,
        rng=rng_init,
    )
    model = None
    if config.mode.needs_model:
        model = DynamicsModel(
            spec.state_dim,
            spec.action_dim,
            action_bound=spec.action_bound,
            hidden=config.model_hidden,
            lr=config.model_lr,
            updates_per_batch=config.model_updates_per_batch,
            rng=rng_init,
        )
    buffer = ReplayBuffer(capacity=config.buffer_capacity)

    metrics = MetricsLog()
    counters = {
        "batches_sampled": 0,
        "relabel_passes": 0,
        "stored_trajectories": 0,
        "env_steps": 0,
    }
    trajectory_counter = 0

    for episode in range(1, config.episodes + 1):
        critic_losses = []
        actor_losses = []
        model_losses = []
        relabeled_reward_sum = 0.0
        relabeled_count = 0
        truncated = 0
        for _ in range(config.trajectories_per_episode):
            traj = collect_trajectory(
                env,
                nets,
                rng_train,
                trajectory_counter,
                explore=True,
                noise_scale=config.exploration_noise,
                random_action_prob=config.random_action_prob,
            )
            trajectory_counter += 1
            buffer.store_trajectory(traj)
            counters["stored_trajectories"] += 1
            counters["env_steps"] += len(traj)

            all_states = np.stack([tr.state for tr in traj.transitions] + [traj.transitions[-1].next_state])
            nets.state_norm.update(all_states)
            nets.goal_norm.update(np.vstack([traj.desired_goal[None, :], traj.achieved_goals]))
            if model is not None:
                model.observe(all_states[:-1], np.stack([tr.action for tr in traj.transitions]))

            for _ in range(config.updates_per_trajectory):
                minibatch = buffer.sample_minibatch(config.batch_size, rng_train)
                counters["batches_sampled"] += 1
                if model is not None:
                    raw = batch_arrays(minibatch)
                    model_losses.append(model.update(raw["states"], raw["actions"], raw["next_states"]))
                relabeled, stats = apply_relabeling(
                    minibatch,
                    config.mode,
                    config.replay_ratio,
                    spec.threshold,
                    rng_train,
                    model=model,
                    policy=nets.policy,
                    achieved_goal_fn=env.achieved_goal,
                )
                counters["relabel_passes"] += 1
                if stats.relabeled:
                    relabeled_reward_sum += stats.mean_relabeled_reward * stats.relabeled
                    relabeled_count += stats.relabeled
                truncated += stats.truncated_rollouts
                arrays = batch_arrays(relabeled)
                critic_losses.append(nets.critic_update(arrays))
                actor_losses.append(nets.actor_update(arrays))
                nets.polyak_update()

        success = evaluate(nets, eval_env, config.eval_trials, rng_eval)
        metrics.append(
            episode=episode,
            env_steps=counters["env_steps"],
            success_rate=success,
            critic_loss=_mean_or_nan(critic_losses),
            actor_loss=_mean_or_nan(actor_losses),
            model_loss=_mean_or_nan(model_losses),
            mean_relabeled_reward=(
                relabeled_reward_sum / relabeled_count if relabeled_count else float("nan")
            ),
            truncated_rollouts=truncated,
        )

    counters["critic_steps"] = nets.critic_steps
    counters["actor_steps"] = nets.actor_steps
    counters["polyak_steps"] = nets.polyak_steps
    counters["model_adam_steps"] = model.adam_steps if model is not None else 0
    counters["state_norm_rows"] = nets.state_norm.rows_seen
    counters["goal_norm_rows"] = nets.goal_norm.rows_seen
    counters["model_state_norm_rows"] = model.state_norm.rows_seen if model is not None else 0
    counters["model_action_norm_rows"] = model.action_norm.rows_seen if model is not None else 0
    return TrainResult(metrics=metrics, nets=nets, model=model, buffer=buffer, counters=counters, config=config)
