"""Goal-relabeling machinery.

Hindsight relabeling (future/episode/final), foresight relabeling (pick a
start state in the stored trajectory by strategy, roll the learned model
forward under the current policy, relabel with a goal from the virtual
trajectory), the mher-style ablation (rollout always anchored at the
transition's own next state), and the minibatch pipeline governed by the
replay ratio.

Relabeling replaces only desired_goal and reward; rewards are recomputed
on the post-transition achieved goal. Start/relabel indices k run over
[1, T] and refer to stored pre-step states (see replay.Trajectory).

rng draw orders are part of the contract so tests can replay them:

* select_start_index: one integers draw (none for final, or future at t=T).
* her_relabel: the start-index draw only.
* foresight_relabel / mher_relabel: start-index draw (foresight only),
  then per rollout step one standard_normal(action_dim) draw, then one
  integers draw choosing among the produced states.
* apply_relabeling (vectorized): one random(B) mask draw, then for the
  relabeled subset in batch order: one batched start-index draw (her/fr,
  strategies that draw), one standard_normal((m, action_dim)) per rollout
  step, one batched choice draw (fr/mher). Nothing is drawn when the mode
  is "none", the ratio is 0, or the mask selects nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .envs import compute_reward

STRATEGIES = ("future", "episode", "final")
MODE_KINDS = ("none", "her", "fr", "mher")
MAX_ROLLOUT_STEPS = 16
ROLLOUT_NOISE = 0.2


@dataclass(frozen=True)
class RelabelMode:
    """Which relabeler runs inside the minibatch pipeline.

    kind "none" keeps stored goals; "her" relabels with stored achieved
    goals; "fr" rolls the model out from a strategy-selected start state;
    "mher" rolls out from the transition's own next state.
    """

    kind: str
    strategy: str | None = None
    n_steps: int = 0

    def __post_init__(self):
        if self.kind not in MODE_KINDS:
            raise ValueError(f"mode kind must be one of {MODE_KINDS}, got {self.kind!r}")
        if self.kind in ("her", "fr"):
            if self.strategy not in STRATEGIES:
                raise ValueError(f"{self.kind} mode needs a strategy from {STRATEGIES}")
        elif self.strategy is not None:
            raise ValueError(f"{self.kind} mode takes no strategy")
        if not 0 <= self.n_steps <= MAX_ROLLOUT_STEPS:
            raise ValueError(f"rollout depth must lie in [0, {MAX_ROLLOUT_STEPS}]")
        if self.kind in ("none", "her") and self.n_steps != 0:
            raise ValueError(f"{self.kind} mode takes no rollout depth")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def her(cls, strategy):
        return cls("her", strategy=strategy)

    @classmethod
    def foresight(cls, strategy, n_steps):
        return cls("fr", strategy=strategy, n_steps=n_steps)

    @classmethod
    def mher_style(cls, n_steps):
        return cls("mher", n_steps=n_steps)

    @property
    def needs_model(self):
        return self.kind in ("fr", "mher")

    @property
    def label(self):
        if self.kind == "none":
            return "none"
        if self.kind == "her":
            return f"her-{self.strategy}"
        if self.kind == "fr":
            return f"fr-{self.strategy}-{self.n_steps}"
        return f"mher-{self.n_steps}"


@dataclass(frozen=True)
class RelabelStats:
    """Per-minibatch bookkeeping for the metrics log."""

    total: int
    relabeled: int
    mean_relabeled_reward: float
    truncated_rollouts: int


def select_start_index(strategy, t, T, rng):
    """Start-state index k for transition t of a length-T trajectory.

    future: uniform in (t, T] (t = T degenerates to T); episode: uniform in
    [1, T]; final: T.
    """
    if not 1 <= t <= T:
        raise ValueError(f"step index {t} outside [1, {T}]")
    if strategy == "final":
        return T
    if strategy == "episode":
        return int(rng.integers(1, T + 1))
    if strategy == "future":
        if t >= T:
            return T
        return int(rng.integers(t + 1, T + 1))
    raise ValueError(f"unknown strategy {strategy!r}")


def her_relabel(transition, trajectory, strategy, threshold, rng):
    """Replace the goal with a stored achieved goal; recompute the reward."""
    k = select_start_index(strategy, transition.t, len(trajectory), rng)
    new_goal = np.array(trajectory.achieved_goal_at(k))
    achieved_next = trajectory.achieved_goal_at(transition.t + 1)
    reward = compute_reward(achieved_next, new_goal, threshold)
    return replace(transition, desired_goal=new_goal, reward=reward)


def _single_rollout_pick(model, policy, start, goal, n_steps, rng, rollout_noise):
    roll = model.rollout(policy, start, goal, n_steps, rollout_noise, rng)
    pick = int(rng.integers(0, len(roll)))
    return roll.states[pick]


def foresight_relabel(
    transition, trajectory, model, policy, strategy, n_steps, achieved_goal_fn, threshold, rng,
    rollout_noise=ROLLOUT_NOISE,
):
    """Relabel with a goal foreseen by rolling the model from a start state.

    The start state is strategy-selected in the stored trajectory; the
    rollout conditions the policy on the transition's original goal; the
    relabeled goal is the achieved-goal projection of a state chosen
    uniformly from the virtual trajectory (start included).
    """
    k = select_start_index(strategy, transition.t, len(trajectory), rng)
    state = _single_rollout_pick(
        model, policy, trajectory.state_at(k), transition.desired_goal, n_steps, rng, rollout_noise
    )
    new_goal = np.array(achieved_goal_fn(state))
    reward = compute_reward(achieved_goal_fn(transition.next_state), new_goal, threshold)
    return replace(transition, desired_goal=new_goal, reward=reward)


def mher_relabel(
    transition, trajectory, model, policy, n_steps, achieved_goal_fn, threshold, rng,
    rollout_noise=ROLLOUT_NOISE,
):
    """Foresight relabeling with the rollout anchored at the own next state.

    No start-strategy freedom: this is the relabeling geometry that hands
    out success rewards for free once the model is any good (with n = 0 the
    relabeled goal is the transition's own achieved goal, reward 0 always).
    """
    state = _single_rollout_pick(
        model, policy, transition.next_state, transition.desired_goal, n_steps, rng, rollout_noise
    )
    new_goal = np.array(achieved_goal_fn(state))
    reward = compute_reward(achieved_goal_fn(transition.next_state), new_goal, threshold)
    return replace(transition, desired_goal=new_goal, reward=reward)


def _batch_start_indices(strategy, ts, Ts, rng):
    if strategy == "final":
        return Ts.copy()
    if strategy == "episode":
        return rng.integers(1, Ts + 1)
    if strategy == "future":
        lows = np.minimum(ts + 1, Ts)
        return rng.integers(lows, Ts + 1)
    raise ValueError(f"unknown strategy {strategy!r}")


def _batch_rollout(model, policy, starts, goals, n_steps, noise_scale, rng):
    """Lockstep rollout of m lanes; lanes freeze at their last finite state.

    Returns (all_states (n+1, m, state_dim), n_valid (m,), truncated count).
    """
    m = starts.shape[0]
    states = starts
    all_states = [starts]
    alive = np.ones(m, dtype=bool)
    n_valid = np.ones(m, dtype=np.int64)
    bound = model.action_bound
    for _ in range(n_steps):
        actions = np.asarray(policy(states, goals), dtype=np.float64)
        noise = rng.standard_normal((m, model.action_dim)) * (noise_scale * bound)
        actions = np.clip(actions + noise, -bound, bound)
        preds = model.predict_next(states, actions)
        alive = alive & np.isfinite(preds).all(axis=1)
        states = np.where(alive[:, None], preds, states)
        n_valid += alive
        all_states.append(states)
    return np.stack(all_states), n_valid, int(m - alive.sum())


def apply_relabeling(
    minibatch, mode, replay_ratio, threshold, rng,
    model=None, policy=None, achieved_goal_fn=None,
):
    """Independently relabel each transition with probability replay_ratio.

    minibatch is a list of (Transition, Trajectory) pairs as produced by
    ReplayBuffer.sample_minibatch; a new list is returned with order
    preserved and untouched entries identical. Also returns RelabelStats.
    Model-based modes require model, policy, and achieved_goal_fn.
    """
    if not 0.0 <= replay_ratio <= 1.0:
        raise ValueError(f"replay_ratio must lie in [0, 1], got {replay_ratio}")
    if mode.needs_model and (model is None or policy is None or achieved_goal_fn is None):
        raise ValueError(f"mode {mode.label} requires a dynamics model, policy, and goal projection")
    batch = list(minibatch)
    empty = RelabelStats(total=len(batch), relabeled=0, mean_relabeled_reward=float("nan"), truncated_rollouts=0)
    if mode.kind == "none" or replay_ratio == 0.0 or not batch:
        return batch, empty

    mask = rng.random(len(batch)) < replay_ratio
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return batch, empty
    sub = [batch[i] for i in idx]
    ts = np.array([tr.t for tr, _ in sub])
    Ts = np.array([len(traj) for _, traj in sub])
    truncated = 0

    if mode.kind == "her":
        ks = _batch_start_indices(mode.strategy, ts, Ts, rng)
        new_goals = np.stack([traj.achieved_goal_at(int(k)) for (_, traj), k in zip(sub, ks)])
        achieved_next = np.stack([traj.achieved_goal_at(tr.t + 1) for tr, traj in sub])
    else:
        if mode.kind == "fr":
            ks = _batch_start_indices(mode.strategy, ts, Ts, rng)
            starts = np.stack([traj.state_at(int(k)) for (_, traj), k in zip(sub, ks)])
        else:
            starts = np.stack([tr.next_state for tr, _ in sub])
        cond_goals = np.stack([tr.desired_goal for tr, _ in sub])
        all_states, n_valid, truncated = _batch_rollout(
            model, policy, starts, cond_goals, mode.n_steps, ROLLOUT_NOISE, rng
        )
        choice = rng.integers(0, n_valid)
        picked = all_states[choice, np.arange(idx.size)]
        new_goals = np.asarray(achieved_goal_fn(picked), dtype=np.float64)
        achieved_next = np.asarray(
            achieved_goal_fn(np.stack([tr.next_state for tr, _ in sub])), dtype=np.float64
        )

    rewards = compute_reward(achieved_next, new_goals, threshold)
    for j, i in enumerate(idx):
        tr, traj = batch[i]
        batch[i] = (replace(tr, desired_goal=new_goals[j].copy(), reward=float(rewards[j])), traj)
    stats = RelabelStats(
        total=len(batch),
        relabeled=int(idx.size),
        mean_relabeled_reward=float(np.mean(rewards)),
        truncated_rollouts=truncated,
    )
    return batch, stats
