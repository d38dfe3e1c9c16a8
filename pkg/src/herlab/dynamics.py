"""Learned delta-dynamics model and virtual rollouts.

The model predicts state differences and composes next states as
state + delta(state, action). It trains on mean squared delta error over
(state, action, next_state) triples only; goals and rewards never enter,
so relabeled minibatches are equally valid training input. Rollouts step
a policy through the model with exploration noise to produce virtual
state sequences; virtual states feed goal relabeling and nothing else.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nets import Adam, Mlp, RunningNormalizer, load_snapshot, save_snapshot

DEFAULT_HIDDEN = (256, 256, 256, 256)


@dataclass(frozen=True)
class VirtualRollout:
    """Model-predicted state sequence starting at a real state.

    states has n+1 rows for a full rollout; fewer when truncated because a
    predicted state went non-finite (the flag records that). Virtual states
    supply relabeling goals only.
    """

    states: np.ndarray
    actions: np.ndarray
    goal: np.ndarray
    truncated: bool = field(default=False)

    @property
    def start_state(self):
        return self.states[0]

    def __len__(self):
        return self.states.shape[0]


class DynamicsModel:
    """MLP over normalized (state, action) predicting the raw state delta.

    Normalizers are fit on real transitions only (observe()); virtual
    states never touch them. update() runs updates_per_batch Adam steps on
    one batch and returns the pre-update loss.
    """

    def __init__(
        self,
        state_dim,
        action_dim,
        action_bound=1.0,
        hidden=DEFAULT_HIDDEN,
        lr=1e-3,
        updates_per_batch=2,
        rng=None,
    ):
        if updates_per_batch < 1:
            raise ValueError("updates_per_batch must be >= 1")
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.action_bound = float(action_bound)
        self.updates_per_batch = int(updates_per_batch)
        self.mlp = Mlp([self.state_dim + self.action_dim, *hidden, self.state_dim], rng=rng)
        self.state_norm = RunningNormalizer(self.state_dim)
        self.action_norm = RunningNormalizer(self.action_dim)
        self.opt = Adam(self.mlp.parameters(), lr=lr, names=self.mlp.parameter_names("model."))
        self.adam_steps = 0
        self.predict_rows = 0

    def observe(self, states, actions):
        """Fold real transitions into the input normalizers."""
        self.state_norm.update(states)
        self.action_norm.update(actions)

    def _inputs(self, states, actions):
        return np.concatenate(
            [self.state_norm.normalize(states), self.action_norm.normalize(actions)], axis=-1
        )

    def predict_next(self, state, action):
        """state + delta(state, action); accepts single vectors or batches."""
        state = np.asarray(state, dtype=np.float64)
        action = np.asarray(action, dtype=np.float64)
        if not (np.all(np.isfinite(state)) and np.all(np.isfinite(action))):
            raise ValueError("non-finite inputs to predict_next")
        delta = self.mlp.forward(self._inputs(state, action))
        self.predict_rows += 1 if state.ndim == 1 else state.shape[0]
        return state + delta

    def loss(self, states, actions, next_states):
        """Mean over the batch of the squared delta-error norm."""
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        next_states = np.atleast_2d(np.asarray(next_states, dtype=np.float64))
        target = next_states - states
        pred = self.mlp.forward(self._inputs(states, actions))
        return float(np.mean(np.sum((target - pred) ** 2, axis=1)))

    def update(self, states, actions, next_states):
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        next_states = np.atleast_2d(np.asarray(next_states, dtype=np.float64))
        if states.shape[0] == 0:
            raise ValueError("empty dynamics batch")
        target = next_states - states
        inputs = self._inputs(states, actions)
        n = states.shape[0]
        first_loss = None
        for _ in range(self.updates_per_batch):
            pred, cache = self.mlp.forward_cached(inputs)
            residual = pred - target
            loss = float(np.mean(np.sum(residual**2, axis=1)))
            if not np.isfinite(loss):
                raise ValueError(
                    f"non-finite dynamics loss on batch of {n} "
                    f"(|state| max {np.abs(states).max():.3g}, |target| max {np.abs(target).max():.3g})"
                )
            if first_loss is None:
                first_loss = loss
            grads, _ = self.mlp.backward(cache, (2.0 / n) * residual)
            self.opt.step(grads)
            self.adam_steps += 1
        return first_loss

    def rollout(self, policy, start_state, goal, n, noise_scale, rng):
        """n-step virtual trajectory from start_state under policy + Gaussian noise.

        Per step: one policy call, one noise draw of shape (action_dim,),
        one model call. A non-finite predicted state truncates the rollout
        at the last finite state and sets the flag.
        """
        if n < 0:
            raise ValueError("rollout depth must be >= 0")
        start_state = np.asarray(start_state, dtype=np.float64)
        goal = np.asarray(goal, dtype=np.float64)
        states = [start_state]
        actions = []
        truncated = False
        state = start_state
        for _ in range(n):
            action = np.asarray(policy(state, goal), dtype=np.float64)
            action = action + noise_scale * self.action_bound * rng.standard_normal(self.action_dim)
            action = np.clip(action, -self.action_bound, self.action_bound)
            state = self.predict_next(state, action)
            if not np.all(np.isfinite(state)):
                truncated = True
                break
            states.append(state)
            actions.append(action)
        return VirtualRollout(
            states=np.stack(states),
            actions=np.stack(actions) if actions else np.zeros((0, self.action_dim)),
            goal=goal,
            truncated=truncated,
        )

    def save(self, path):
        save_snapshot(
            path,
            mlps={"model": self.mlp},
            normalizers={"state": self.state_norm, "action": self.action_norm},
            scalars={
                "action_bound": self.action_bound,
                "updates_per_batch": self.updates_per_batch,
                "lr": self.opt.lr,
            },
        )

    @classmethod
    def load(cls, path):
        mlps, norms, scalars = load_snapshot(path)
        net = mlps["model"]
        state_dim = net.layer_sizes[-1]
        action_dim = net.layer_sizes[0] - state_dim
        model = cls(
            state_dim,
            action_dim,
            action_bound=scalars["action_bound"],
            hidden=net.layer_sizes[1:-1],
            lr=scalars["lr"],
            updates_per_batch=int(scalars["updates_per_batch"]),
            rng=np.random.default_rng(0),
        )
        model.mlp = net
        model.opt = Adam(net.parameters(), lr=scalars["lr"], names=net.parameter_names("model."))
        model.state_norm = norms["state"]
        model.action_norm = norms["action"]
        return model
