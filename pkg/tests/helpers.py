"""Shared test oracles: finite differences, scalar reference updates, fixtures."""

import numpy as np

from herlab.envs import compute_reward
from herlab.replay import Trajectory, Transition


def make_trajectory(traj_id, T=5, rng=None, state_dim=2, goal_dim=2, drift=0.1, goal=None):
    """Hand-built chained trajectory whose achieved goals drift step by step."""
    rng = rng or np.random.default_rng(traj_id)
    states = [rng.uniform(-1, 1, state_dim)]
    actions = []
    for _ in range(T):
        actions.append(rng.uniform(-1, 1, 2))
        states.append(states[-1] + drift * np.ones(state_dim) + 0.01 * actions[-1][0])
    if goal is None:
        goal = rng.uniform(-1, 1, goal_dim)
    transitions = []
    for t in range(T):
        achieved = states[t + 1][:goal_dim]
        transitions.append(
            Transition(
                state=states[t],
                action=actions[t],
                next_state=states[t + 1],
                desired_goal=goal,
                reward=compute_reward(achieved, goal, 0.05),
                t=t + 1,
                trajectory_id=traj_id,
            )
        )
    achieved_goals = np.stack([s[:goal_dim] for s in states])
    return Trajectory(transitions, achieved_goals)


def reference_predict(model, state, action):
    """Independent recomputation of DynamicsModel.predict_next for one vector."""
    sn = model.state_norm
    an = model.action_norm
    ns = np.clip((state - sn.mean) / np.sqrt(sn.var + sn.var_floor), -sn.clip_range, sn.clip_range)
    na = np.clip((action - an.mean) / np.sqrt(an.var + an.var_floor), -an.clip_range, an.clip_range)
    delta = mlp_forward_reference(model.mlp.weights, model.mlp.biases, np.concatenate([ns, na]))
    return state + delta


class PushController:
    """Scripted PointPush policy: drive at the block, then shove it toward the goal.

    Batch-capable and deterministic; produces trajectories whose block
    actually moves, which relabeling diagnostics need.
    """

    def __init__(self, env, speed=0.15):
        self.env = env
        self.speed = speed

    def policy(self, states, goals):
        states_2d = np.atleast_2d(np.asarray(states, dtype=np.float64))
        goals_2d = np.atleast_2d(np.asarray(goals, dtype=np.float64))
        if goals_2d.shape[0] == 1 and states_2d.shape[0] > 1:
            goals_2d = np.broadcast_to(goals_2d, (states_2d.shape[0], 2))
        eff = states_2d[:, 0:2]
        block = states_2d[:, 2:4]
        vel = states_2d[:, 4:6]
        to_goal = goals_2d - block
        goal_dist = np.linalg.norm(to_goal, axis=1, keepdims=True)
        goal_dir = np.where(goal_dist > 1e-9, to_goal / np.maximum(goal_dist, 1e-9), 0.0)
        contact = self.env.EFFECTOR_RADIUS + self.env.BLOCK_RADIUS
        near = np.linalg.norm(eff - block, axis=1, keepdims=True) < contact + 0.03
        target = np.where(near, block + 0.08 * goal_dir, block)
        want = target - eff
        want_norm = np.linalg.norm(want, axis=1, keepdims=True)
        want_vel = np.where(want_norm > self.speed, want * (self.speed / np.maximum(want_norm, 1e-12)), want)
        action = np.clip((want_vel - self.env.DAMPING * vel) / self.env.GAIN, -1.0, 1.0)
        return action[0] if np.asarray(states).ndim == 1 else action

    __call__ = policy


def central_difference(loss_fn, params, h=1e-5):
    """Central finite-difference gradient of loss_fn() w.r.t. each array in params.

    loss_fn takes no arguments and reads the (mutated) params; params are
    restored afterwards. Independent of any analytic backward pass.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            above = loss_fn()
            flat[i] = orig - h
            below = loss_fn()
            flat[i] = orig
            gflat[i] = (above - below) / (2.0 * h)
        grads.append(g)
    return grads


def relative_errors(analytic, numeric, guard=1e-6):
    """Elementwise |a - n| / max(|a|, |n|, guard) over matching array lists."""
    errs = []
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), guard)
        errs.append(np.abs(a - n) / denom)
    return errs


def max_relative_error(analytic, numeric, guard=1e-6):
    return max(float(e.max()) for e in relative_errors(analytic, numeric, guard))


def scalar_adam_reference(grad_sequence, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, x0=0.0):
    """Textbook scalar Adam, written independently of the library."""
    x = x0
    m = 0.0
    v = 0.0
    for t, g in enumerate(grad_sequence, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        x = x - lr * mhat / (np.sqrt(vhat) + eps)
    return x


def mlp_forward_reference(weights, biases, x, output_activation="identity"):
    """Direct matrix-arithmetic recomputation of an MLP forward pass."""
    a = np.asarray(x, dtype=float)
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = w @ a + b
        if i < len(weights) - 1:
            a = np.where(z > 0, z, 0.0)
        elif output_activation == "tanh":
            a = np.tanh(z)
        else:
            a = z
    return a
