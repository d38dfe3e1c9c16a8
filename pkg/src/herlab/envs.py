"""Goal-conditioned 2D environments with the sparse 0/-1 reward.

Three environments share one functional interface: reset(rng) draws
(initial state, desired goal); step(state, action, goal) is deterministic.
PointReach and PointPush are desk-scale manipulation analogs on the unit
square; LinearEnv has exactly known linear dynamics and exists so the
learned dynamics model can be tested against a closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GoalEnvSpec:
    state_dim: int
    action_dim: int
    goal_dim: int
    action_bound: float
    threshold: float
    horizon: int

    def __post_init__(self):
        if self.goal_dim > self.state_dim:
            raise ValueError("goal_dim must not exceed state_dim")
        if self.threshold <= 0 or self.action_bound <= 0:
            raise ValueError("threshold and action_bound must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


@dataclass(frozen=True)
class StepResult:
    next_state: np.ndarray
    reward: float
    achieved_goal: np.ndarray
    success: bool


def compute_reward(achieved, desired, threshold):
    """Sparse goal reward: 0 where ||achieved - desired||_2 < threshold (strict), else -1.

    Vectorized over leading dimensions; the last axis is the goal dimension.
    """
    achieved = np.asarray(achieved, dtype=np.float64)
    desired = np.asarray(desired, dtype=np.float64)
    if achieved.shape[-1:] != desired.shape[-1:] or achieved.shape != desired.shape:
        raise ValueError(f"goal shape mismatch: {achieved.shape} vs {desired.shape}")
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    dist = np.linalg.norm(achieved - desired, axis=-1)
    reward = np.where(dist < threshold, 0.0, -1.0)
    return float(reward) if reward.ndim == 0 else reward


def _check_action(action, dim):
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (dim,):
        raise ValueError(f"action must have shape ({dim},), got {action.shape}")
    if not np.all(np.isfinite(action)):
        raise ValueError("non-finite action")
    return action


class _GoalEnv:
    """Shared plumbing: reward wiring and the projection onto goal space."""

    spec: GoalEnvSpec

    def achieved_goal(self, state):
        raise NotImplementedError

    def _result(self, next_state, goal):
        achieved = self.achieved_goal(next_state)
        reward = compute_reward(achieved, goal, self.spec.threshold)
        return StepResult(next_state=next_state, reward=reward, achieved_goal=achieved, success=reward == 0.0)


class PointReach(_GoalEnv):
    """Damped point mass on the unit square; the goal is an effector position.

    State (px, py, vx, vy). Each step: v <- damping*v + gain*a, p <- p + v*dt,
    positions clamped to the walls.
    """

    DT = 1.0
    DAMPING = 0.8
    GAIN = 0.1

    def __init__(self, threshold=0.05, horizon=50):
        self.spec = GoalEnvSpec(
            state_dim=4, action_dim=2, goal_dim=2, action_bound=1.0, threshold=threshold, horizon=horizon
        )

    def achieved_goal(self, state):
        state = np.asarray(state, dtype=np.float64)
        return state[..., 0:2].copy()

    def reset(self, rng):
        position = rng.uniform(0.0, 1.0, size=2)
        goal = rng.uniform(0.0, 1.0, size=2)
        state = np.concatenate([position, np.zeros(2)])
        return state, goal

    def step(self, state, action, goal):
        state = np.asarray(state, dtype=np.float64)
        action = np.clip(_check_action(action, 2), -self.spec.action_bound, self.spec.action_bound)
        velocity = self.DAMPING * state[2:4] + self.GAIN * action
        position = np.clip(state[0:2] + velocity * self.DT, 0.0, 1.0)
        return self._result(np.concatenate([position, velocity]), goal)


class PointPush(_GoalEnv):
    """Point-mass effector pushing a disk-shaped block; the goal is a block position.

    State (px, py, bx, by, vx, vy). The effector moves like PointReach; when
    the effector disk overlaps the block disk the block is displaced along
    the contact normal just enough to resolve the overlap (quasi-static
    push, the block carries no momentum). The contact discontinuity is what
    makes these dynamics imperfectly learnable.
    """

    DT = 1.0
    DAMPING = 0.8
    GAIN = 0.1
    EFFECTOR_RADIUS = 0.05
    BLOCK_RADIUS = 0.10
    # Effector motion is integrated in substeps small enough that it cannot
    # tunnel through the block disk within one substep (max speed 0.5/step,
    # contact radius 0.15).
    CONTACT_SUBSTEPS = 8

    def __init__(self, threshold=0.05, horizon=50):
        self.spec = GoalEnvSpec(
            state_dim=6, action_dim=2, goal_dim=2, action_bound=1.0, threshold=threshold, horizon=horizon
        )

    def achieved_goal(self, state):
        state = np.asarray(state, dtype=np.float64)
        return state[..., 2:4].copy()

    def reset(self, rng):
        contact = self.EFFECTOR_RADIUS + self.BLOCK_RADIUS
        effector = rng.uniform(0.1, 0.9, size=2)
        while True:
            block = rng.uniform(0.3, 0.7, size=2)
            if np.linalg.norm(block - effector) >= contact:
                break
        while True:
            goal = rng.uniform(0.25, 0.75, size=2)
            if np.linalg.norm(goal - block) >= 2.0 * self.spec.threshold:
                break
        state = np.concatenate([effector, block, np.zeros(2)])
        return state, goal

    def step(self, state, action, goal):
        state = np.asarray(state, dtype=np.float64)
        action = np.clip(_check_action(action, 2), -self.spec.action_bound, self.spec.action_bound)
        velocity = self.DAMPING * state[4:6] + self.GAIN * action

        effector = state[0:2].copy()
        block = state[2:4].copy()
        contact = self.EFFECTOR_RADIUS + self.BLOCK_RADIUS
        sub = velocity * self.DT / self.CONTACT_SUBSTEPS
        for _ in range(self.CONTACT_SUBSTEPS):
            effector = np.clip(effector + sub, 0.0, 1.0)
            offset = block - effector
            dist = float(np.linalg.norm(offset))
            if dist < contact:
                normal = offset / dist if dist > 1e-12 else np.array([1.0, 0.0])
                block = np.clip(block + (contact - dist) * normal, self.BLOCK_RADIUS, 1.0 - self.BLOCK_RADIUS)
                # if the wall pinned the block, back the effector out instead
                offset = block - effector
                dist = float(np.linalg.norm(offset))
                if dist < contact:
                    normal = offset / dist if dist > 1e-12 else np.array([1.0, 0.0])
                    effector = np.clip(block - contact * normal, 0.0, 1.0)

        return self._result(np.concatenate([effector, block, velocity]), goal)


class LinearEnv(_GoalEnv):
    """Exactly linear dynamics next = A @ state + B @ action; a diagnostics env.

    Defaults are a well-conditioned contraction so random-action rollouts
    stay bounded. The goal is the first goal_dim state coordinates.
    """

    DEFAULT_A = np.array([[0.98, 0.04], [-0.04, 0.98]])
    DEFAULT_B = np.array([[0.06, 0.02], [-0.01, 0.05]])

    def __init__(self, A=None, B=None, goal_dim=None, threshold=0.05, horizon=50):
        A = self.DEFAULT_A if A is None else np.asarray(A, dtype=np.float64)
        B = self.DEFAULT_B if B is None else np.asarray(B, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if B.ndim != 2 or B.shape[0] != A.shape[0]:
            raise ValueError("B must have the same row count as A")
        state_dim = A.shape[0]
        if goal_dim is None:
            goal_dim = min(2, state_dim)
        self.A = A
        self.B = B
        self.spec = GoalEnvSpec(
            state_dim=state_dim,
            action_dim=B.shape[1],
            goal_dim=goal_dim,
            action_bound=1.0,
            threshold=threshold,
            horizon=horizon,
        )

    def achieved_goal(self, state):
        state = np.asarray(state, dtype=np.float64)
        return state[..., 0 : self.spec.goal_dim].copy()

    def reset(self, rng):
        state = rng.uniform(-1.0, 1.0, size=self.spec.state_dim)
        goal = rng.uniform(-1.0, 1.0, size=self.spec.goal_dim)
        return state, goal

    def step(self, state, action, goal):
        state = np.asarray(state, dtype=np.float64)
        action = np.clip(
            _check_action(action, self.spec.action_dim), -self.spec.action_bound, self.spec.action_bound
        )
        next_state = self.A @ state + self.B @ action
        return self._result(next_state, goal)


ENV_NAMES = ("point-reach", "point-push", "linear")


def make_env(name, threshold=0.05, horizon=50):
    """Construct an environment by its registry name."""
    if name == "point-reach":
        return PointReach(threshold=threshold, horizon=horizon)
    if name == "point-push":
        return PointPush(threshold=threshold, horizon=horizon)
    if name == "linear":
        return LinearEnv(threshold=threshold, horizon=horizon)
    raise ValueError(f"unknown environment {name!r}; choose from {ENV_NAMES}")
