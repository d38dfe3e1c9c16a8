"""Trajectory-structured replay buffer.

Full episodes are stored as Trajectory values so relabelers can reach
sibling states; minibatch sampling returns each transition together with a
reference to its trajectory. Single-writer/single-reader by contract (the
training loop alternates collection and updates in one thread).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Transition:
    """One step record; the unit of relabeling.

    t is the 1-based step index within its trajectory. Relabeling replaces
    desired_goal and reward only; the state/action fields are shared arrays
    and are never mutated.
    """

    state: np.ndarray
    action: np.ndarray
    next_state: np.ndarray
    desired_goal: np.ndarray
    reward: float
    t: int
    trajectory_id: int


class Trajectory:
    """Exactly T chained transitions sharing one desired goal.

    Stores the achieved-goal sequence for states s_1..s_{T+1} (T+1 rows).
    Start/relabel state indices k run over [1, T] and refer to the state
    *from which* step k was taken, so state_at(t+1) is transition t's own
    next state; the terminal chain state is cached but never selected.
    """

    def __init__(self, transitions, achieved_goals):
        transitions = tuple(transitions)
        if not transitions:
            raise ValueError("trajectory must contain at least one transition")
        achieved_goals = np.asarray(achieved_goals, dtype=np.float64)
        T = len(transitions)
        first = transitions[0]
        for i, tr in enumerate(transitions):
            if tr.t != i + 1:
                raise ValueError(f"transition {i} has step index {tr.t}, expected {i + 1}")
            if tr.trajectory_id != first.trajectory_id:
                raise ValueError("transitions carry mixed trajectory ids")
            if not np.array_equal(tr.desired_goal, first.desired_goal):
                raise ValueError("transitions do not share one desired goal")
        for i in range(T - 1):
            if not np.array_equal(transitions[i].next_state, transitions[i + 1].state):
                raise ValueError(f"broken state chain between steps {i + 1} and {i + 2}")
        if achieved_goals.shape != (T + 1, first.desired_goal.shape[0]):
            raise ValueError(
                f"achieved_goals must have shape ({T + 1}, goal_dim), got {achieved_goals.shape}"
            )
        self.transitions = transitions
        self.achieved_goals = achieved_goals

    def __len__(self):
        return len(self.transitions)

    @property
    def trajectory_id(self):
        return self.transitions[0].trajectory_id

    @property
    def desired_goal(self):
        return self.transitions[0].desired_goal

    def state_at(self, k):
        """State s_k for k in [1, T]: the state transition k was taken from."""
        if not 1 <= k <= len(self.transitions):
            raise IndexError(f"state index {k} outside [1, {len(self.transitions)}]")
        return self.transitions[k - 1].state

    def achieved_goal_at(self, k):
        """Achieved goal of s_k for k in [1, T+1]."""
        if not 1 <= k <= len(self.transitions) + 1:
            raise IndexError(f"achieved-goal index {k} outside [1, {len(self.transitions) + 1}]")
        return self.achieved_goals[k - 1]


class ReplayBuffer:
    """FIFO ring of trajectories with uniform (trajectory, step) sampling."""

    def __init__(self, capacity=1000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self._trajectories = deque(maxlen=self.capacity)
        self.horizon = None
        self.stored_count = 0

    def __len__(self):
        return len(self._trajectories)

    @property
    def num_steps(self):
        return len(self._trajectories) * (self.horizon or 0)

    def store_trajectory(self, trajectory):
        if not isinstance(trajectory, Trajectory):
            raise TypeError("store_trajectory expects a Trajectory")
        if self.horizon is None:
            self.horizon = len(trajectory)
        elif len(trajectory) != self.horizon:
            raise ValueError(
                f"trajectory length {len(trajectory)} does not match buffer horizon {self.horizon}"
            )
        self._trajectories.append(trajectory)
        self.stored_count += 1

    def __contains__(self, trajectory_id):
        return any(t.trajectory_id == trajectory_id for t in self._trajectories)

    def sample_minibatch(self, size, rng):
        """size transitions uniform over (trajectory, step) pairs, with replacement.

        Returns a list of (Transition, Trajectory) pairs. Consumes exactly
        two rng draws: trajectory indices then step indices, each of shape
        (size,).
        """
        if not self._trajectories:
            raise ValueError("cannot sample from an empty replay buffer")
        traj_idx = rng.integers(0, len(self._trajectories), size=size)
        step_idx = rng.integers(0, self.horizon, size=size)
        out = []
        for ti, si in zip(traj_idx, step_idx):
            traj = self._trajectories[ti]
            out.append((traj.transitions[si], traj))
        return out

    def trajectories(self):
        return list(self._trajectories)


# --- columnar trajectory dump -------------------------------------------------
#
# One row per transition:
#   traj_id t state... action... next_state... goal... reward
# Header comments record the dimensions. Used by the diagnostics CLI and by
# offline tests; achieved goals are recomputed on load from the caller's
# projection, which must match the environment that generated the data.


def _row_str(values):
    return " ".join(f"{v:.17g}" for v in values)


def save_trajectories(path, trajectories):
    trajs = list(trajectories)
    if not trajs:
        raise ValueError("nothing to save")
    first = trajs[0].transitions[0]
    dims = (first.state.shape[0], first.action.shape[0], first.desired_goal.shape[0])
    with open(path, "w") as fh:
        fh.write("# herlab trajectory dump v1\n")
        fh.write(f"# state_dim={dims[0]} action_dim={dims[1]} goal_dim={dims[2]}\n")
        fh.write("# columns: traj_id t state action next_state goal reward\n")
        for traj in trajs:
            for tr in traj.transitions:
                fields = [
                    str(tr.trajectory_id),
                    str(tr.t),
                    _row_str(tr.state),
                    _row_str(tr.action),
                    _row_str(tr.next_state),
                    _row_str(tr.desired_goal),
                    f"{tr.reward:.17g}",
                ]
                fh.write(" ".join(fields) + "\n")


def load_trajectories(path, achieved_goal_fn):
    """Rebuild trajectories from a dump; achieved_goal_fn recomputes the goal cache."""
    dims = None
    groups = {}
    order = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "state_dim=" in line:
                    parts = dict(p.split("=") for p in line[1:].split() if "=" in p)
                    dims = (int(parts["state_dim"]), int(parts["action_dim"]), int(parts["goal_dim"]))
                continue
            if dims is None:
                raise ValueError("dump missing dimension header")
            ds, da, dg = dims
            vals = line.split()
            traj_id = int(vals[0])
            t = int(vals[1])
            rest = np.array([float(v) for v in vals[2:]])
            if rest.shape[0] != 2 * ds + da + dg + 1:
                raise ValueError(f"bad row width for traj {traj_id} step {t}")
            state = rest[0:ds]
            action = rest[ds : ds + da]
            next_state = rest[ds + da : 2 * ds + da]
            goal = rest[2 * ds + da : 2 * ds + da + dg]
            reward = float(rest[-1])
            if traj_id not in groups:
                groups[traj_id] = []
                order.append(traj_id)
            groups[traj_id].append(
                Transition(
                    state=state,
                    action=action,
                    next_state=next_state,
                    desired_goal=goal,
                    reward=reward,
                    t=t,
                    trajectory_id=traj_id,
                )
            )
    out = []
    for traj_id in order:
        transitions = sorted(groups[traj_id], key=lambda tr: tr.t)
        states = [tr.state for tr in transitions] + [transitions[-1].next_state]
        achieved = np.stack([achieved_goal_fn(s) for s in states])
        out.append(Trajectory(transitions, achieved))
    return out
