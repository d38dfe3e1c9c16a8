#!/usr/bin/env python3
"""The relabeling zoo on one stored trajectory.

Hindsight strategies pick replacement goals from stored achieved goals;
foresight relabeling instead rolls the learned model forward from a
strategy-selected start state and takes a goal from the virtual
trajectory; the mher-style ablation anchors every rollout at the
transition's own next state, which hands out success rewards for free.
"""

import numpy as np

from herlab import (
    DynamicsModel,
    PointReach,
    RelabelMode,
    ReplayBuffer,
    Trajectory,
    Transition,
    apply_relabeling,
    collect_trajectory,
    foresight_relabel,
    her_relabel,
    mher_relabel,
)
from herlab.agent import AgentNets

rng = np.random.default_rng(2)
env = PointReach()
nets = AgentNets(4, 2, 2, hidden=(16, 16), rng=rng)
traj = collect_trajectory(env, nets, rng, trajectory_id=0)
threshold = env.spec.threshold

print("original goal:", traj.desired_goal.round(3))
print("rewards along the trajectory:", [tr.reward for tr in traj.transitions[:10]], "...")

tr = traj.transitions[9]  # t = 10
print(f"\nrelabeling transition t={tr.t} (achieved goal {env.achieved_goal(tr.next_state).round(3)})")
for strategy in ("future", "episode", "final"):
    out = her_relabel(tr, traj, strategy, threshold, np.random.default_rng(5))
    print(f"  her-{strategy:8s}: goal -> {out.desired_goal.round(3)}, reward {out.reward}")

model = DynamicsModel(4, 2, hidden=(32, 32), rng=rng)
model.observe(
    np.stack([t.state for t in traj.transitions]),
    np.stack([t.action for t in traj.transitions]),
)
out = foresight_relabel(tr, traj, model, nets.policy, "episode", 5, env.achieved_goal, threshold,
                        np.random.default_rng(6))
print(f"  fr-episode-5 : goal -> {out.desired_goal.round(3)}, reward {out.reward}")
out = mher_relabel(tr, traj, model, nets.policy, 0, env.achieved_goal, threshold, np.random.default_rng(7))
print(f"  mher-0       : goal -> {out.desired_goal.round(3)}, reward {out.reward}  (always 0: self-goal)")

print("\nminibatch pipeline at replay ratio 0.8:")
buf = ReplayBuffer()
buf.store_trajectory(traj)
batch = buf.sample_minibatch(2000, rng)
for mode in (RelabelMode.none(), RelabelMode.her("future"), RelabelMode.mher_style(0)):
    out, stats = apply_relabeling(batch, mode, 0.8, threshold, np.random.default_rng(8),
                                  model=model, policy=nets.policy, achieved_goal_fn=env.achieved_goal)
    mean_r = np.mean([t.reward for t, _ in out])
    print(f"  {mode.label:12s}: relabeled {stats.relabeled:4d}/2000, minibatch mean reward {mean_r:+.3f}")
