#!/usr/bin/env python3
"""Tour of the goal-conditioned environments and the sparse reward.

Shows the functional env interface (reset draws state+goal, step is
deterministic), the {0, -1} reward, and a hand-written controller solving
PointReach.
"""

import numpy as np

from herlab import PointPush, PointReach, compute_reward, make_env

rng = np.random.default_rng(0)

print("=== sparse reward ===")
print("same goal:        ", compute_reward(np.array([0.3, 0.4]), np.array([0.3, 0.4]), 0.05))
print("10cm off, r=5cm:  ", compute_reward(np.array([0.3, 0.4]), np.array([0.4, 0.4]), 0.05))
print("10cm off, r=20cm: ", compute_reward(np.array([0.3, 0.4]), np.array([0.4, 0.4]), 0.20))

print("\n=== PointReach: damped point mass on the unit square ===")
env = PointReach()
state, goal = env.reset(rng)
print(f"start position {state[0:2].round(3)}, goal {goal.round(3)}")


def reach_controller(state, goal):
    # deadbeat: pick the action whose resulting velocity lands on the goal
    want = goal - state[0:2]
    return np.clip((want - env.DAMPING * state[2:4]) / env.GAIN, -1, 1)


for t in range(env.spec.horizon):
    res = env.step(state, reach_controller(state, goal), goal)
    state = res.next_state
    if res.success:
        print(f"reached the goal at step {t + 1} (reward {res.reward})")
        break

print("\n=== PointPush: quasi-static block pushing ===")
env = PointPush()
state, goal = env.reset(rng)
print(f"effector {state[0:2].round(3)}, block {state[2:4].round(3)}, goal {goal.round(3)}")
print("pushing straight through the block:")
direction = (state[2:4] - state[0:2])
direction /= np.linalg.norm(direction)
for t in range(12):
    res = env.step(state, direction, goal)
    state = res.next_state
    if t % 3 == 2:
        print(f"  step {t + 1}: block at {state[2:4].round(3)}, achieved goal {res.achieved_goal.round(3)}")

print("\n=== LinearEnv: exactly known dynamics for model diagnostics ===")
env = make_env("linear")
state, goal = env.reset(rng)
action = rng.uniform(-1, 1, 2)
res = env.step(state, action, goal)
print("step result:    ", res.next_state.round(6))
print("A @ s + B @ a:  ", (env.A @ state + env.B @ action).round(6))
