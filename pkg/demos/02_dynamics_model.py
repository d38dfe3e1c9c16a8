#!/usr/bin/env python3
"""Train the delta-dynamics model on LinearEnv and check it against the
closed form.

The model regresses state differences and composes predictions as
state + delta(state, action); on LinearEnv the truth is (A - I) s + B a,
so rollouts can be compared against exact matrix iteration.
"""

import numpy as np

from herlab import DynamicsModel, LinearEnv

rng = np.random.default_rng(1)
env = LinearEnv()

print("collecting 5000 random-action transitions...")
states, actions, nexts = [], [], []
while len(states) < 5000:
    s, g = env.reset(rng)
    for _ in range(env.spec.horizon):
        a = rng.uniform(-1, 1, 2)
        r = env.step(s, a, g)
        states.append(s)
        actions.append(a)
        nexts.append(r.next_state)
        s = r.next_state
S, A, NS = np.array(states), np.array(actions), np.array(nexts)

model = DynamicsModel(env.spec.state_dim, env.spec.action_dim, rng=rng)
model.observe(S, A)

print("training (each update call = two Adam steps on one batch)...")
for i in range(800):
    idx = rng.integers(0, len(S), 256)
    loss = model.update(S[idx], A[idx], NS[idx])
    if i % 200 == 0:
        print(f"  update {i}: loss {loss:.3e}")

pred = model.predict_next(S[:1000], A[:1000])
print(f"one-step mean abs error per dim: {np.abs(pred - NS[:1000]).mean(axis=0)}")

print("\n5-step rollout under a constant policy vs closed form:")
const = np.array([0.3, -0.5])
roll = model.rollout(lambda s, g: const, S[0], np.zeros(2), 5, 0.0, rng)
truth = [S[0]]
for _ in range(5):
    truth.append(env.A @ truth[-1] + env.B @ const)
for j, (a, b) in enumerate(zip(roll.states, truth)):
    print(f"  step {j}: model {a.round(4)}  exact {np.asarray(b).round(4)}")
