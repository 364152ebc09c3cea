"""
Matching a batch to its particles
=================================

Training keeps a one-to-one map between items and particles.  Each batch
re-deals the particles it already owns by solving a small assignment problem
exactly.  Here the solver is compared against exhaustive search, then used to
re-deal a toy batch.
"""
import itertools
import time

import numpy as np

from hyperproto.assignment import AssignmentState, assignment_cost, batch_cost, batch_reassign, hungarian

# %% The solver against brute force
rng = np.random.default_rng(0)
cost = rng.integers(0, 4, (5, 5)).astype(float)  # many ties
perm = hungarian(cost)
best = min(itertools.permutations(range(5)), key=lambda p: (sum(cost[i, p[i]] for i in range(5)), p))
print("hungarian", perm, assignment_cost(cost, perm), "| brute force", best)

big = rng.uniform(0, 10, (128, 128))
t0 = time.perf_counter()
hungarian(big)
print(f"128 x 128 solved in {1e3 * (time.perf_counter() - t0):.1f} ms")

# %% Re-dealing a batch never increases its cost and leaves other items alone
particles = rng.uniform(-0.5, 0.5, (10, 2))
features = rng.uniform(-0.5, 0.5, (10, 2))
state = AssignmentState.random(10, 1)
batch = np.array([1, 4, 6, 8])
before = batch_cost(features[batch], batch, state, particles)
new = batch_reassign(features[batch], batch, state, particles)
after = batch_cost(features[batch], batch, new, particles)
print(f"batch cost {before:.4f} -> {after:.4f}")
print("particle_of before", state.particle_of)
print("particle_of after ", new.particle_of)
