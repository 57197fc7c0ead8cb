"""
Quickstart: train on a synthetic event and predict future capacities
=====================================================================

Generate a small streaming event, train the windowed model at one step and
score it on the connections that only appear later.
"""

import numpy as np

from vstreamdrls import (ModelConfig, SynthConfig, TrainConfig, build_test_set, evaluate_embedding,
                         generate_event, train_at_step)

# A streaming event: 4 offices of 15 viewers, 8 snapshots, 5 minutes apart.
# Viewers in the same office get ~1000 Mbit/s links, cross-office ~100.
dyn = generate_event(SynthConfig(offices=4, viewers_per_office=15, K=8, seed=7))
print(f"{dyn.K} snapshots, {dyn.num_nodes} viewers")
for snap in dyn.snapshots:
    print(f"  step {snap.step_index}: {len(snap.active_nodes):3d} active, {snap.num_edges:3d} edges")

# Train at k = K-2 with a window of 3 snapshots (k-2, k-1, k).
k = dyn.K - 2
mcfg = ModelConfig(window=3, layer_dims=(32, 16), seed=0)
state, emb, trace = train_at_step(dyn, k, TrainConfig(max_epochs=300), mcfg)
print(f"\nloss {trace.losses[0]:.1f} -> {trace.losses[-1]:.1f} Mbit/s "
      f"after {trace.final_epoch} epochs ({trace.reason})")

# The test set holds the pairs that are not connected at step k but are
# connected at some later step.
test = build_test_set(dyn, k)
print(f"|O_{k}| = {len(test)} unobserved future connections")

_, mae, rmse = evaluate_embedding(dyn, k, emb.z)
print(f"inner-product head: MAE {mae:.1f}, RMSE {rmse:.1f}")
_, mae, rmse = evaluate_embedding(dyn, k, emb.z, head="mlp")
print(f"MLP head:           MAE {mae:.1f}, RMSE {rmse:.1f}")

# A few predictions next to their targets.
u, v, w = test.arrays()
pred = np.maximum(np.einsum("ij,ij->i", emb.z[u], emb.z[v]), 0)
for i in range(min(5, len(test))):
    print(f"  ({u[i]:2d}, {v[i]:2d})  target {w[i]:7.1f}  predicted {pred[i]:7.1f}")
