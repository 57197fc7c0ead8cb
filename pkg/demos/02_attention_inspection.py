"""
Looking inside one weight-evolution step
========================================

Each node's first-layer weight row is rebuilt from its neighbours' rows,
mixed with attention coefficients that depend on the link capacities.
"""

import numpy as np

from vstreamdrls import GraphSnapshot, ModelConfig, evolve_weights, init_state
from vstreamdrls.model import attention_weights

# node 0 has a fast link to 1 and a slow link to 2; node 3 is alone
snap = GraphSnapshot.from_edges(0, 4, [(0, 1, 1.0), (0, 2, 0.1), (1, 2, 0.5)], active_nodes=[3])
state = init_state(4, ModelConfig(window=1, layer_dims=(3,), seed=1))
w_prev, h, a = state.params["W1_base"], state.params["H_0"], state.params["a_0"]

alpha = attention_weights(w_prev, h, a, snap)
for v, row in sorted(alpha.items()):
    parts = ", ".join(f"{u}: {x:.3f}" for u, x in row)
    print(f"node {v} attends to {{{parts}}}  (sum {sum(x for _, x in row):.12f})")

w_new = evolve_weights(w_prev, h, a, snap)
print("\nprevious W1 rows:\n", np.round(w_prev, 3))
print("evolved W1 rows:\n", np.round(w_new, 3))
# node 3 has no neighbours, so its row is carried over unchanged
print("row 3 unchanged:", np.array_equal(w_prev[3], w_new[3]))

# With a zero attention vector every neighbour gets the same weight.
uniform = attention_weights(w_prev, h, np.zeros_like(a), snap)
print("\nzero attention vector:", {v: [round(x, 3) for _, x in r] for v, r in uniform.items()})
