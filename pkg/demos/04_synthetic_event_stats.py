"""
What the synthetic events look like
===================================

Edge churn is high while viewers join and settles to a few percent once
the audience is stable. The generator exposes both knobs.
"""

import numpy as np

from vstreamdrls import SynthConfig, event_stats, generate_event

cfg = SynthConfig()
stats = event_stats(generate_event(cfg))
print(f"{cfg.offices} offices x {cfg.viewers_per_office} viewers, K={cfg.K}, cap={cfg.cap}")
print("step  nodes  edges  edge evo %  node evo %  max degree")
for row in stats.rows:
    ee = "" if row["edge_evolution"] is None else f"{row['edge_evolution']:.1f}"
    ne = "" if row["node_evolution"] is None else f"{row['node_evolution']:.1f}"
    print(f"{row['step']:4d} {row['nodes']:6d} {row['edges']:6d} {ee:>11} {ne:>11} {row['max_degree']:11d}")

q = stats.weight_quantiles
print(f"\ncapacities (Mbit/s): min {q['min']:.0f}, median {q['median']:.0f}, max {q['max']:.0f}")
print("degree histogram:", stats.degree_histogram)

# A custom schedule: all viewers present from the start, fixed 20% rewiring.
flat = SynthConfig(arrivals=(1.0,), rewire_schedule=(0.2,) * (cfg.K - 1), seed=1)
evo = event_stats(generate_event(flat)).evolution.edge_evolution
print("\nflat 20% rewiring ->", np.round(evo, 1))
