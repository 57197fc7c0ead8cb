"""
How much history helps
======================

Train at the same step with windows 1..4 on the default synthetic event
and compare against a static GCN that sees only the current snapshot.
Takes about a minute.
"""

import numpy as np

from vstreamdrls import (ModelConfig, SynthConfig, TrainConfig, evaluate_embedding, fit,
                         generate_event, train_at_step)

dyn = generate_event(SynthConfig())
k = 10
seeds = range(3)
tcfg = TrainConfig()

static = []
for seed in seeds:
    _, emb, _ = fit([dyn[k]], ModelConfig(window=1, layer_dims=(32, 16), seed=seed, evolve=False), tcfg)
    static.append(evaluate_embedding(dyn, k, emb.z)[2])
print(f"static GCN      RMSE {np.mean(static):6.1f} +/- {np.std(static):4.1f}")

for w in (1, 2, 3, 4):
    rmse = []
    for seed in seeds:
        _, emb, _ = train_at_step(dyn, k, tcfg, ModelConfig(window=w, layer_dims=(32, 16), seed=seed))
        rmse.append(evaluate_embedding(dyn, k, emb.z)[2])
    print(f"window w={w}      RMSE {np.mean(rmse):6.1f} +/- {np.std(rmse):4.1f}")

# The same grid from the shell, with mean/std per cell in sweep_summary.csv:
#   vstreamdrls sweep --windows 1,2,3,4 --dims-grid 16 --reps 3 --step 10 --out sweep_run
