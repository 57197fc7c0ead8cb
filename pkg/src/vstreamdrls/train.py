"""Full-batch training of the windowed model with Adam."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ContractError, NumericError, UndefinedMetricError
from .graphcore import DynamicGraph, GraphSnapshot
from .model import (Embedding, ModelConfig, ModelState, init_state, loss_and_grad,
                    resolve_output_scale, save_checkpoint, vstream_forward)
from .numkit import AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 500
    tolerance: float = 1e-4
    patience: int = 10
    stall_epochs: int = 100
    lr: float = 0.01
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None
    warm_start: bool = False
    train_only_h: bool = False

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ContractError("max_epochs must be at least 1")
        if not self.tolerance > 0:
            raise ContractError("tolerance must be positive")
        if self.patience < 1 or self.stall_epochs < 1:
            raise ContractError("patience and stall_epochs must be at least 1")
        if not self.lr > 0:
            raise ContractError("learning rate must be positive")


@dataclass
class TrainTrace:
    losses: list[float] = field(default_factory=list)
    wall_ms: list[float] = field(default_factory=list)
    final_epoch: int = 0
    reason: str = ""

    def write_csv(self, path, include_timing: bool = False) -> Path:
        """Write ``epoch,loss,wall_ms``.

        Timings are left blank unless ``include_timing`` is set so that reruns
        with the same seed produce identical bytes.
        """
        path = Path(path)
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["epoch", "loss", "wall_ms"])
            for i, loss in enumerate(self.losses):
                wr.writerow([i + 1, repr(loss), f"{self.wall_ms[i]:.3f}" if include_timing else ""])
        return path


def fit(graphs: Sequence[GraphSnapshot], mcfg: ModelConfig, tcfg: TrainConfig,
        state: ModelState | None = None) -> tuple[ModelState, Embedding, TrainTrace]:
    """Minimise the reconstruction loss at ``graphs[-1]`` over the given window.

    Stops with reason "tolerance" once the relative loss change has been
    ``<= tolerance`` for ``patience`` consecutive epochs (the first epoch has no
    predecessor and counts as an infinite change), with "patience" when the
    best loss has not improved for ``stall_epochs`` epochs, or with
    "max-epochs".
    """
    graphs = list(graphs)
    target = graphs[-1]
    if not target.active_nodes:
        raise UndefinedMetricError(f"snapshot {target.step_index} has no active nodes")
    if state is None:
        state = init_state(target.num_nodes, mcfg, window=len(graphs),
                           output_scale=resolve_output_scale(mcfg, target))
    params = {k: v.copy() for k, v in state.params.items()}
    adam = AdamState(lr=tcfg.lr)
    only = {n for n in params if n.startswith("H_")} if tcfg.train_only_h else None

    trace = TrainTrace()
    best = np.inf
    stale = 0
    streak = 0
    prev = None
    for epoch in range(1, tcfg.max_epochs + 1):
        t0 = time.perf_counter()
        loss, grads, _ = loss_and_grad(graphs, params, mcfg.layer_dims, mcfg.evolve,
                                       state.output_scale)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise NumericError(f"non-finite loss or gradient at epoch {epoch}")
        params, adam = adam_step(params, grads, adam, only=only)
        trace.losses.append(loss)
        trace.wall_ms.append((time.perf_counter() - t0) * 1e3)
        trace.final_epoch = epoch

        if tcfg.checkpoint_every and tcfg.checkpoint_dir and epoch % tcfg.checkpoint_every == 0:
            ckpt = ModelState(params, len(graphs), mcfg.layer_dims, state.output_scale)
            save_checkpoint(Path(tcfg.checkpoint_dir) / f"epoch_{epoch:05d}.json", ckpt)

        change = np.inf if prev is None else abs(prev - loss) / max(prev, 1e-300)
        prev = loss
        streak = streak + 1 if change <= tcfg.tolerance else 0
        if streak >= tcfg.patience:
            trace.reason = "tolerance"
            break
        if loss < best:
            best, stale = loss, 0
        else:
            stale += 1
            if stale >= tcfg.stall_epochs:
                trace.reason = "patience"
                break
    else:
        trace.reason = "max-epochs"

    final = ModelState(params, len(graphs), mcfg.layer_dims, state.output_scale)
    emb = vstream_forward(graphs, final, evolve=mcfg.evolve)
    log.debug("step %d: %d epochs, loss %.6g -> %.6g (%s)", target.step_index, trace.final_epoch,
              trace.losses[0], trace.losses[-1], trace.reason)
    return final, emb, trace


def train_at_step(dyn: DynamicGraph, k: int, cfg: TrainConfig, mcfg: ModelConfig,
                  state: ModelState | None = None):
    """Train on the window ending at step ``k``; the window is clipped at step 0."""
    graphs = dyn.window(k, mcfg.window)
    if state is not None and state.window != len(graphs):
        raise ContractError(f"state window {state.window} != clipped window {len(graphs)}")
    return fit(graphs, mcfg, cfg, state)


def step_seed(master: int, k: int) -> int:
    return int(np.random.SeedSequence([master, k]).generate_state(1)[0])


def _warm_state(prev: ModelState, num_nodes: int, mcfg: ModelConfig, window: int) -> ModelState:
    fresh = init_state(num_nodes, mcfg, window=window, output_scale=prev.output_scale)
    for name, v in prev.params.items():
        if name in fresh.params and fresh.params[name].shape == v.shape:
            fresh.params[name] = v.copy()
    return fresh


def train_all_steps(dyn: DynamicGraph, cfg: TrainConfig, mcfg: ModelConfig,
                    steps: Sequence[int] | None = None):
    """Train independently at every step (or the given ones), one seed per step."""
    out = {}
    prev = None
    for k in (range(dyn.K) if steps is None else steps):
        step_cfg = ModelConfig(mcfg.window, mcfg.layer_dims, step_seed(mcfg.seed, k), mcfg.evolve,
                               mcfg.output_scale)
        window = len(dyn.window(k, mcfg.window))
        init = _warm_state(prev, dyn.num_nodes, step_cfg, window) if cfg.warm_start and prev else None
        out[k] = train_at_step(dyn, k, cfg, step_cfg, init)
        prev = out[k][0]
    return out
