"""Windowed GCN whose first-layer weights evolve by self-attention.

The first-layer weight matrix is carried through the window one snapshot at
a time. At each step every node gathers the transformed rows of its current
neighbours, weighted by a softmax over sigmoid-squashed attention scores, and
passes the sum through an ELU. The last snapshot's GCN then propagates the
evolved weights (identity node features) through the remaining layers.

All backward passes are written out by hand; ``tests/test_gradients.py``
checks them against central differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DataError, DimensionError, UndefinedMetricError
from .graphcore import GraphSnapshot
from .numkit import (SparseMatrix, elu, elu_grad, glorot_init, relu, relu_grad, segment_softmax,
                     segment_sum, sigmoid, spmm)

CHECKPOINT_FORMAT = "vstreamdrls-checkpoint/1"

# Callables invoked with (alpha, dst, num_nodes) after every attention pass.
# The test-suite registers a simplex checker here.
attention_observers: list[Callable[[np.ndarray, np.ndarray, int], None]] = []


@dataclass(frozen=True)
class ModelConfig:
    window: int = 3
    layer_dims: tuple[int, ...] = (16,)
    seed: int = 0
    evolve: bool = True
    # fixed factor on Z; "auto" = sqrt(mean edge weight of the target snapshot)
    output_scale: float | str = "auto"

    def __post_init__(self):
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        if self.output_scale != "auto" and not float(self.output_scale) > 0:
            raise ContractError("output_scale must be positive or 'auto'")
        if self.window < 1:
            raise ContractError("window must be at least 1")
        if not self.layer_dims or min(self.layer_dims) < 1:
            raise ContractError("layer_dims must be a non-empty list of positive sizes")

    @property
    def d1(self) -> int:
        return self.layer_dims[0]

    @property
    def num_layers(self) -> int:
        return len(self.layer_dims)


@dataclass
class ModelState:
    """Trainable parameters for one window.

    ``params`` keys: ``W1_base`` (nodes x d1), ``H_i`` (d1 x d1) and ``a_i``
    (2*d1,) for window positions ``i = 0..w-1`` (oldest first), and
    ``W2..WL`` for the upper GCN layers. ``output_scale`` is a fixed,
    untrained factor applied to the final embedding so that inner products
    live in capacity units.
    """

    params: dict[str, np.ndarray]
    window: int
    layer_dims: tuple[int, ...]
    output_scale: float = 1.0

    @property
    def num_nodes(self) -> int:
        return self.params["W1_base"].shape[0]

    def copy(self) -> "ModelState":
        return ModelState({k: v.copy() for k, v in self.params.items()}, self.window, self.layer_dims,
                          self.output_scale)


@dataclass
class Embedding:
    z: np.ndarray
    step: int

    def __array__(self, dtype=None, copy=None):
        return self.z if dtype is None else self.z.astype(dtype)


def param_names(window: int, num_layers: int) -> list[str]:
    names = ["W1_base"]
    names += [f"H_{i}" for i in range(window)]
    names += [f"a_{i}" for i in range(window)]
    names += [f"W{l}" for l in range(2, num_layers + 1)]
    return names


def resolve_output_scale(config: ModelConfig, target: GraphSnapshot) -> float:
    if config.output_scale != "auto":
        return float(config.output_scale)
    if target.num_edges == 0:
        return 1.0
    return float(np.sqrt(np.mean([w for _, _, w in target.edges])))


def init_state(num_nodes: int, config: ModelConfig, window: int | None = None,
               seed: int | None = None, output_scale: float = 1.0) -> ModelState:
    """Glorot-initialise every parameter from a single seed.

    Each parameter gets its own child stream keyed by name, so the draw for
    ``W1_base`` does not depend on the window length.
    """
    window = config.window if window is None else window
    seed = config.seed if seed is None else seed
    dims = config.layer_dims
    d1 = dims[0]

    def draw(name: str, rows: int, cols: int) -> np.ndarray:
        key = [int(b) for b in name.encode()]
        return glorot_init(rows, cols, np.random.default_rng([seed, *key]))

    params = {"W1_base": draw("W1_base", num_nodes, d1)}
    for i in range(window):
        params[f"H_{i}"] = draw(f"H_{i}", d1, d1)
    for i in range(window):
        params[f"a_{i}"] = draw(f"a_{i}", 1, 2 * d1).ravel()
    for l in range(2, len(dims) + 1):
        params[f"W{l}"] = draw(f"W{l}", dims[l - 2], dims[l - 1])
    return ModelState(params, window, dims, float(output_scale))


# ---------------------------------------------------------------------------
# weight evolution
# ---------------------------------------------------------------------------


def _evolve_fwd(w_prev: np.ndarray, h: np.ndarray, a: np.ndarray, adj: SparseMatrix):
    n, d1 = w_prev.shape
    if h.shape != (d1, d1):
        raise DimensionError(f"transform must be ({d1}, {d1}), got {h.shape}")
    a = np.asarray(a).ravel()
    if a.shape != (2 * d1,):
        raise DimensionError(f"attention vector must have length {2 * d1}, got {a.shape}")
    if adj.shape != (n, n):
        raise DimensionError(f"adjacency {adj.shape} does not match weight rows {n}")

    t = w_prev @ h.T                        # row u holds H @ w_prev(u)
    dst = adj.row_ids()                     # v
    src = adj.indices                       # u in N_v
    aw = adj.data
    s_src = t @ a[:d1]
    s_dst = t @ a[d1:]
    score = aw * (s_src[src] + s_dst[dst])
    c = sigmoid(score)
    alpha = segment_softmax(c, dst, n)
    for obs in attention_observers:
        obs(alpha, dst, n)
    pre = segment_sum(alpha[:, None] * t[src], dst, n)
    has_nbr = np.diff(adj.indptr) > 0
    out = np.where(has_nbr[:, None], elu(pre), w_prev)
    cache = (w_prev, h, a, t, dst, src, aw, c, alpha, pre, has_nbr)
    return out, cache


def _evolve_bwd(g_out: np.ndarray, cache):
    w_prev, h, a, t, dst, src, aw, c, alpha, pre, has_nbr = cache
    n, d1 = w_prev.shape
    g_wprev = np.where(has_nbr[:, None], 0.0, g_out)
    g_pre = np.where(has_nbr[:, None], g_out * elu_grad(pre), 0.0)

    g_t = segment_sum(alpha[:, None] * g_pre[dst], src, n)
    g_alpha = np.einsum("ij,ij->i", g_pre[dst], t[src])
    # softmax backward within each destination group
    g_c = alpha * (g_alpha - segment_sum(alpha * g_alpha, dst, n)[dst])
    g_score = g_c * c * (1.0 - c) * aw
    g_s_src = segment_sum(g_score, src, n)
    g_s_dst = segment_sum(g_score, dst, n)
    g_a = np.concatenate([t.T @ g_s_src, t.T @ g_s_dst])
    g_t += np.outer(g_s_src, a[:d1]) + np.outer(g_s_dst, a[d1:])

    g_wprev = g_wprev + g_t @ h
    g_h = g_t.T @ w_prev
    return g_wprev, g_h, g_a


def attention_weights(w_prev: np.ndarray, h: np.ndarray, a: np.ndarray,
                      snapshot: GraphSnapshot) -> dict[int, list[tuple[int, float]]]:
    """Normalised attention ``{v: [(u, alpha_uv), ...]}`` for every node with neighbours."""
    _, cache = _evolve_fwd(np.asarray(w_prev, dtype=float), np.asarray(h, dtype=float),
                           np.asarray(a, dtype=float), snapshot.adjacency)
    dst, src, alpha = cache[4], cache[5], cache[8]
    out: dict[int, list[tuple[int, float]]] = {}
    for v, u, al in zip(dst.tolist(), src.tolist(), alpha.tolist()):
        out.setdefault(v, []).append((u, al))
    return out


def evolve_weights(w_prev, h, a, snapshot: GraphSnapshot) -> np.ndarray:
    """Compute the next first-layer weight matrix from the previous one.

    Nodes without neighbours in ``snapshot`` keep their previous row.
    """
    w_prev = np.asarray(w_prev, dtype=float)
    if w_prev.ndim != 2 or w_prev.shape[0] != snapshot.num_nodes:
        raise DimensionError(
            f"weight matrix must have {snapshot.num_nodes} rows, got shape {w_prev.shape}")
    out, _ = _evolve_fwd(w_prev, np.asarray(h, dtype=float), np.asarray(a, dtype=float),
                         snapshot.adjacency)
    return out


# ---------------------------------------------------------------------------
# GCN stack
# ---------------------------------------------------------------------------


def _gcn_fwd(a_hat: SparseMatrix, features, weights: Sequence[np.ndarray]):
    if not weights:
        raise DimensionError("at least one weight matrix is required")
    n = a_hat.rows
    w1 = np.asarray(weights[0], dtype=float)
    if features is None:
        if w1.shape[0] != n:
            raise DimensionError(f"W1 has {w1.shape[0]} rows but the graph has {n} nodes")
        xw = w1
    else:
        x = np.asarray(features, dtype=float)
        if x.shape[0] != n or x.shape[1] != w1.shape[0]:
            raise DimensionError(f"features {x.shape} do not chain with W1 {w1.shape}")
        xw = x @ w1
    pres, inputs = [], [features]
    z = None
    for l, w in enumerate(weights):
        w = np.asarray(w, dtype=float)
        if l == 0:
            p = spmm(a_hat, xw)
        else:
            if z.shape[1] != w.shape[0]:
                raise DimensionError(f"layer {l + 1}: {z.shape} does not chain with {w.shape}")
            inputs.append(z)
            p = spmm(a_hat, z @ w)
        pres.append(p)
        z = p if l == len(weights) - 1 else relu(p)
    return z, (a_hat, list(weights), inputs, pres)


def _gcn_bwd(g_z: np.ndarray, cache):
    a_hat, weights, inputs, pres = cache
    L = len(weights)
    grads = [None] * L
    g = g_z
    for l in range(L - 1, -1, -1):
        g_p = g if l == L - 1 else g * relu_grad(pres[l])
        g_xw = spmm(a_hat, g_p)             # a_hat is symmetric
        if l == 0:
            x = inputs[0]
            grads[0] = g_xw if x is None else np.asarray(x).T @ g_xw
        else:
            grads[l] = inputs[l].T @ g_xw
            g = g_xw @ np.asarray(weights[l]).T
    return grads


def gcn_forward(a_hat: SparseMatrix, features, weights: Sequence[np.ndarray]) -> Embedding:
    """Propagate through ``len(weights)`` layers; ReLU inside, linear output.

    ``features=None`` stands for the identity matrix.
    """
    z, _ = _gcn_fwd(a_hat, features, weights)
    return Embedding(z, -1)


# ---------------------------------------------------------------------------
# full model
# ---------------------------------------------------------------------------


def _check_window(graphs: Sequence[GraphSnapshot], state: ModelState):
    if len(graphs) == 0:
        raise ContractError("empty window")
    if len(graphs) != state.window:
        raise ContractError(f"window has {len(graphs)} snapshots but the state expects {state.window}")
    for g in graphs:
        if g.num_nodes != state.num_nodes:
            raise DimensionError(f"snapshot universe {g.num_nodes} != state rows {state.num_nodes}")


def _forward(graphs: Sequence[GraphSnapshot], params: dict[str, np.ndarray],
             layer_dims: Sequence[int], evolve: bool, output_scale: float):
    w = params["W1_base"]
    caches = []
    if evolve:
        for i, g in enumerate(graphs):
            w, c = _evolve_fwd(w, params[f"H_{i}"], params[f"a_{i}"], g.adjacency)
            caches.append(c)
    upper = [params[f"W{l}"] for l in range(2, len(layer_dims) + 1)]
    z, gcache = _gcn_fwd(graphs[-1].normalized, None, [w, *upper])
    return output_scale * z, caches, gcache


def vstream_forward(graphs: Sequence[GraphSnapshot], state: ModelState,
                    evolve: bool = True) -> Embedding:
    """Evolve the first-layer weights across the window and run the final GCN."""
    _check_window(graphs, state)
    z, _, _ = _forward(graphs, state.params, state.layer_dims, evolve, state.output_scale)
    return Embedding(z, graphs[-1].step_index)


def _loss_fwd(z: np.ndarray, snapshot: GraphSnapshot):
    n_active = len(snapshot.active_nodes)
    if n_active == 0:
        raise UndefinedMetricError(f"snapshot {snapshot.step_index} has no active nodes")
    adj = snapshot.adjacency
    v = adj.row_ids()
    u = adj.indices
    ip = np.einsum("ij,ij->i", z[u], z[v])
    resid = relu(ip) - adj.data
    loss = float(np.sqrt(np.sum(resid * resid) / n_active))
    return loss, (z, u, v, ip, resid, n_active, loss)


def _loss_bwd(cache) -> np.ndarray:
    z, u, v, ip, resid, n_active, loss = cache
    g_z = np.zeros_like(z)
    if loss == 0.0:
        return g_z
    g_ip = resid * relu_grad(ip) / (n_active * loss)
    np.add.at(g_z, u, g_ip[:, None] * z[v])
    np.add.at(g_z, v, g_ip[:, None] * z[u])
    return g_z


def reconstruction_loss(z, snapshot: GraphSnapshot) -> float:
    """Root of the per-active-node mean of squared residuals over ordered edges."""
    z = np.asarray(z, dtype=float)
    if z.shape[0] != snapshot.num_nodes:
        raise DimensionError(f"embedding has {z.shape[0]} rows, universe is {snapshot.num_nodes}")
    return _loss_fwd(z, snapshot)[0]


def loss_and_grad(graphs: Sequence[GraphSnapshot], params: dict[str, np.ndarray],
                  layer_dims: Sequence[int], evolve: bool = True, output_scale: float = 1.0):
    """Loss at the last snapshot of the window and its gradient for every parameter.

    Returns ``(loss, grads, z)``.
    """
    z, caches, gcache = _forward(graphs, params, layer_dims, evolve, output_scale)
    loss, lcache = _loss_fwd(z, graphs[-1])
    g_z = output_scale * _loss_bwd(lcache)
    gcn_grads = _gcn_bwd(g_z, gcache)
    grads = {name: np.zeros_like(p) for name, p in params.items()}
    for l in range(2, len(layer_dims) + 1):
        grads[f"W{l}"] = gcn_grads[l - 1]
    g_w = gcn_grads[0]
    if evolve:
        for i in range(len(caches) - 1, -1, -1):
            g_w, grads[f"H_{i}"], grads[f"a_{i}"] = _evolve_bwd(g_w, caches[i])
    grads["W1_base"] = g_w
    return loss, grads, z


def static_gcn_baseline(snapshot: GraphSnapshot, config: ModelConfig, train_config=None):
    """Train a plain GCN on ``snapshot`` alone and return its embedding."""
    from .train import TrainConfig, fit

    cfg = ModelConfig(window=1, layer_dims=config.layer_dims, seed=config.seed, evolve=False,
                      output_scale=config.output_scale)
    _, emb, _ = fit([snapshot], cfg, train_config or TrainConfig())
    return emb


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, state: ModelState, metadata: dict | None = None) -> Path:
    path = Path(path)
    doc = {
        "format": CHECKPOINT_FORMAT,
        "window": state.window,
        "layer_dims": list(state.layer_dims),
        "output_scale": state.output_scale,
        "metadata": metadata or {},
        "params": {name: {"shape": list(v.shape), "values": v.ravel().tolist()}
                   for name, v in state.params.items()},
    }
    path.write_text(json.dumps(doc, indent=1))
    return path


def load_checkpoint(path) -> tuple[ModelState, dict]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: unsupported checkpoint format {doc.get('format')!r}")
    params = {name: np.array(p["values"], dtype=np.float64).reshape(p["shape"])
              for name, p in doc["params"].items()}
    state = ModelState(params, int(doc["window"]), tuple(doc["layer_dims"]),
                       float(doc.get("output_scale", 1.0)))
    expected = set(param_names(state.window, len(state.layer_dims)))
    if set(params) != expected:
        raise DataError(f"{path}: parameter set {sorted(params)} != {sorted(expected)}")
    return state, doc.get("metadata", {})
