"""Future-link weight prediction: test sets, prediction heads and MAE/RMSE."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ContractError, EmptyTestSetError
from .graphcore import DynamicGraph, GraphSnapshot
from .numkit import AdamState, adam_step, glorot_init, relu, relu_grad

Predictor = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class TestSet:
    k: int
    pairs: list[tuple[int, int, float]]

    __test__ = False  # not a pytest class

    def __len__(self) -> int:
        return len(self.pairs)

    def arrays(self):
        if not self.pairs:
            return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
        u, v, w = zip(*self.pairs)
        return np.array(u), np.array(v), np.array(w, dtype=float)


def build_test_set(dyn: DynamicGraph, k: int, weight_rule: str = "earliest") -> TestSet:
    """Edges of snapshots ``k+1..K-1`` that are absent from snapshot ``k``.

    ``weight_rule`` picks the target weight of an edge seen several times:
    ``"earliest"`` (first appearance) or ``"mean"`` (over appearances).
    """
    if weight_rule not in ("earliest", "mean"):
        raise ContractError(f"unknown weight rule {weight_rule!r}")
    if not 0 <= k < dyn.K:
        raise ContractError(f"step {k} outside 0..{dyn.K - 1}")
    observed = dyn[k].edge_set
    seen: dict[tuple[int, int], list[float]] = {}
    for snap in dyn.snapshots[k + 1:]:
        for u, v, w in snap.edges:
            if (u, v) not in observed:
                seen.setdefault((u, v), []).append(w)
    if not seen:
        raise EmptyTestSetError(f"no unobserved future edges after step {k}")
    pick = (lambda ws: ws[0]) if weight_rule == "earliest" else (lambda ws: math.fsum(ws) / len(ws))
    return TestSet(k, [(u, v, pick(ws)) for (u, v), ws in sorted(seen.items())])


def predict_inner(z, u, v):
    """ReLU-clipped inner product of the two embedding rows."""
    z = np.asarray(z)
    return relu(np.einsum("...j,...j->...", z[u], z[v]))


def inner_predictor(z) -> Predictor:
    z = np.asarray(z)
    return lambda u, v: predict_inner(z, u, v)


# ---------------------------------------------------------------------------
# MLP head
# ---------------------------------------------------------------------------


@dataclass
class MlpHead:
    """``[z_u || z_v] -> ReLU(x W1 + b1) W2 + b2``, output rescaled by ``scale``."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    in_scale: float = 1.0
    scale: float = 1.0

    def params(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def raw(self, x: np.ndarray) -> np.ndarray:
        return (relu(x @ self.W1 + self.b1) @ self.W2 + self.b2).ravel()


def _mlp_loss_grad(p, x, y):
    pre = x @ p["W1"] + p["b1"]
    h = relu(pre)
    out = (h @ p["W2"] + p["b2"]).ravel()
    r = out - y
    loss = float(np.mean(r * r))
    g_out = (2.0 / y.size) * r[:, None]
    g_h = g_out @ p["W2"].T * relu_grad(pre)
    grads = {"W2": h.T @ g_out, "b2": g_out.sum(0), "W1": x.T @ g_h, "b1": g_h.sum(0)}
    return loss, grads


def _pair_features(z: np.ndarray, u, v, in_scale: float) -> np.ndarray:
    return np.concatenate([z[u], z[v]], axis=1) / in_scale


def train_mlp_head(z, snapshot: GraphSnapshot, hidden: int | None = None, seed: int = 0,
                   epochs: int = 1000, lr: float = 0.01) -> MlpHead:
    """Fit the head on the observed edges of ``snapshot`` in both orientations.

    Inputs are divided by their RMS and targets by their mean so that Adam's
    fixed step size is meaningful whatever the capacity units are.
    """
    z = np.asarray(z, dtype=float)
    if snapshot.num_edges == 0:
        raise ContractError("cannot train an MLP head on a snapshot without edges")
    d = z.shape[1]
    hidden = hidden or d
    e = np.array([(u, v) for u, v, _ in snapshot.edges])
    w = np.array([w for _, _, w in snapshot.edges])
    u = np.concatenate([e[:, 0], e[:, 1]])
    v = np.concatenate([e[:, 1], e[:, 0]])
    y = np.concatenate([w, w])
    rows = z[np.unique(e)]
    in_scale = float(np.sqrt(np.mean(rows * rows))) or 1.0
    scale = float(y.mean())
    x = _pair_features(z, u, v, in_scale)
    rng = np.random.default_rng(seed)
    p = {"W1": glorot_init(2 * d, hidden, rng), "b1": np.zeros(hidden),
         "W2": glorot_init(hidden, 1, rng), "b2": np.zeros(1)}
    state = AdamState(lr=lr)
    target = y / scale
    for _ in range(epochs):
        _, g = _mlp_loss_grad(p, x, target)
        p, state = adam_step(p, g, state)
    return MlpHead(p["W1"], p["b1"], p["W2"], p["b2"], in_scale, scale)


def predict_mlp(head: MlpHead, z, u, v):
    """Mean over both orientations, clipped below at zero."""
    z = np.asarray(z, dtype=float)
    u = np.atleast_1d(u)
    v = np.atleast_1d(v)
    a = head.raw(_pair_features(z, u, v, head.in_scale))
    b = head.raw(_pair_features(z, v, u, head.in_scale))
    out = np.maximum(0.5 * (a + b) * head.scale, 0.0)
    return out if out.size > 1 else float(out[0])


def mlp_predictor(head: MlpHead, z) -> Predictor:
    z = np.asarray(z, dtype=float)
    return lambda u, v: np.atleast_1d(predict_mlp(head, z, u, v))


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------


def score(test: TestSet, predictor: Predictor) -> tuple[float, float]:
    """Return ``(MAE, RMSE)`` over the test pairs.

    Sums use exactly rounded accumulation so the result does not depend on
    pair order.
    """
    if len(test) == 0:
        raise EmptyTestSetError(f"test set for step {test.k} is empty")
    u, v, w = test.arrays()
    pred = np.asarray(predictor(u, v), dtype=float).reshape(-1)
    err = pred - w
    mae = math.fsum(np.abs(err)) / err.size
    rmse = math.sqrt(math.fsum(err * err) / err.size)
    return mae, rmse


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

REPORT_COLUMNS = ["step", "k", "O_k", "MAE", "RMSE", "head", "model"]


@dataclass
class EvalReport:
    rows: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    fingerprint: str = ""

    def add(self, k: int, n_test: int, mae: float, rmse: float, head: str, model: str = "vstreamdrls"):
        self.rows.append({"step": len(self.rows), "k": k, "O_k": n_test, "MAE": mae, "RMSE": rmse,
                          "head": head, "model": model})

    def check(self):
        for r in self.rows:
            if not (0 <= r["MAE"] <= r["RMSE"] * (1 + 1e-12) + 1e-300):
                raise AssertionError(f"MAE {r['MAE']} exceeds RMSE {r['RMSE']} at k={r['k']}")

    def mean(self, key: str, model: str | None = None) -> float:
        vals = [r[key] for r in self.rows if model is None or r["model"] == model]
        return float(np.mean(vals))

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(REPORT_COLUMNS)
            for r in self.rows:
                wr.writerow([r["step"], r["k"], r["O_k"], repr(r["MAE"]), repr(r["RMSE"]),
                             r["head"], r["model"]])
        return path

    def write_json(self, path) -> Path:
        path = Path(path)
        doc = {"fingerprint": self.fingerprint, "config": self.config, "rows": self.rows}
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


def evaluate_embedding(dyn: DynamicGraph, k: int, z, head: str = "inner",
                       hidden: int | None = None, seed: int = 0,
                       weight_rule: str = "earliest") -> tuple[TestSet, float, float]:
    test = build_test_set(dyn, k, weight_rule)
    z = np.asarray(z, dtype=float)
    if head == "inner":
        pred = inner_predictor(z)
    elif head == "mlp":
        pred = mlp_predictor(train_mlp_head(z, dyn[k], hidden, seed), z)
    else:
        raise ContractError(f"unknown head {head!r}")
    mae, rmse = score(test, pred)
    return test, mae, rmse
