"""Slow, loop-based reference implementations used only by the tests."""

import math

import numpy as np


def dense_normalize(a):
    t = a + np.eye(len(a))
    d = np.diag(1 / np.sqrt(t.sum(1)))
    return d @ t @ d


def evolve_loop(w_prev, h, a, adj):
    """Per-node attention update written directly from the formulas."""
    n, d1 = w_prev.shape
    out = w_prev.copy()
    alphas = {}
    for v in range(n):
        nbrs = [u for u in range(n) if adj[v, u] > 0]
        if not nbrs:
            continue
        hv = h @ w_prev[v]
        coef = []
        for u in nbrs:
            hu = h @ w_prev[u]
            s = adj[u, v] * float(a @ np.concatenate([hu, hv]))
            coef.append(1 / (1 + math.exp(-s)))
        ex = [math.exp(c) for c in coef]
        alpha = [e / sum(ex) for e in ex]
        alphas[v] = dict(zip(nbrs, alpha))
        acc = sum(al * (h @ w_prev[u]) for al, u in zip(alpha, nbrs))
        out[v] = [x if x >= 0 else math.exp(x) - 1 for x in acc]
    return out, alphas


def gcn_loop(a_hat, weights):
    z = a_hat @ weights[0]
    for w in weights[1:]:
        z = a_hat @ np.maximum(z, 0) @ w
    return z


def loss_loop(z, adj, active):
    total = 0.0
    for v in active:
        for u in range(len(adj)):
            if adj[v, u] > 0:
                total += (max(0.0, float(z[u] @ z[v])) - adj[u, v]) ** 2
    return math.sqrt(total / len(active))


def vstream_loop(graphs_dense, w_base, hs, as_, uppers, scale=1.0):
    w = w_base
    for adj, h, a in zip(graphs_dense, hs, as_):
        w, _ = evolve_loop(w, h, a, adj)
    return scale * gcn_loop(dense_normalize(graphs_dense[-1]), [w, *uppers])
