"""One check per acceptance criterion; each prints a PASS/FAIL line.

The lines are also collected and repeated in the terminal summary.
Set VSTREAM_LIVESTREAM400 to a LiveStream-400 event directory to enable
criterion 9.
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import spearmanr

from conftest import ACCEPTANCE_LINES, ATTENTION_LOG
from oracles import dense_normalize, evolve_loop, gcn_loop, loss_loop, vstream_loop
from test_gradients import check, random_instance
from vstreamdrls.cli import main
from vstreamdrls.dataio import SynthConfig, event_stats, generate_event, load_edge_files, load_event
from vstreamdrls.errors import EmptyTestSetError
from vstreamdrls.evaluation import EvalReport, TestSet, build_test_set, evaluate_embedding, score
from vstreamdrls.graphcore import DynamicGraph, GraphSnapshot, normalize_adjacency
from vstreamdrls.model import (ModelConfig, evolve_weights, gcn_forward, init_state,
                               reconstruction_loss, vstream_forward)
from vstreamdrls.numkit import SparseMatrix, densify
from vstreamdrls.train import TrainConfig, fit, train_at_step

ACCEPT_EVENT = SynthConfig(offices=7, viewers_per_office=30, K=12, rewire_start=0.6,
                           rewire_end=0.07, cap=7, seed=0)
K_EVAL = 10
SEEDS = range(5)


def verdict(n: int, ok: bool, detail: str):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


@pytest.fixture(scope="module")
def accept_dyn():
    return generate_event(ACCEPT_EVENT)


@pytest.fixture(scope="module")
def accept_runs(accept_dyn):
    """Dynamic (w=3) and static runs at k=10 for five seeds, default training settings."""
    runs = {"dynamic": [], "static": []}
    tcfg = TrainConfig()
    for seed in SEEDS:
        t0 = time.perf_counter()
        mcfg = ModelConfig(window=3, layer_dims=(32, 16), seed=seed)
        _, emb, trace = train_at_step(accept_dyn, K_EVAL, tcfg, mcfg)
        secs = time.perf_counter() - t0
        _, mae, rmse = evaluate_embedding(accept_dyn, K_EVAL, emb.z)
        runs["dynamic"].append({"trace": trace, "secs": secs, "mae": mae, "rmse": rmse})

        scfg = ModelConfig(window=1, layer_dims=(32, 16), seed=seed, evolve=False)
        _, emb, trace = fit([accept_dyn[K_EVAL]], scfg, tcfg)
        _, mae, rmse = evaluate_embedding(accept_dyn, K_EVAL, emb.z)
        runs["static"].append({"trace": trace, "mae": mae, "rmse": rmse})
    return runs


# ---------------------------------------------------------------------------


def test_criterion_1_gradients():
    t0 = time.perf_counter()
    worst = 0.0
    n = 25
    for seed in range(n):
        graphs, state = random_instance(1000 + seed)
        assert len(state.params["W1_base"]) <= 10 and state.window <= 3 and len(state.layer_dims) <= 2
        worst = max(worst, check(graphs, state).max_rel_error)
    secs = time.perf_counter() - t0
    verdict(1, worst < 1e-4 and secs < 60,
            f"{n} instances, max rel error {worst:.2e} (< 1e-4), {secs:.1f}s (< 60s)")


def _random_snap(rng, n, k=0, p=0.45):
    edges = [(u, v, float(rng.uniform(0.5, 3))) for u in range(n) for v in range(u + 1, n)
             if rng.random() < p]
    return GraphSnapshot.from_edges(k, n, edges)


def test_criterion_2_equation_oracles():
    rng = np.random.default_rng(2024)
    dev = {}

    # normalize_adjacency
    d = 0.0
    a = SparseMatrix.from_dense(np.array([[0.0, 1], [1, 0]]))
    d = max(d, np.abs(densify(normalize_adjacency(a)) - 0.5).max())
    a = SparseMatrix.from_dense(np.array([[0.0, 2], [2, 0]]))
    d = max(d, np.abs(densify(normalize_adjacency(a)) - np.array([[1 / 3, 2 / 3], [2 / 3, 1 / 3]])).max())
    for _ in range(20):
        s = _random_snap(rng, int(rng.integers(2, 12)))
        dense = densify(s.adjacency)
        d = max(d, np.abs(densify(s.normalized) - dense_normalize(dense)).max())
    dev["normalize_adjacency"] = d

    # evolve_weights
    d = 0.0
    s = _random_snap(rng, 6)
    w_prev = rng.normal(size=(6, 3))
    h = rng.normal(size=(3, 3))
    out = evolve_weights(w_prev, h, np.zeros(6), s)
    adj = densify(s.adjacency)
    for v in range(6):
        nb = np.flatnonzero(adj[v])
        if nb.size:
            m = (w_prev[nb] @ h.T).mean(0)
            d = max(d, np.abs(out[v] - np.where(m >= 0, m, np.expm1(m))).max())
    for _ in range(20):
        n, d1 = int(rng.integers(2, 10)), int(rng.integers(1, 5))
        s = _random_snap(rng, n)
        w_prev, h, av = rng.normal(size=(n, d1)), rng.normal(size=(d1, d1)), rng.normal(size=2 * d1)
        expect, _ = evolve_loop(w_prev, h, av, densify(s.adjacency))
        d = max(d, np.abs(evolve_weights(w_prev, h, av, s) - expect).max())
    dev["evolve_weights"] = d

    # gcn_forward and the composed forward pass
    d = 0.0
    two = GraphSnapshot.from_edges(0, 2, [(0, 1, 1.0)])
    d = max(d, np.abs(gcn_forward(two.normalized, None, [np.array([[1.0], [0.0]])]).z - 0.5).max())
    for _ in range(20):
        n = int(rng.integers(2, 10))
        s = _random_snap(rng, n)
        ws = [rng.normal(size=(n, 4)), rng.normal(size=(4, 3))]
        d = max(d, np.abs(gcn_forward(s.normalized, None, ws).z
                          - gcn_loop(dense_normalize(densify(s.adjacency)), ws)).max())
    for seed in range(10):
        w, n = seed % 3 + 1, 7
        graphs = [_random_snap(rng, n, k) for k in range(w)]
        st = init_state(n, ModelConfig(window=w, layer_dims=(4, 3), seed=seed), output_scale=1.3)
        p = st.params
        expect = vstream_loop([densify(g.adjacency) for g in graphs], p["W1_base"],
                              [p[f"H_{i}"] for i in range(w)], [p[f"a_{i}"] for i in range(w)],
                              [p["W2"]], scale=1.3)
        d = max(d, np.abs(vstream_forward(graphs, st).z - expect).max())
    dev["gcn_forward"] = d

    # reconstruction_loss
    d = abs(reconstruction_loss(np.zeros((2, 1)), two) - 1.0)
    for _ in range(20):
        n = int(rng.integers(2, 10))
        s = _random_snap(rng, n)
        if not s.num_edges:
            continue
        z = rng.normal(size=(n, 3))
        d = max(d, abs(reconstruction_loss(z, s) - loss_loop(z, densify(s.adjacency),
                                                             sorted(s.active_nodes))))
    dev["reconstruction_loss"] = d

    # MAE / RMSE
    ts = TestSet(0, [(0, 1, 1.0), (1, 2, 1.0)])
    mae, rmse = score(ts, lambda u, v: np.array([1.0, 3.0]))
    d = max(abs(mae - 1.0), abs(rmse - math.sqrt(2)))
    for _ in range(20):
        m = int(rng.integers(1, 30))
        w, p = rng.uniform(1, 1000, m), rng.uniform(0, 1000, m)
        mae, rmse = score(TestSet(0, [(i, i + 1, float(x)) for i, x in enumerate(w)]),
                          lambda u, v: p)
        d = max(d, abs(mae - np.mean(np.abs(p - w))) / max(1.0, mae),
                abs(rmse - np.sqrt(np.mean((p - w) ** 2))) / max(1.0, rmse))
    dev["MAE/RMSE"] = d

    worst = max(dev.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in dev.items())
    verdict(2, worst <= 1e-9, f"max deviation from oracles <= 1e-9 ({detail})")


def test_criterion_3_attention_simplex(accept_runs):
    # the guard in conftest asserts on every pass; here we confirm it has seen work
    log = ATTENTION_LOG
    ok = log["passes"] > 0 and log["worst_sum_error"] <= 1e-12 and log["min_alpha"] > 0
    verdict(3, ok, f"{log['passes']} attention passes so far, worst |sum-1| "
                   f"{log['worst_sum_error']:.2e} (<= 1e-12), min alpha {log['min_alpha']:.2e} (> 0)")


def test_criterion_4_training_efficacy(accept_runs):
    run = accept_runs["dynamic"][0]
    tr = run["trace"]
    ratio = tr.losses[-1] / tr.losses[0]
    ok = ratio < 0.5 and tr.final_epoch <= 500 and run["secs"] < 300
    verdict(4, ok, f"k={K_EVAL}, w=3, dims [32,16]: loss {tr.losses[0]:.1f} -> {tr.losses[-1]:.1f} "
                   f"(ratio {ratio:.3f} < 0.5) in {tr.final_epoch} epochs, {run['secs']:.1f}s (< 300s)")


def test_criterion_5_dynamic_beats_static(accept_runs):
    dyn_rmse = np.mean([r["rmse"] for r in accept_runs["dynamic"]])
    sta_rmse = np.mean([r["rmse"] for r in accept_runs["static"]])
    dyn_mae = np.mean([r["mae"] for r in accept_runs["dynamic"]])
    sta_mae = np.mean([r["mae"] for r in accept_runs["static"]])
    margin = 100 * (sta_rmse - dyn_rmse) / sta_rmse
    verdict(5, dyn_rmse < sta_rmse,
            f"mean RMSE over 5 seeds: dynamic {dyn_rmse:.2f} vs static {sta_rmse:.2f} "
            f"(margin {margin:.1f}%); mean MAE {dyn_mae:.2f} vs {sta_mae:.2f}")


def test_criterion_6_protocol_integrity(accept_runs):
    rng = np.random.default_rng(6)
    events = 0
    mismatches = 0
    # hand-crafted cases first
    hand = [
        ([(0, 1, 1.0)], [(0, 1, 1.0), (1, 2, 2.0)], [(0, 1, 1.0)], {(1, 2): 2.0}),
        ([(0, 1, 1.0)], [(2, 3, 1.0)], [(0, 1, 3.0), (3, 4, 5.0)], {(2, 3): 1.0, (3, 4): 5.0}),
    ]
    for e0, e1, e2, expect in hand:
        dyn = DynamicGraph(tuple(GraphSnapshot.from_edges(k, 5, e) for k, e in enumerate((e0, e1, e2))), 5)
        got = {(u, v): w for u, v, w in build_test_set(dyn, 0).pairs}
        mismatches += got != expect
        events += 1
    for _ in range(200):
        lists = [[(u, v, float(rng.integers(1, 9))) for u in range(6) for v in range(u + 1, 6)
                  if rng.random() < 0.35] for _ in range(3)]
        dyn = DynamicGraph(tuple(GraphSnapshot.from_edges(k, 6, e) for k, e in enumerate(lists)), 6)
        for k in range(3):
            future = {}
            for s in dyn.snapshots[k + 1:]:
                for u, v, w in s.edges:
                    future.setdefault((u, v), w)
            expect = {p: w for p, w in future.items() if p not in dyn[k].edge_set}
            try:
                got = {(u, v): w for u, v, w in build_test_set(dyn, k).pairs}
            except EmptyTestSetError:
                got = {}
            mismatches += got != expect
        events += 1
    rep = EvalReport()
    for name in ("dynamic", "static"):
        for r in accept_runs[name]:
            rep.add(K_EVAL, 0, r["mae"], r["rmse"], "inner", name)
    bad = sum(not (r["MAE"] <= r["RMSE"]) for r in rep.rows)
    verdict(6, mismatches == 0 and bad == 0,
            f"{events} 3-snapshot events, {mismatches} test-set mismatches vs set difference; "
            f"{len(rep.rows)} reports, {bad} with MAE > RMSE")


def test_criterion_7_determinism(tmp_path):
    small = ["--set", "offices=4", "--set", "viewers_per_office=5", "--set", "K=4", "--set", "seed=3"]
    common = ["--dims", "8,4", "--epochs", "40", "--seed", "1"]

    def run_all(root: Path):
        ev = root / "ev"
        out = root / "out"
        codes = [
            main(["generate", "--out", str(ev), "--force"] + small),
            main(["stats", "--data", str(ev), "--out", str(out), "--force"]),
            main(["train", "--data", str(ev), "--out", str(out), "--force"] + common),
            main(["eval", "--data", str(ev), "--out", str(out), "--force", "--baseline"] + common),
            main(["sweep", "--data", str(ev), "--out", str(out), "--force", "--windows", "1,2",
                  "--dims-grid", "4", "--reps", "1", "--epochs", "20"]),
        ]
        files = sorted(p for p in root.rglob("*") if p.is_file())
        return codes, {p.relative_to(root): p.read_bytes() for p in files}

    codes1, first = run_all(tmp_path)
    codes2, second = run_all(tmp_path)  # same directory, --force
    csvs = [p for p in first if p.suffix in (".csv", ".tsv")]
    same = first == second
    ok = codes1 == codes2 == [0] * 5 and same and len(csvs) >= 8
    verdict(7, ok, f"5 commands rerun with --force: {len(first)} files ({len(csvs)} CSV/TSV), "
                   f"byte-identical={same}")


def test_criterion_8_evolution_metrics():
    base = dict(offices=3, viewers_per_office=10, K=8, arrivals=(1.0,), seed=8)
    zero = event_stats(generate_event(SynthConfig(**base, rewire_start=0.0, rewire_end=0.0)))
    full = event_stats(generate_event(SynthConfig(**base, cap=0, rewire_start=1.0, rewire_end=1.0)))
    default = event_stats(generate_event(SynthConfig())).evolution.edge_evolution
    rho = spearmanr(np.arange(len(default)), default).statistic
    z_ok = all(x == 0.0 for x in zero.evolution.edge_evolution)
    f_min = min(full.evolution.edge_evolution)
    tail = default[-3:]
    verdict(8, z_ok and f_min >= 95 and rho < 0,
            f"rewire 0 -> all 0: {z_ok}; rewire 1 -> min {f_min:.1f} (>= 95); default schedule "
            f"Spearman rho {rho:.3f} (< 0), last steps {', '.join(f'{x:.1f}' for x in tail)}%")


def _load_livestream(path: Path) -> DynamicGraph:
    if (path / "manifest.json").exists() or path.name == "manifest.json":
        return load_event(path)
    files = sorted(p for p in path.iterdir() if p.is_file() and not p.name.startswith("."))
    return load_edge_files(files, name="LiveStream-400")


def test_criterion_9_livestream400(tmp_path):
    root = os.environ.get("VSTREAM_LIVESTREAM400")
    if not root or not Path(root).exists():
        line = "[SKIP] criterion 9: LiveStream-400 not available (set VSTREAM_LIVESTREAM400)"
        print(line)
        ACCEPTANCE_LINES.append(line)
        pytest.skip("LiveStream-400 dataset not available locally")
    dyn = _load_livestream(Path(root))
    stats = event_stats(dyn)
    nodes = len(set().union(*(s.active_nodes for s in dyn.snapshots)))
    k = dyn.K - 2
    mcfg = ModelConfig(window=3, layer_dims=(32, 16), seed=0)
    _, emb, trace = train_at_step(dyn, k, TrainConfig(), mcfg)
    _, mae, rmse = evaluate_embedding(dyn, k, emb.z)
    ok = stats.K == 12 and nodes == 386 and np.isfinite(mae) and np.isfinite(rmse)
    verdict(9, ok, f"{stats.K} snapshots (12), {nodes} nodes (386); train+eval at k={k}: "
                   f"MAE {mae:.2f}, RMSE {rmse:.2f}, {trace.final_epoch} epochs")


def test_smoothed_loss_non_increasing(accept_runs):
    """Window-5 moving average over the final half, <= 5% transient rises allowed.

    Known to fail at the default optimiser settings; see README "Known limitations".
    """
    worst = []
    for name in ("dynamic", "static"):
        for seed, r in zip(SEEDS, accept_runs[name]):
            losses = np.array(r["trace"].losses)
            sm = np.convolve(losses, np.ones(5) / 5, mode="valid")
            tail = sm[len(sm) // 2:]
            rise = float((tail[1:] / tail[:-1] - 1).max()) if tail.size > 1 else 0.0
            worst.append((rise, name, seed))
    bad = [f"{n} seed {s}: {r:.1%}" for r, n, s in sorted(worst, reverse=True) if r > 0.05]
    assert not bad, "smoothed loss rises above 5%: " + "; ".join(bad)
