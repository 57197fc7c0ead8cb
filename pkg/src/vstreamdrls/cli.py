"""Command-line entry point: ``vstreamdrls generate|stats|train|eval|sweep``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
Settings come from defaults, then ``--config`` (YAML or JSON mapping), then
``--set key=value`` pairs and dedicated flags.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from .dataio import SynthConfig, event_stats, generate_event, load_event, save_event
from .errors import ConfigError, ContractError, EmptyTestSetError, VStreamError
from .evaluation import EvalReport, evaluate_embedding
from .graphcore import DynamicGraph
from .model import ModelConfig, load_checkpoint, save_checkpoint, vstream_forward
from .train import TrainConfig, fit, step_seed, train_at_step

log = logging.getLogger("vstreamdrls")


@dataclass
class RunConfig:
    window: int = 3
    dims: tuple[int, ...] = (32, 16)
    seed: int = 0
    output_scale: float | str = "auto"
    lr: float = 0.01
    max_epochs: int = 500
    tolerance: float = 1e-4
    patience: int = 10
    stall_epochs: int = 100
    warm_start: bool = False
    train_only_h: bool = False
    head: str = "inner"
    mlp_hidden: int | None = None
    weight_rule: str = "earliest"
    step: int | None = None
    all_steps: bool = False
    baseline: bool = False
    record_timing: bool = False
    data: str | None = None
    synth: dict | None = None
    out: str = "run"
    windows: tuple[int, ...] = (1, 2, 3, 4, 5)
    dims_grid: tuple[int, ...] = (8, 16, 32, 64)
    reps: int = 3
    jobs: int = 1

    def __post_init__(self):
        self.dims = _int_tuple(self.dims, "dims")
        self.windows = _int_tuple(self.windows, "windows")
        self.dims_grid = _int_tuple(self.dims_grid, "dims_grid")
        if self.data is not None and self.synth is not None:
            raise ConfigError("give either a dataset path or a synthetic config, not both")
        if self.head not in ("inner", "mlp"):
            raise ConfigError(f"head must be 'inner' or 'mlp', got {self.head!r}")
        if self.reps < 1 or self.jobs < 1:
            raise ConfigError("reps and jobs must be at least 1")
        if not self.windows or not self.dims_grid:
            raise ConfigError("sweep grid must be non-empty")
        self.model_config()
        self.train_config()

    def model_config(self, **kw) -> ModelConfig:
        try:
            base = dict(window=self.window, layer_dims=self.dims, seed=self.seed,
                        output_scale=self.output_scale)
            base.update(kw)
            return ModelConfig(**base)
        except ContractError as exc:
            raise ConfigError(str(exc)) from exc

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig(max_epochs=self.max_epochs, tolerance=self.tolerance,
                               patience=self.patience, stall_epochs=self.stall_epochs, lr=self.lr,
                               warm_start=self.warm_start, train_only_h=self.train_only_h)
        except ContractError as exc:
            raise ConfigError(str(exc)) from exc

    def synth_config(self) -> SynthConfig:
        return SynthConfig.from_dict(self.synth or {})

    def source(self) -> dict:
        if self.data is not None:
            return {"data": str(self.data)}
        return {"synth": self.synth_config().to_dict()}

    def fingerprint(self, k: int) -> str:
        keys = ["window", "dims", "seed", "output_scale", "lr", "max_epochs", "tolerance", "patience",
                "stall_epochs", "warm_start", "train_only_h"]
        doc = {key: getattr(self, key) for key in keys}
        doc.update(self.source())
        doc["step"] = k
        blob = json.dumps(doc, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _int_tuple(x, name) -> tuple[int, ...]:
    if isinstance(x, str):
        x = [p for p in x.replace(" ", "").split(",") if p]
    if isinstance(x, int):
        x = [x]
    try:
        return tuple(int(v) for v in x)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a list of integers, got {x!r}") from None


def load_config_file(path) -> dict:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a key-value mapping")
    return doc


def parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = yaml.safe_load(value)
    return out


def build_run_config(args, file_doc: dict | None = None) -> RunConfig:
    settings: dict = {}
    file_doc = dict(file_doc or {})
    known = {f.name for f in fields(RunConfig)}
    for key in list(file_doc):
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
    settings.update(file_doc)
    overrides = parse_overrides(getattr(args, "set", None))
    for key in overrides:
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
    settings.update(overrides)
    flag_map = {"data": "data", "out": "out", "seed": "seed", "window": "window", "dims": "dims",
                "head": "head", "step": "step", "lr": "lr", "epochs": "max_epochs",
                "windows": "windows", "dims_grid": "dims_grid", "reps": "reps", "jobs": "jobs"}
    for flag, key in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            settings[key] = value
    for flag, key in [("baseline", "baseline"), ("all_steps", "all_steps"),
                      ("train_only_H", "train_only_h"), ("record_timing", "record_timing")]:
        if getattr(args, flag, False):
            settings[key] = True
    try:
        return RunConfig(**settings)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _load_data(cfg: RunConfig) -> DynamicGraph:
    if cfg.data is not None:
        return load_event(cfg.data)
    return generate_event(cfg.synth_config())


def _default_step(dyn: DynamicGraph) -> int:
    return max(dyn.K - 2, 0)


def _eval_steps(cfg: RunConfig, dyn: DynamicGraph) -> list[int]:
    if cfg.all_steps:
        return list(range(max(dyn.K - 1, 1)))
    k = _default_step(dyn) if cfg.step is None else cfg.step
    if not 0 <= k < dyn.K:
        raise ConfigError(f"step {k} outside 0..{dyn.K - 1}")
    return [k]


def _prepare_out(path, force: bool, names) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    if not force:
        clash = [n for n in names if (out / n).exists()]
        if clash:
            raise ConfigError(f"{out / clash[0]} exists; pass --force to overwrite")
    return out


def _write_matrix(path: Path, z: np.ndarray):
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["node"] + [f"z{j}" for j in range(z.shape[1])])
        for i, row in enumerate(z):
            wr.writerow([i] + [repr(float(x)) for x in row])


def _step_seed(cfg: RunConfig, k: int) -> int:
    return step_seed(cfg.seed, k) if cfg.all_steps else cfg.seed


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    doc = load_config_file(args.config) if args.config else {}
    synth = dict(doc.get("synth", doc))
    synth.update(parse_overrides(args.set))
    if args.seed is not None:
        synth["seed"] = args.seed
    try:
        scfg = SynthConfig.from_dict(synth)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    dyn = generate_event(scfg)
    manifest = save_event(dyn, args.out, force=args.force)
    print(manifest)
    return 0


def cmd_stats(args) -> int:
    cfg = build_run_config(args, load_config_file(args.config) if args.config else None)
    dyn = _load_data(cfg)
    stats = event_stats(dyn)
    out = _prepare_out(cfg.out, args.force, ["stats.csv"])
    stats.write_csv(out / "stats.csv")
    print(f"{dyn.name}: {dyn.K} snapshots, {dyn.num_nodes} nodes, "
          f"{len(set().union(*(s.edge_set for s in dyn.snapshots)))} distinct edges")
    return 0


def cmd_train(args) -> int:
    cfg = build_run_config(args, load_config_file(args.config) if args.config else None)
    dyn = _load_data(cfg)
    steps = _eval_steps(cfg, dyn)
    suffix = (lambda k: f"_k{k}") if cfg.all_steps else (lambda k: "")
    names = [f"{stem}{suffix(k)}.{ext}" for k in steps
             for stem, ext in [("checkpoint", "json"), ("trace", "csv"), ("embedding", "csv")]]
    out = _prepare_out(cfg.out, args.force, names)
    tcfg = cfg.train_config()
    for k in steps:
        mcfg = cfg.model_config(seed=_step_seed(cfg, k))
        state, emb, trace = train_at_step(dyn, k, tcfg, mcfg)
        meta = {"fingerprint": cfg.fingerprint(k), "step": k, "reason": trace.reason,
                "epochs": trace.final_epoch}
        save_checkpoint(out / f"checkpoint{suffix(k)}.json", state, meta)
        trace.write_csv(out / f"trace{suffix(k)}.csv", include_timing=cfg.record_timing)
        _write_matrix(out / f"embedding{suffix(k)}.csv", emb.z)
        print(f"k={k}: loss {trace.losses[0]:.6g} -> {trace.losses[-1]:.6g} "
              f"after {trace.final_epoch} epochs ({trace.reason})")
    return 0


def _static_embedding(cfg: RunConfig, dyn: DynamicGraph, k: int, seed: int):
    mcfg = cfg.model_config(window=1, seed=seed, evolve=False)
    _, emb, _ = fit([dyn[k]], mcfg, cfg.train_config())
    return emb.z


def cmd_eval(args) -> int:
    cfg = build_run_config(args, load_config_file(args.config) if args.config else None)
    dyn = _load_data(cfg)
    steps = _eval_steps(cfg, dyn)
    out = _prepare_out(cfg.out, args.force, ["report.csv", "report.json"]
                       + (["comparison.csv"] if cfg.baseline else []))
    report = EvalReport(config=asdict(cfg))
    for k in steps:
        ckpt = Path(args.checkpoint) if args.checkpoint and not cfg.all_steps else \
            Path(cfg.out) / (f"checkpoint_k{k}.json" if cfg.all_steps else "checkpoint.json")
        state, meta = load_checkpoint(ckpt)
        expected = cfg.fingerprint(k)
        if meta.get("fingerprint") != expected:
            raise ContractError(f"checkpoint {ckpt} fingerprint {meta.get('fingerprint')!r} "
                                f"does not match the run configuration ({expected})")
        graphs = dyn.window(k, cfg.window)
        z = vstream_forward(graphs, state).z
        seed = _step_seed(cfg, k)
        try:
            test, mae, rmse = evaluate_embedding(dyn, k, z, cfg.head, cfg.mlp_hidden, seed,
                                                 cfg.weight_rule)
        except EmptyTestSetError:
            if cfg.all_steps:
                continue
            raise
        report.add(k, len(test), mae, rmse, cfg.head, "vstreamdrls")
        if cfg.baseline:
            zb = _static_embedding(cfg, dyn, k, seed)
            _, bmae, brmse = evaluate_embedding(dyn, k, zb, cfg.head, cfg.mlp_hidden, seed,
                                                cfg.weight_rule)
            report.add(k, len(test), bmae, brmse, cfg.head, "static-gcn")
    if not report.rows:
        raise EmptyTestSetError("no step has unobserved future edges")
    report.check()
    report.fingerprint = cfg.fingerprint(steps[-1] if len(steps) == 1 else -1)
    report.write_csv(out / "report.csv")
    report.write_json(out / "report.json")
    if cfg.baseline:
        _write_comparison(out / "comparison.csv", report)
    for r in report.rows:
        print(f"{r['model']:>12} k={r['k']:<3} |O_k|={r['O_k']:<5} MAE={r['MAE']:.6g} RMSE={r['RMSE']:.6g}")
    return 0


def _write_comparison(path: Path, report: EvalReport):
    models = sorted({r["model"] for r in report.rows}, key=lambda m: m != "vstreamdrls")
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["model", "steps", "mean_MAE", "mean_RMSE"])
        for m in models:
            n = sum(r["model"] == m for r in report.rows)
            wr.writerow([m, n, repr(report.mean("MAE", m)), repr(report.mean("RMSE", m))])


def _sweep_cell(job):
    cfg, dyn, w, d, rep, k = job
    seed = cfg.seed + rep
    dims = (*cfg.dims[:-1], d)
    try:
        mcfg = cfg.model_config(window=w, layer_dims=dims, seed=seed)
        _, emb, _ = train_at_step(dyn, k, cfg.train_config(), mcfg)
        _, mae, rmse = evaluate_embedding(dyn, k, emb.z, cfg.head, cfg.mlp_hidden, seed,
                                          cfg.weight_rule)
        return {"w": w, "d": d, "seed": seed, "step": k, "MAE": mae, "RMSE": rmse, "error": ""}
    except VStreamError as exc:
        return {"w": w, "d": d, "seed": seed, "step": k, "MAE": math.nan, "RMSE": math.nan,
                "error": f"{type(exc).__name__}: {exc}"}


def cmd_sweep(args) -> int:
    cfg = build_run_config(args, load_config_file(args.config) if args.config else None)
    dyn = _load_data(cfg)
    steps = _eval_steps(cfg, dyn)
    out = _prepare_out(cfg.out, args.force, ["sweep.csv", "sweep_summary.csv"])
    jobs = [(cfg, dyn, w, d, rep, k) for w in cfg.windows for d in cfg.dims_grid
            for rep in range(cfg.reps) for k in steps]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            rows = list(pool.map(_sweep_cell, jobs))
    else:
        rows = [_sweep_cell(j) for j in jobs]

    cols = ["w", "d", "seed", "step", "MAE", "RMSE", "error"]
    with (out / "sweep.csv").open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(cols)
        for r in rows:
            wr.writerow([r["w"], r["d"], r["seed"], r["step"], repr(r["MAE"]), repr(r["RMSE"]), r["error"]])

    summary = []
    for w in cfg.windows:
        for d in cfg.dims_grid:
            cell = [r for r in rows if r["w"] == w and r["d"] == d and not r["error"]]
            mae = np.array([r["MAE"] for r in cell])
            rmse = np.array([r["RMSE"] for r in cell])
            summary.append({"w": w, "d": d, "runs": len(cell),
                            "mean_MAE": float(mae.mean()) if cell else math.nan,
                            "std_MAE": float(mae.std()) if cell else math.nan,
                            "mean_RMSE": float(rmse.mean()) if cell else math.nan,
                            "std_RMSE": float(rmse.std()) if cell else math.nan})
    valid = [s for s in summary if s["runs"]]
    best = min(valid, key=lambda s: s["mean_RMSE"]) if valid else None
    with (out / "sweep_summary.csv").open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["w", "d", "runs", "mean_MAE", "std_MAE", "mean_RMSE", "std_RMSE", "best"])
        for s in summary:
            wr.writerow([s["w"], s["d"], s["runs"], repr(s["mean_MAE"]), repr(s["std_MAE"]),
                         repr(s["mean_RMSE"]), repr(s["std_RMSE"]), int(s is best)])
    if best is not None:
        print(f"best: w={best['w']} d={best['d']} mean RMSE {best['mean_RMSE']:.6g} "
              f"(+/- {best['std_RMSE']:.3g})")
    failed = [r for r in rows if r["error"]]
    for r in failed:
        print(f"cell w={r['w']} d={r['d']} seed={r['seed']} failed: {r['error']}", file=sys.stderr)
    return 3 if failed else 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML/JSON key-value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--data", help="event manifest (or directory containing manifest.json)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")


def _model_flags(p: argparse.ArgumentParser):
    p.add_argument("--window", type=int)
    p.add_argument("--dims", help="comma-separated layer sizes, e.g. 32,16")
    p.add_argument("--step", type=int, help="time step k (default K-2)")
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--all-steps", dest="all_steps", action="store_true")
    p.add_argument("--train-only-H", dest="train_only_H", action="store_true",
                   help="update only the transform matrices H")
    p.add_argument("--head", choices=["inner", "mlp"])


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vstreamdrls", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic streaming event")
    p.add_argument("--config", help="synthetic-event config (keys of SynthConfig)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("stats", help="evolution and degree statistics")
    _common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train at one step (or all) and write checkpoints")
    _common(p)
    _model_flags(p)
    p.add_argument("--record-timing", dest="record_timing", action="store_true",
                   help="fill the wall_ms column of trace.csv (breaks byte-identical reruns)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on unobserved future edges")
    _common(p)
    _model_flags(p)
    p.add_argument("--checkpoint")
    p.add_argument("--baseline", action="store_true", help="also train and score a static GCN")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid over window size and embedding dimension")
    _common(p)
    _model_flags(p)
    p.add_argument("--windows", help="comma-separated window sizes")
    p.add_argument("--dims-grid", dest="dims_grid", help="comma-separated final dimensions")
    p.add_argument("--reps", type=int)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except VStreamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
