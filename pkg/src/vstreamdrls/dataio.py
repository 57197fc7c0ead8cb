"""Edge-list event files and a seeded synthetic streaming-event generator.

On-disk layout of an event::

    manifest.json          {"format": "vstreamdrls-event/1", "name": ..., "num_nodes": N,
                            "interval_minutes": 5, "snapshots": ["snapshot_000.tsv", ...]}
    snapshot_000.tsv       u<TAB>v<TAB>weight, one undirected edge per line

Node ids are non-negative integers. ``#`` starts a comment. A line holding a
single node id marks an active node that has no edges in that snapshot.
Snapshot files ending in ``.gz`` are decompressed transparently.
"""

from __future__ import annotations

import csv
import gzip
import io
import json
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, ParseError
from .graphcore import DynamicGraph, EvolutionStats, GraphSnapshot, canonical_pair, evolution_stats

EVENT_FORMAT = "vstreamdrls-event/1"
MANIFEST_NAME = "manifest.json"
_SPLIT = re.compile(r"[\s,;]+")


@dataclass
class EventManifest:
    name: str
    num_nodes: int | None
    interval_minutes: float
    snapshots: list[str]

    @property
    def K(self) -> int:
        return len(self.snapshots)


# ---------------------------------------------------------------------------
# reading
# ---------------------------------------------------------------------------


def _open_text(path: Path):
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return path.open("r", encoding="utf-8")


def read_snapshot_file(path) -> tuple[list[tuple[int, int, float]], set[int]]:
    """Parse one edge file into raw ``(u, v, w)`` triples and isolated node ids."""
    path = Path(path)
    edges: list[tuple[int, int, float]] = []
    isolated: set[int] = set()
    seen: dict[tuple[int, int], float] = {}
    try:
        fh = _open_text(path)
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = _SPLIT.split(line)
            try:
                if len(parts) == 1:
                    node = int(parts[0])
                    if node < 0:
                        raise ValueError
                    isolated.add(node)
                    continue
                if len(parts) != 3:
                    raise ValueError
                u, v, w = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise ParseError(path, line_no, f"expected 'u v weight', got {raw.rstrip()!r}") from None
            if u < 0 or v < 0:
                raise ParseError(path, line_no, "node ids must be non-negative")
            if u == v:
                raise ParseError(path, line_no, f"self-loop on node {u}")
            if not np.isfinite(w) or w <= 0:
                raise DataError(f"{path}:{line_no}: edge ({u}, {v}) has non-positive weight {w}")
            key = canonical_pair(u, v)
            if key in seen:
                if seen[key] != w:
                    raise DataError(f"{path}:{line_no}: edge {key} repeated with weight {w} "
                                    f"(earlier {seen[key]})")
                continue
            seen[key] = w
            edges.append((key[0], key[1], w))
    return edges, isolated


def read_manifest(path) -> tuple[EventManifest, Path]:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.msg) from exc
    if doc.get("format", EVENT_FORMAT) != EVENT_FORMAT:
        raise DataError(f"{path}: unknown event format {doc.get('format')!r}")
    snaps = doc.get("snapshots")
    if not snaps:
        raise DataError(f"{path}: manifest lists no snapshots")
    man = EventManifest(doc.get("name", path.parent.name), doc.get("num_nodes"),
                        float(doc.get("interval_minutes", 5.0)), list(snaps))
    return man, path.parent


def assemble(raw: Sequence[tuple[list, set]], num_nodes: int | None = None, name: str = "event",
             interval_minutes: float = 5.0) -> DynamicGraph:
    """Build a DynamicGraph from parsed snapshots, mapping ids onto ``0..N-1``.

    Ids are kept as-is when they already fit inside ``num_nodes``; otherwise
    the sorted union of ids is relabelled densely and recorded as
    ``node_labels``.
    """
    ids = set()
    for edges, isolated in raw:
        ids.update(isolated)
        for u, v, _ in edges:
            ids.add(u)
            ids.add(v)
    labels = None
    if num_nodes is not None and all(i < num_nodes for i in ids):
        n = int(num_nodes)
        remap = None
    elif ids == set(range(len(ids))):
        n, remap = len(ids), None
    else:
        labels = tuple(sorted(ids))
        remap = {lab: i for i, lab in enumerate(labels)}
        n = len(labels)
    snaps = []
    for k, (edges, isolated) in enumerate(raw):
        if remap is not None:
            edges = [(remap[u], remap[v], w) for u, v, w in edges]
            isolated = {remap[i] for i in isolated}
        snaps.append(GraphSnapshot.from_edges(k, n, edges, isolated))
    return DynamicGraph(tuple(snaps), n, name, interval_minutes, labels)


def load_event(manifest_path) -> DynamicGraph:
    """Load an event from its manifest (or the directory containing it)."""
    man, root = read_manifest(manifest_path)
    raw = []
    for rel in man.snapshots:
        p = root / rel
        if not p.exists():
            raise DataError(f"snapshot file {p} listed in manifest does not exist")
        raw.append(read_snapshot_file(p))
    return assemble(raw, man.num_nodes, man.name, man.interval_minutes)


def load_edge_files(paths: Iterable, name: str = "event", interval_minutes: float = 5.0) -> DynamicGraph:
    """Adapter for manifest-less dumps: one edge file per snapshot, in the given order."""
    raw = [read_snapshot_file(p) for p in paths]
    if not raw:
        raise DataError("no snapshot files given")
    return assemble(raw, None, name, interval_minutes)


# ---------------------------------------------------------------------------
# writing
# ---------------------------------------------------------------------------


def save_event(dyn: DynamicGraph, directory, force: bool = False, compress: bool = False) -> Path:
    directory = Path(directory)
    manifest = directory / MANIFEST_NAME
    if manifest.exists() and not force:
        raise DataError(f"{manifest} already exists (pass force=True to overwrite)")
    try:
        directory.mkdir(parents=True, exist_ok=True)
        names = []
        for snap in dyn.snapshots:
            fname = f"snapshot_{snap.step_index:03d}.tsv" + (".gz" if compress else "")
            lines = [f"# step {snap.step_index}: {snap.num_edges} edges\n"]
            lines += [f"{u}\t{v}\t{w!r}\n" for u, v, w in snap.edges]
            touched = {x for u, v, _ in snap.edges for x in (u, v)}
            lines += [f"{x}\n" for x in sorted(snap.active_nodes - touched)]
            data = "".join(lines).encode()
            if compress:
                # mtime pinned so reruns produce identical bytes
                (directory / fname).write_bytes(gzip.compress(data, mtime=0))
            else:
                (directory / fname).write_bytes(data)
            names.append(fname)
        doc = {"format": EVENT_FORMAT, "name": dyn.name, "num_nodes": dyn.num_nodes,
               "interval_minutes": dyn.interval_minutes, "snapshots": names}
        manifest.write_text(json.dumps(doc, indent=2) + "\n")
    except OSError as exc:
        raise DataError(f"cannot write event to {directory}: {exc}") from exc
    return manifest


# ---------------------------------------------------------------------------
# synthetic events
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    """Offices of viewers joined by fast intra-office and slow inter-office links.

    ``arrivals[k]`` is the fraction of all viewers that joins at step ``k``.
    Rewiring decays linearly from ``rewire_start`` (step 1) to ``rewire_end``
    (last step) unless ``rewire_schedule`` gives one rate per step 1..K-1.
    ``cap`` limits connections per viewer (0 = uncapped).
    """

    offices: int = 7
    viewers_per_office: int = 30
    intra_mean: float = 1000.0
    intra_std: float = 100.0
    inter_mean: float = 100.0
    inter_std: float = 20.0
    arrivals: tuple[float, ...] = (0.6, 0.2, 0.1, 0.05, 0.05)
    rewire_start: float = 0.6
    rewire_end: float = 0.07
    rewire_schedule: tuple[float, ...] | None = None
    cap: int = 7
    links_per_node: int = 3
    intra_prob: float = 0.8
    K: int = 12
    seed: int = 0
    interval_minutes: float = 5.0
    name: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(self, "arrivals", tuple(float(a) for a in self.arrivals))
        if self.rewire_schedule is not None:
            object.__setattr__(self, "rewire_schedule", tuple(float(r) for r in self.rewire_schedule))
        self.validate()

    @property
    def num_nodes(self) -> int:
        return self.offices * self.viewers_per_office

    def validate(self):
        if self.offices < 1 or self.viewers_per_office < 1:
            raise ConfigError("need at least one office with one viewer")
        if self.K < 1:
            raise ConfigError("K must be at least 1")
        if min(self.intra_mean, self.inter_mean) <= 0 or min(self.intra_std, self.inter_std) < 0:
            raise ConfigError("weight means must be positive and deviations non-negative")
        if any(a < 0 for a in self.arrivals) or sum(self.arrivals) > 1 + 1e-12:
            raise ConfigError("arrival fractions must be non-negative and sum to at most 1")
        rates = [self.rewire_start, self.rewire_end, *(self.rewire_schedule or ())]
        if any(not 0 <= r <= 1 for r in rates):
            raise ConfigError("rewiring rates must lie in [0, 1]")
        if self.rewire_schedule is not None and len(self.rewire_schedule) != max(self.K - 1, 0):
            raise ConfigError(f"rewire_schedule needs {self.K - 1} entries")
        if self.cap < 0:
            raise ConfigError("connection cap must be >= 0 (0 = uncapped)")
        if self.links_per_node < 1 and sum(self.arrivals) > 0:
            raise ConfigError("links_per_node must be at least 1 when viewers arrive")
        if not 0 <= self.intra_prob <= 1:
            raise ConfigError("intra_prob must lie in [0, 1]")

    def rewire_rate(self, k: int) -> float:
        if k < 1:
            return 0.0
        if self.rewire_schedule is not None:
            return self.rewire_schedule[k - 1]
        if self.K <= 2:
            return self.rewire_start
        return self.rewire_start + (self.rewire_end - self.rewire_start) * (k - 1) / (self.K - 2)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synthetic-event keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


class _Builder:
    def __init__(self, cfg: SynthConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.office = np.arange(cfg.num_nodes) // cfg.viewers_per_office
        self.nbrs: dict[int, set[int]] = {}
        self.weights: dict[tuple[int, int], float] = {}
        self.edges: set[tuple[int, int]] = set()

    def weight(self, pair) -> float:
        # a pair keeps one capacity for the whole event
        if pair not in self.weights:
            intra = self.office[pair[0]] == self.office[pair[1]]
            mean, std = ((self.cfg.intra_mean, self.cfg.intra_std) if intra
                         else (self.cfg.inter_mean, self.cfg.inter_std))
            w = self.rng.normal(mean, std)
            while w <= 0:
                w = self.rng.normal(mean, std)
            self.weights[pair] = float(w)
        return self.weights[pair]

    def full(self, x: int) -> bool:
        return self.cfg.cap > 0 and len(self.nbrs[x]) >= self.cfg.cap

    def attach(self, u: int, active: list[int], forbidden: set) -> bool:
        if self.full(u):
            return False
        cands = [x for x in active if x != u and x not in self.nbrs[u] and not self.full(x)
                 and canonical_pair(u, x) not in forbidden]
        if not cands:
            return False
        same = [x for x in cands if self.office[x] == self.office[u]]
        other = [x for x in cands if self.office[x] != self.office[u]]
        pick_same = self.rng.random() < self.cfg.intra_prob
        pool = (same or other) if pick_same else (other or same)
        x = pool[int(self.rng.integers(len(pool)))]
        self.add(u, x)
        return True

    def add(self, u: int, x: int):
        pair = canonical_pair(u, x)
        self.edges.add(pair)
        self.nbrs[u].add(x)
        self.nbrs[x].add(u)
        self.weight(pair)

    def remove(self, pair):
        self.edges.discard(pair)
        self.nbrs[pair[0]].discard(pair[1])
        self.nbrs[pair[1]].discard(pair[0])


def generate_event(cfg: SynthConfig) -> DynamicGraph:
    """Simulate a streaming event; a pure function of ``cfg``."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.num_nodes
    b = _Builder(cfg, rng)
    order = rng.permutation(n)
    bounds = np.round(np.cumsum([0.0, *cfg.arrivals]) * n).astype(int)
    arriving = [order[bounds[k]:bounds[k + 1]].tolist() if k < len(cfg.arrivals) else []
                for k in range(cfg.K)]

    active: list[int] = []
    snaps = []
    for k in range(cfg.K):
        prev = set(b.edges)
        if k > 0 and prev:
            m = int(round(cfg.rewire_rate(k) * len(prev)))
            ordered = sorted(prev)
            drop = [ordered[i] for i in sorted(rng.choice(len(ordered), size=m, replace=False))]
            for pair in drop:
                b.remove(pair)
            for pair in drop:
                x = pair[int(rng.integers(2))]
                if not b.attach(x, active, prev):
                    b.attach(pair[1] if x == pair[0] else pair[0], active, prev)
        for u in arriving[k]:
            b.nbrs[u] = set()
            active.append(u)
        for u in arriving[k]:
            for _ in range(cfg.links_per_node):
                b.attach(u, active, prev)
        edges = [(u, v, b.weights[(u, v)]) for u, v in sorted(b.edges)]
        snaps.append(GraphSnapshot.from_edges(k, n, edges, active))
    return DynamicGraph(tuple(snaps), n, cfg.name, cfg.interval_minutes)


def office_of(cfg: SynthConfig, node: int) -> int:
    return node // cfg.viewers_per_office


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------


@dataclass
class EventStats:
    evolution: EvolutionStats | None
    rows: list[dict] = field(default_factory=list)
    degree_histogram: dict[int, int] = field(default_factory=dict)
    weight_quantiles: dict[str, float] = field(default_factory=dict)

    @property
    def K(self) -> int:
        return len(self.rows)

    def write_csv(self, path) -> Path:
        path = Path(path)
        cols = ["step", "nodes", "edges", "edge_evolution", "node_evolution",
                "mean_degree", "max_degree", "weight_q25", "weight_median", "weight_q75"]
        with path.open("w", newline="") as fh:
            wr = csv.DictWriter(fh, cols, lineterminator="\n")
            wr.writeheader()
            for row in self.rows:
                wr.writerow({c: _fmt(row[c]) for c in cols})
        return path


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6g}"
    return x


def event_stats(dyn: DynamicGraph) -> EventStats:
    evo = evolution_stats(dyn.snapshots) if dyn.K >= 2 else None
    rows = []
    hist: Counter = Counter()
    all_w = []
    for s in dyn.snapshots:
        deg = s.degrees()[s.active_mask] if s.active_nodes else np.zeros(0)
        hist.update(deg.tolist())
        w = np.array([e[2] for e in s.edges])
        all_w.append(w)
        q = np.quantile(w, [0.25, 0.5, 0.75]) if w.size else [None] * 3
        k = s.step_index
        rows.append({
            "step": k,
            "nodes": len(s.active_nodes),
            "edges": s.num_edges,
            "edge_evolution": evo.edge_evolution[k - 1] if evo and k > 0 else None,
            "node_evolution": evo.node_evolution[k - 1] if evo and k > 0 else None,
            "mean_degree": float(deg.mean()) if deg.size else 0.0,
            "max_degree": int(deg.max()) if deg.size else 0,
            "weight_q25": None if q[0] is None else float(q[0]),
            "weight_median": None if q[1] is None else float(q[1]),
            "weight_q75": None if q[2] is None else float(q[2]),
        })
    w = np.concatenate(all_w) if all_w else np.zeros(0)
    quant = {}
    if w.size:
        for name, p in [("min", 0.0), ("q25", 0.25), ("median", 0.5), ("q75", 0.75), ("max", 1.0)]:
            quant[name] = float(np.quantile(w, p))
    return EventStats(evo, rows, dict(sorted(hist.items())), quant)
