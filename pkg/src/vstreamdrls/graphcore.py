"""Snapshot graphs over a global node universe, adjacency normalization and
evolution metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, DataError, UndefinedMetricError
from .numkit import SparseMatrix, from_coo


def canonical_pair(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True, eq=False)
class GraphSnapshot:
    """One weighted undirected snapshot.

    ``edges`` holds canonical ``(u, v, weight)`` triples with ``u < v``, sorted.
    ``active_nodes`` defaults to the set of edge endpoints; extra isolated
    active nodes may be listed explicitly.
    """

    step_index: int
    num_nodes: int
    edges: tuple[tuple[int, int, float], ...]
    active_nodes: frozenset[int]

    @classmethod
    def from_edges(cls, step_index: int, num_nodes: int,
                   edges: Iterable[tuple[int, int, float]],
                   active_nodes: Iterable[int] | None = None) -> "GraphSnapshot":
        seen: dict[tuple[int, int], float] = {}
        for u, v, w in edges:
            u, v, w = int(u), int(v), float(w)
            if u == v:
                raise DataError(f"self-loop on node {u} in snapshot {step_index}")
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise DataError(f"edge ({u}, {v}) outside node universe of size {num_nodes}")
            if not np.isfinite(w) or w <= 0:
                raise DataError(f"edge ({u}, {v}) has non-positive weight {w}")
            key = canonical_pair(u, v)
            if key in seen and seen[key] != w:
                raise DataError(f"edge {key} listed twice with weights {seen[key]} and {w}")
            seen[key] = w
        canon = tuple(sorted((u, v, w) for (u, v), w in seen.items()))
        active = {x for u, v, _ in canon for x in (u, v)}
        if active_nodes is not None:
            extra = {int(x) for x in active_nodes}
            if any(not 0 <= x < num_nodes for x in extra):
                raise DataError("active node outside node universe")
            active |= extra
        return cls(step_index, num_nodes, canon, frozenset(active))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset((u, v) for u, v, _ in self.edges)

    @cached_property
    def weight_map(self) -> dict[tuple[int, int], float]:
        return {(u, v): w for u, v, w in self.edges}

    @cached_property
    def adjacency(self) -> SparseMatrix:
        """Symmetric weighted adjacency over the full universe, zero diagonal."""
        if not self.edges:
            return SparseMatrix.zeros(self.num_nodes, self.num_nodes)
        e = np.array([(u, v) for u, v, _ in self.edges], dtype=np.int64)
        w = np.array([w for _, _, w in self.edges])
        r = np.concatenate([e[:, 0], e[:, 1]])
        c = np.concatenate([e[:, 1], e[:, 0]])
        return from_coo(self.num_nodes, self.num_nodes, r, c, np.concatenate([w, w]),
                        sum_duplicates=False)

    @cached_property
    def active_mask(self) -> np.ndarray:
        m = np.zeros(self.num_nodes, dtype=bool)
        m[list(self.active_nodes)] = True
        return m

    @cached_property
    def normalized(self) -> SparseMatrix:
        return normalize_adjacency(self.adjacency, self.active_nodes)

    def weight(self, u: int, v: int) -> float:
        return self.weight_map.get(canonical_pair(u, v), 0.0)

    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)


@dataclass(frozen=True, eq=False)
class DynamicGraph:
    snapshots: tuple[GraphSnapshot, ...]
    num_nodes: int
    name: str = "event"
    interval_minutes: float = 5.0
    node_labels: tuple[int, ...] | None = None

    def __post_init__(self):
        if not self.snapshots:
            raise ContractError("a dynamic graph needs at least one snapshot")
        for i, s in enumerate(self.snapshots):
            if s.step_index != i:
                raise ContractError(f"snapshot {i} carries step index {s.step_index}")
            if s.num_nodes != self.num_nodes:
                raise ContractError(f"snapshot {i} has universe {s.num_nodes}, expected {self.num_nodes}")

    def __len__(self) -> int:
        return len(self.snapshots)

    def __getitem__(self, k: int) -> GraphSnapshot:
        return self.snapshots[k]

    @property
    def K(self) -> int:
        return len(self.snapshots)

    def window(self, k: int, w: int) -> list[GraphSnapshot]:
        """Snapshots ``k-w+1 .. k``, clipped at step 0."""
        if not 0 <= k < self.K:
            raise ContractError(f"step {k} outside 0..{self.K - 1}")
        if w < 1:
            raise ContractError("window must be at least 1")
        return list(self.snapshots[max(0, k - w + 1):k + 1])


@dataclass
class EvolutionStats:
    edge_evolution: list[float] = field(default_factory=list)
    node_evolution: list[float] = field(default_factory=list)


def normalize_adjacency(a: SparseMatrix, active_nodes: Iterable[int] | None = None) -> SparseMatrix:
    """Return ``D^-1/2 (A + I) D^-1/2`` with ``D`` the row sums of ``A + I``.

    Inactive nodes have no incident edges and end up with a unit diagonal.
    """
    if a.rows != a.cols:
        raise ContractError(f"adjacency must be square, got {a.shape}")
    if np.any(a.data < 0):
        raise ContractError("adjacency has negative weights")
    r = a.row_ids()
    if np.any(r == a.indices):
        raise ContractError("adjacency must have a zero diagonal")
    t = a.transpose()
    if not (np.array_equal(t.indptr, a.indptr) and np.array_equal(t.indices, a.indices)
            and np.allclose(t.data, a.data, rtol=0, atol=1e-12)):
        raise ContractError("adjacency must be symmetric")
    if active_nodes is not None:
        active = np.zeros(a.rows, dtype=bool)
        active[list(active_nodes)] = True
        if a.nnz and not np.all(active[r] & active[a.indices]):
            raise ContractError("edge incident to an inactive node")
    n = a.rows
    diag = np.arange(n)
    tilde = from_coo(n, n, np.concatenate([r, diag]), np.concatenate([a.indices, diag]),
                     np.concatenate([a.data, np.ones(n)]))
    deg = np.add.reduceat(tilde.data, tilde.indptr[:-1]) if n else np.zeros(0)
    inv_sqrt = 1.0 / np.sqrt(deg)
    rows = tilde.row_ids()
    vals = inv_sqrt[rows] * tilde.data * inv_sqrt[tilde.indices]
    return SparseMatrix(n, n, tilde.indptr, tilde.indices, vals)


def edge_evolution(prev: GraphSnapshot, curr: GraphSnapshot) -> float:
    """Percentage of the current snapshot's edges absent from the previous one."""
    if curr.num_edges == 0:
        raise UndefinedMetricError(f"snapshot {curr.step_index} has no edges")
    kept = len(prev.edge_set & curr.edge_set)
    return (1.0 - kept / curr.num_edges) * 100.0


def node_evolution(prev: GraphSnapshot, curr: GraphSnapshot) -> float:
    if not curr.active_nodes:
        raise UndefinedMetricError(f"snapshot {curr.step_index} has no active nodes")
    kept = len(prev.active_nodes & curr.active_nodes)
    return (1.0 - kept / len(curr.active_nodes)) * 100.0


def evolution_stats(snapshots: Sequence[GraphSnapshot]) -> EvolutionStats:
    stats = EvolutionStats()
    for prev, curr in zip(snapshots[:-1], snapshots[1:]):
        stats.edge_evolution.append(edge_evolution(prev, curr))
        stats.node_evolution.append(node_evolution(prev, curr))
    return stats


def neighborhood(snapshot: GraphSnapshot, v: int) -> list[tuple[int, float]]:
    if not 0 <= v < snapshot.num_nodes:
        raise ContractError(f"node {v} outside universe of size {snapshot.num_nodes}")
    cols, vals = snapshot.adjacency.row(v)
    return [(int(u), float(w)) for u, w in zip(cols, vals) if w > 0]
