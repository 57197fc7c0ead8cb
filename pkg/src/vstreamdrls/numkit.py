"""Minimal numeric kernel.

Dense matrices are plain ``float64`` numpy arrays. Sparse matrices use a small
compressed-row container with its own product kernel so that the propagation
``A_hat @ Z`` never densifies the adjacency. Gradients are dictionaries that
map a parameter name to an array of the parameter's shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ContractError, DimensionError, NumericError

Matrix = np.ndarray
Params = dict[str, np.ndarray]
Gradients = dict[str, np.ndarray]


def as_matrix(x) -> Matrix:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {m.shape}")
    return m


def check_finite(x: np.ndarray, what: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite entries in {what}")
    return x


# ---------------------------------------------------------------------------
# sparse storage
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SparseMatrix:
    """Compressed sparse row matrix with sorted, unique column indices."""

    rows: int
    cols: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if indptr.shape != (self.rows + 1,) or indptr[0] != 0:
            raise ContractError("row pointer must have rows+1 entries starting at 0")
        if np.any(np.diff(indptr) < 0):
            raise ContractError("row pointer must be non-decreasing")
        if data.shape != (indptr[-1],) or indices.shape != data.shape:
            raise ContractError("value array length must equal the last row pointer")
        if indices.size and (indices.min() < 0 or indices.max() >= self.cols):
            raise ContractError("column index out of range")
        if indices.size > 1:
            r = np.repeat(np.arange(self.rows), np.diff(indptr))
            if np.any((r[1:] == r[:-1]) & (np.diff(indices) <= 0)):
                raise ContractError("column indices must be strictly increasing within a row")
        check_finite(data, "sparse values")
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.rows, dtype=np.int64), np.diff(self.indptr))

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def diagonal(self) -> np.ndarray:
        out = np.zeros(min(self.rows, self.cols))
        r = self.row_ids()
        on = r == self.indices
        out[r[on]] = self.data[on]
        return out

    def transpose(self) -> "SparseMatrix":
        return from_coo(self.cols, self.rows, self.indices, self.row_ids(), self.data)

    def to_dense(self) -> Matrix:
        return densify(self)

    @classmethod
    def from_dense(cls, m) -> "SparseMatrix":
        m = as_matrix(m)
        r, c = np.nonzero(m)
        return from_coo(m.shape[0], m.shape[1], r, c, m[r, c])

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        idx = np.arange(n)
        return cls(n, n, np.arange(n + 1), idx, np.ones(n))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "SparseMatrix":
        return cls(rows, cols, np.zeros(rows + 1), np.zeros(0), np.zeros(0))


def from_coo(rows: int, cols: int, r, c, v, sum_duplicates: bool = True) -> SparseMatrix:
    """Build a CSR matrix from coordinate triplets; duplicates are summed."""
    r = np.asarray(r, dtype=np.int64)
    c = np.asarray(c, dtype=np.int64)
    v = np.asarray(v, dtype=np.float64)
    order = np.lexsort((c, r))
    r, c, v = r[order], c[order], v[order]
    if r.size:
        key_change = np.ones(r.size, dtype=bool)
        key_change[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
        if not key_change.all():
            if not sum_duplicates:
                raise ContractError("duplicate coordinates")
            starts = np.flatnonzero(key_change)
            v = np.add.reduceat(v, starts)
            r, c = r[starts], c[starts]
    indptr = np.zeros(rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(r, minlength=rows), out=indptr[1:])
    return SparseMatrix(rows, cols, indptr, c, v)


def densify(s: SparseMatrix) -> Matrix:
    out = np.zeros((s.rows, s.cols))
    out[s.row_ids(), s.indices] = s.data
    return out


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------


def matmul(a: Matrix, b: Matrix) -> Matrix:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def segment_sum(values: np.ndarray, segments: np.ndarray, n: int) -> np.ndarray:
    """Sum rows of ``values`` into ``n`` buckets, in input order."""
    out = np.zeros((n,) + values.shape[1:])
    np.add.at(out, segments, values)
    return out


def spmm(s: SparseMatrix, d: Matrix) -> Matrix:
    """Sparse-times-dense product, accumulated row by row in storage order."""
    d = as_matrix(d)
    if s.cols != d.shape[0]:
        raise DimensionError(f"cannot multiply sparse {s.shape} by {d.shape}")
    out = np.zeros((s.rows, d.shape[1]))
    if s.nnz == 0:
        return out
    contrib = s.data[:, None] * d[s.indices]
    nonempty = np.flatnonzero(np.diff(s.indptr))
    out[nonempty] = np.add.reduceat(contrib, s.indptr[nonempty], axis=0)
    return out


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


def relu(x):
    return np.maximum(x, 0.0)


def relu_grad(x):
    return (np.asarray(x) > 0).astype(np.float64)


def elu(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, 1.0, np.exp(np.minimum(x, 0.0)))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softmax(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    e = np.exp(v - v.max())
    return e / e.sum()


def segment_softmax(x: np.ndarray, segments: np.ndarray, n: int) -> np.ndarray:
    """Softmax of ``x`` taken independently within each segment id."""
    seg_max = np.full(n, -np.inf)
    np.maximum.at(seg_max, segments, x)
    e = np.exp(x - seg_max[segments])
    denom = segment_sum(e, segments, n)
    return e / denom[segments]


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def glorot_init(rows: int, cols: int, rng_seed) -> Matrix:
    """Uniform Glorot draw on ``[-b, b]`` with ``b = sqrt(6 / (rows + cols))``.

    ``rng_seed`` may be an int, a sequence of ints, or a ``numpy`` Generator.
    """
    if rows < 1 or cols < 1:
        raise DimensionError(f"glorot_init needs positive dimensions, got ({rows}, {cols})")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
              state: AdamState, only: set[str] | None = None) -> tuple[Params, AdamState]:
    """One bias-corrected Adam update. Returns new arrays; inputs are untouched.

    ``only`` restricts the update to a subset of parameter names; the others are
    copied through unchanged.
    """
    names = list(params) if only is None else [n for n in params if n in only]
    for name in names:
        if name not in grads:
            raise ContractError(f"missing gradient for parameter {name!r}")
        if grads[name].shape != params[name].shape:
            raise DimensionError(
                f"gradient for {name!r} has shape {grads[name].shape}, parameter {params[name].shape}")

    t = state.step + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    new_m = dict(state.m)
    new_v = dict(state.v)
    out = {k: v for k, v in params.items()}
    for name in names:
        g = grads[name]
        m = new_m.get(name, np.zeros_like(g))
        v = new_v.get(name, np.zeros_like(g))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        new_m[name], new_v[name] = m, v
        out[name] = params[name] - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    new_state = AdamState(state.lr, state.beta1, state.beta2, state.eps, t, new_m, new_v)
    return out, new_state


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str | None
    worst_index: tuple | None
    checked: int
    per_param: dict[str, float]

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps near-zero entries from
    dominating through round-off alone."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def finite_diff_check(loss_and_grad: Callable[[Params], tuple[float, Gradients]],
                      params: Mapping[str, np.ndarray], epsilon: float = 1e-5,
                      tolerance: float = 1e-4, max_entries: int = 200,
                      seed: int = 0, floor: float = 1e-6) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    Parameters with more than ``max_entries`` entries are checked on a seeded
    random subsample of that size. The relative-error floor is
    ``floor * max(1, |loss|)``: round-off in the difference quotient grows
    with the loss value, so entries below that size are judged absolutely.
    """
    if epsilon <= 0:
        raise ContractError("epsilon must be positive")
    base = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    loss0, grads = loss_and_grad(base)
    if not np.isfinite(loss0):
        raise NumericError("loss is not finite at the base point")
    rng = np.random.default_rng(seed)
    denom_floor = floor * max(1.0, abs(float(loss0)))
    worst, worst_p, worst_i, checked = 0.0, None, None, 0
    per_param: dict[str, float] = {}
    for name, value in base.items():
        flat_idx = np.arange(value.size)
        if value.size > max_entries:
            flat_idx = np.sort(rng.choice(value.size, size=max_entries, replace=False))
        p_worst = 0.0
        for fi in flat_idx:
            idx = np.unravel_index(fi, value.shape)
            orig = value[idx]
            value[idx] = orig + epsilon
            lp, _ = loss_and_grad(base)
            value[idx] = orig - epsilon
            lm, _ = loss_and_grad(base)
            value[idx] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise NumericError(f"non-finite loss while perturbing {name}{idx}")
            numeric = (lp - lm) / (2 * epsilon)
            err = relative_error(float(grads[name][idx]), numeric, denom_floor)
            checked += 1
            p_worst = max(p_worst, err)
            if err > worst:
                worst, worst_p, worst_i = err, name, tuple(int(i) for i in idx)
        per_param[name] = p_worst
    return GradCheckReport(worst, worst_p, worst_i, checked, per_param)
