"""Similarity and distance kernels on prediction vectors.

All kernels act on 1-D probability vectors. The batched helpers take a single
vector ``x`` and a matrix ``Y`` whose rows are compared against ``x``; they are
what the solver fallback and the attack feature extractor use.
"""

from __future__ import annotations

import csv
import enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

# Below these norms a vector is treated as constant (correlation) or zero (cosine).
# The centered-norm cut is loose on purpose: the correlation gradient's rounding
# error grows like 1e-16 / ||x - mean(x)||**2.
CORR_EPS = 1e-6
COS_EPS = 1e-12


class MetricKind(str, enum.Enum):
    COMBINED = "combined"
    CORRELATION = "correlation"
    COSINE = "cosine"
    EUCLIDEAN = "euclidean"
    CHEBYSHEV = "chebyshev"
    MANHATTAN = "manhattan"

    @property
    def is_distance(self) -> bool:
        return self in (MetricKind.EUCLIDEAN, MetricKind.CHEBYSHEV, MetricKind.MANHATTAN)

    @property
    def code(self) -> int:
        """Integer code used by the compiled kernels."""
        return _KIND_CODES[self]


_KIND_CODES = {MetricKind.COMBINED: 0, MetricKind.CORRELATION: 1, MetricKind.COSINE: 2}

# Column order of the attack feature vector.
FEATURE_METRICS = (
    MetricKind.EUCLIDEAN,
    MetricKind.CHEBYSHEV,
    MetricKind.MANHATTAN,
    MetricKind.COSINE,
    MetricKind.CORRELATION,
    MetricKind.COMBINED,
)


class UnsupportedMetricError(ValueError):
    pass


class PredictionError(ValueError):
    """Raised when a prediction matrix violates the probability invariants."""


def _as_kind(kind) -> MetricKind:
    return kind if isinstance(kind, MetricKind) else MetricKind(kind)


def cosine(x: np.ndarray, y: np.ndarray) -> float:
    nx = np.sqrt(np.dot(x, x))
    ny = np.sqrt(np.dot(y, y))
    if nx < COS_EPS or ny < COS_EPS:
        return 0.0
    return float(np.dot(x, y) / (nx * ny))


def correlation(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    nx = np.sqrt(np.dot(xc, xc))
    ny = np.sqrt(np.dot(yc, yc))
    if nx < CORR_EPS or ny < CORR_EPS:
        return 0.0
    return float(np.dot(xc, yc) / (nx * ny))


def similarity(x, y, kind=MetricKind.COMBINED) -> float:
    """Similarity (or distance, for the distance kinds) between two vectors."""
    kind = _as_kind(kind)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError(f"expected two equal-length vectors of size >= 2, got {x.shape} and {y.shape}")
    if kind is MetricKind.COMBINED:
        return correlation(x, y) + cosine(x, y)
    if kind is MetricKind.CORRELATION:
        return correlation(x, y)
    if kind is MetricKind.COSINE:
        return cosine(x, y)
    diff = np.abs(x - y)
    if kind is MetricKind.EUCLIDEAN:
        return float(np.sqrt(np.dot(diff, diff)))
    if kind is MetricKind.CHEBYSHEV:
        return float(diff.max())
    return float(diff.sum())


def _cosine_grad(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    nx = np.sqrt(np.dot(x, x))
    ny = np.sqrt(np.dot(y, y))
    if nx < COS_EPS or ny < COS_EPS:
        return np.zeros_like(x)
    c = np.dot(x, y) / (nx * ny)
    return y / (nx * ny) - c * x / (nx * nx)


def _correlation_grad(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # Centering is a symmetric projection and both terms below are already centered.
    xc = x - x.mean()
    yc = y - y.mean()
    nx = np.sqrt(np.dot(xc, xc))
    ny = np.sqrt(np.dot(yc, yc))
    if nx < CORR_EPS or ny < CORR_EPS:
        return np.zeros_like(x)
    r = np.dot(xc, yc) / (nx * ny)
    return yc / (nx * ny) - r * xc / (nx * nx)


def similarity_gradient(x, y, s, kind=MetricKind.COMBINED) -> np.ndarray:
    """Gradient of ``similarity(x + s, y, kind)`` with respect to ``s``."""
    kind = _as_kind(kind)
    if kind.is_distance:
        raise UnsupportedMetricError(f"no gradient for distance metric {kind.value!r}")
    z = np.asarray(x, dtype=float) + np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    if kind is MetricKind.COSINE:
        return _cosine_grad(z, y)
    if kind is MetricKind.CORRELATION:
        return _correlation_grad(z, y)
    return _cosine_grad(z, y) + _correlation_grad(z, y)


# -- batched forms ---------------------------------------------------------

def batch_similarity(x: np.ndarray, Y: np.ndarray, kind=MetricKind.COMBINED) -> np.ndarray:
    """Similarities of ``x`` against every row of ``Y`` (gradient-capable kinds only)."""
    kind = _as_kind(kind)
    sims, _ = batch_similarity_and_grad(x, Y, kind, with_grad=False)
    return sims


def batch_similarity_and_grad(x: np.ndarray, Y: np.ndarray, kind=MetricKind.COMBINED, with_grad=True):
    """Row-wise similarities of ``x`` vs ``Y`` and the summed gradient w.r.t. ``x``.

    Returns ``(sims, grad_sum)`` where ``grad_sum`` is the sum over rows of the
    per-row gradients (``None`` when ``with_grad`` is false).
    """
    kind = _as_kind(kind)
    if kind.is_distance:
        raise UnsupportedMetricError(f"no gradient for distance metric {kind.value!r}")
    m = Y.shape[0]
    sims = np.zeros(m)
    grad = np.zeros_like(x) if with_grad else None
    if m == 0:
        return sims, grad
    if kind in (MetricKind.COMBINED, MetricKind.COSINE):
        nx = np.sqrt(np.dot(x, x))
        ny = np.sqrt(np.einsum("ij,ij->i", Y, Y))
        ok = (ny >= COS_EPS) & (nx >= COS_EPS)
        if ok.any():
            denom = nx * ny[ok]
            c = (Y[ok] @ x) / denom
            sims[ok] += c
            if with_grad:
                grad += (Y[ok] / denom[:, None]).sum(axis=0) - c.sum() * x / (nx * nx)
    if kind in (MetricKind.COMBINED, MetricKind.CORRELATION):
        xc = x - x.mean()
        Yc = Y - Y.mean(axis=1, keepdims=True)
        nx = np.sqrt(np.dot(xc, xc))
        ny = np.sqrt(np.einsum("ij,ij->i", Yc, Yc))
        ok = (ny >= CORR_EPS) & (nx >= CORR_EPS)
        if ok.any():
            denom = nx * ny[ok]
            r = (Yc[ok] @ xc) / denom
            sims[ok] += r
            if with_grad:
                grad += (Yc[ok] / denom[:, None]).sum(axis=0) - r.sum() * xc / (nx * nx)
    return sims, grad


def pair_similarity(preds: np.ndarray, pairs: np.ndarray, kind=MetricKind.COMBINED) -> np.ndarray:
    """Vectorised similarity (or distance) for each row pair ``(i, j)`` in ``pairs``."""
    kind = _as_kind(kind)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    X = preds[pairs[:, 0]]
    Y = preds[pairs[:, 1]]
    if kind.is_distance:
        diff = np.abs(X - Y)
        if kind is MetricKind.EUCLIDEAN:
            return np.sqrt(np.einsum("ij,ij->i", diff, diff))
        if kind is MetricKind.CHEBYSHEV:
            return diff.max(axis=1)
        return diff.sum(axis=1)
    out = np.zeros(len(pairs))
    if kind in (MetricKind.COMBINED, MetricKind.COSINE):
        out += _rowwise_cos(X, Y)
    if kind in (MetricKind.COMBINED, MetricKind.CORRELATION):
        out += _rowwise_cos(X - X.mean(axis=1, keepdims=True), Y - Y.mean(axis=1, keepdims=True), CORR_EPS)
    return out


def _rowwise_cos(X, Y, eps=COS_EPS):
    nx = np.sqrt(np.einsum("ij,ij->i", X, X))
    ny = np.sqrt(np.einsum("ij,ij->i", Y, Y))
    ok = (nx >= eps) & (ny >= eps)
    out = np.zeros(len(X))
    out[ok] = np.einsum("ij,ij->i", X[ok], Y[ok]) / (nx[ok] * ny[ok])
    return out


def mean_pair_similarity(preds: np.ndarray, pairs, kind=MetricKind.COMBINED) -> float:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        raise ValueError("mean_pair_similarity needs at least one pair")
    return float(pair_similarity(preds, pairs, kind).mean())


# -- prediction matrices ---------------------------------------------------

def validate_predictions(preds, atol: float = 1e-6) -> np.ndarray:
    """Check rows are probability vectors; returns the matrix as float64."""
    P = np.asarray(preds, dtype=float)
    if P.ndim != 2 or P.shape[1] < 2:
        raise PredictionError(f"prediction matrix must be 2-D with >= 2 classes, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise PredictionError("prediction matrix contains non-finite entries")
    bad = np.flatnonzero((P < -atol).any(axis=1) | (P > 1 + atol).any(axis=1))
    if bad.size:
        raise PredictionError(f"entries outside [0, 1] in rows {bad[:10].tolist()}")
    sums = P.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > atol)
    if bad.size:
        raise PredictionError(f"rows do not sum to 1: {bad[:10].tolist()}")
    return P


def tied_argmax_rows(preds: np.ndarray, rows: Iterable[int] | None = None, tol: float = 1e-12) -> list[int]:
    """Rows whose largest entry is not strictly larger than the runner-up."""
    P = np.asarray(preds)
    idx = np.arange(len(P)) if rows is None else np.asarray(list(rows), dtype=np.int64)
    if idx.size == 0:
        return []
    top2 = np.sort(P[idx], axis=1)[:, -2:]
    return idx[(top2[:, 1] - top2[:, 0]) <= tol].tolist()


def fmt(x: float) -> str:
    """Shortest round-tripping float text; used by every writer for byte-stable output."""
    x = float(x) + 0.0  # folds -0.0
    return repr(x)


def save_predictions(path, preds: np.ndarray, ids: Sequence[int] | None = None) -> None:
    P = np.asarray(preds, dtype=float)
    ids = range(len(P)) if ids is None else ids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + [f"p{a}" for a in range(P.shape[1])])
        for i, row in zip(ids, P):
            w.writerow([int(i)] + [fmt(v) for v in row])


def load_predictions(path, num_nodes: int | None = None, atol: float = 1e-6) -> np.ndarray:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise PredictionError(f"{path}: empty prediction file")
    header = rows[0]
    if not header or header[0] != "id" or any(h != f"p{a}" for a, h in enumerate(header[1:])):
        raise PredictionError(f"{path}: bad header {header!r}")
    A = len(header) - 1
    ids, vals = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != A + 1:
            raise PredictionError(f"{path}:{lineno}: expected {A + 1} fields, got {len(row)}")
        try:
            ids.append(int(row[0]))
            vals.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise PredictionError(f"{path}:{lineno}: {exc}") from None
    n = num_nodes if num_nodes is not None else len(ids)
    if sorted(ids) != list(range(n)):
        raise PredictionError(f"{path}: ids must cover 0..{n - 1} exactly once")
    P = np.empty((n, A))
    P[np.asarray(ids)] = np.asarray(vals)
    return validate_predictions(P, atol=atol)
