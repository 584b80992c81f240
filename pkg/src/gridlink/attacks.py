"""Similarity-based link-stealing attacks and their scoring."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import rankdata

from .graphio import Graph, HopIndex, sample_non_adjacent_pairs
from .simkit import FEATURE_METRICS, MetricKind, fmt, pair_similarity

ATTACK_KINDS = ("attack0", "supervised", "adaptive")


class AttackError(ValueError):
    pass


class DegenerateClustering(AttackError):
    pass


@dataclass(frozen=True)
class PairSample:
    i: int
    j: int
    features: np.ndarray
    label: int


@dataclass
class PairSet:
    """Labelled node pairs with an aligned feature matrix (1 = linked)."""

    pairs: np.ndarray
    labels: np.ndarray
    features: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        for k, (i, j) in enumerate(self.pairs):
            f = self.features[k] if self.features is not None else np.empty(0)
            yield PairSample(int(i), int(j), f, int(self.labels[k]))

    def with_features(self, preds, attributes=None) -> "PairSet":
        return replace(self, features=pair_features(preds, self.pairs, attributes))


def sample_pairs(graph: Graph, num_pos: int, num_neg: int, seed: int) -> PairSet:
    """Balanced seeded sample of linked and unlinked pairs (features left empty)."""
    if graph.num_edges < num_pos:
        raise AttackError(f"graph has {graph.num_edges} edges, cannot sample {num_pos} linked pairs")
    rng = np.random.default_rng(seed)
    pos = graph.edges[np.sort(rng.choice(graph.num_edges, size=num_pos, replace=False))]
    neg = sample_non_adjacent_pairs(graph, num_neg, int(rng.integers(2**31)))
    if len(neg) < num_neg:
        raise AttackError(f"only {len(neg)} unlinked pairs available, {num_neg} requested")
    pairs = np.concatenate([pos, neg]).astype(np.int64)
    labels = np.concatenate([np.ones(len(pos), dtype=np.int64), np.zeros(len(neg), dtype=np.int64)])
    return PairSet(pairs, labels)


def pair_features(preds: np.ndarray, pairs: np.ndarray, attributes: np.ndarray | None = None) -> np.ndarray:
    """Six metrics on the posterior pair, plus the same six on attributes if given."""
    cols = [pair_similarity(preds, pairs, k) for k in FEATURE_METRICS]
    if attributes is not None:
        cols += [pair_similarity(attributes, pairs, k) for k in FEATURE_METRICS]
    return np.column_stack(cols)


def build_pair_dataset(graph: Graph, preds: np.ndarray, data, num_pos: int, num_neg: int, seed: int,
                       with_attributes: bool = False) -> PairSet:
    ps = sample_pairs(graph, num_pos, num_neg, seed)
    attrs = data.attributes if with_attributes else None
    return ps.with_features(preds, attrs)


# -- metrics --------------------------------------------------------------

def roc_auc(scores, truths) -> float | None:
    """Rank-based AUC (Mann-Whitney), ties count one half; ``None`` for one-class input."""
    y = np.asarray(truths).astype(bool)
    npos = int(y.sum())
    nneg = len(y) - npos
    if npos == 0 or nneg == 0:
        return None
    r = rankdata(np.asarray(scores, dtype=float))
    return float((r[y].sum() - npos * (npos + 1) / 2) / (npos * nneg))


def binary_metrics(pred, truth) -> tuple[float, float, float]:
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    tp = int((pred & truth).sum())
    acc = float((pred == truth).mean())
    precision = tp / int(pred.sum()) if pred.any() else 0.0
    recall = tp / int(truth.sum()) if truth.any() else 0.0
    return acc, precision, recall


@dataclass
class AttackReport:
    attack_kind: str
    scores: np.ndarray
    truths: np.ndarray
    predictions: np.ndarray | None
    accuracy: float | None
    precision: float | None
    recall: float | None
    auc: float | None
    threshold: float | None
    notes: list = field(default_factory=list)

    @property
    def n_pairs(self) -> int:
        return len(self.scores)

    def summary(self) -> dict:
        return {
            "attack_kind": self.attack_kind,
            "n_pairs": self.n_pairs,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "auc": self.auc,
            "threshold": self.threshold,
        }

    def write_json(self, path) -> None:
        out = {k: (float(fmt(v)) if isinstance(v, float) else v) for k, v in self.summary().items()}
        if self.notes:
            out["notes"] = list(self.notes)
        with open(path, "w") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_scores(self, path, pairs=None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "j", "score", "truth"])
            for k, (s, t) in enumerate(zip(self.scores, self.truths)):
                i, j = (int(pairs[k, 0]), int(pairs[k, 1])) if pairs is not None else (k, k)
                w.writerow([i, j, fmt(s), int(t)])


def report_from_scores(kind: str, scores, truths, threshold: float = 0.5) -> AttackReport:
    scores = np.asarray(scores, dtype=float)
    truths = np.asarray(truths, dtype=np.int64)
    pred = (scores > threshold).astype(np.int64)
    acc, prec, rec = binary_metrics(pred, truths)
    return AttackReport(kind, scores, truths, pred, acc, prec, rec, roc_auc(scores, truths), threshold)


# -- unsupervised attack ----------------------------------------------------

def kmeans_1d(values, iters: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Two-cluster Lloyd iterations on scalars, seeded at the quartiles."""
    x = np.asarray(values, dtype=float)
    centers = np.percentile(x, [25, 75])
    if np.ptp(x) == 0 or centers[0] == centers[1]:
        raise DegenerateClustering("all values identical; two clusters are undefined")
    for _ in range(iters):
        assign = (np.abs(x - centers[1]) < np.abs(x - centers[0])).astype(np.int64)
        new = np.array([x[assign == k].mean() if (assign == k).any() else centers[k] for k in (0, 1)])
        if np.array_equal(new, centers):
            break
        centers = new
    return assign, centers


def attack0_scores(preds: np.ndarray, pairs: PairSet) -> AttackReport:
    """Unsupervised attack: combined similarity as score, 2-means on distance for hard labels.

    Distance is ``2 - similarity``; the cluster with the lower mean distance is
    called linked.
    """
    if len(pairs) < 2:
        raise AttackError("need at least two pairs")
    sims = pair_similarity(preds, pairs.pairs, MetricKind.COMBINED)
    truths = np.asarray(pairs.labels, dtype=np.int64)
    auc = roc_auc(sims, truths)
    try:
        assign, centers = kmeans_1d(2.0 - sims)
    except DegenerateClustering as exc:
        return AttackReport("attack0", sims, truths, None, None, None, None, auc, None, [str(exc)])
    linked = int(np.argmin(centers))
    pred = (assign == linked).astype(np.int64)
    acc, prec, rec = binary_metrics(pred, truths)
    # boundary expressed back in similarity units
    threshold = 2.0 - float(centers.mean())
    return AttackReport("attack0", sims, truths, pred, acc, prec, rec, auc, threshold)


# -- supervised attacks -----------------------------------------------------

@dataclass
class AttackModel:
    """One-hidden-layer ReLU classifier on z-normalised pair features."""

    kind: str
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: float
    mean: np.ndarray
    std: np.ndarray
    train_accuracy: float | None = None

    def predict_proba(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=float) - self.mean) / self.std
        H = np.maximum(Z @ self.W1 + self.b1, 0.0)
        return _sigmoid(H @ self.W2 + self.b2)


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


def train_supervised(train_pairs: PairSet, epochs: int = 300, lr: float = 0.01, seed: int = 0,
                     hidden: int = 32, kind: str = "supervised") -> AttackModel:
    """Full-batch Adam on binary cross-entropy."""
    X = np.asarray(train_pairs.features, dtype=float)
    y = np.asarray(train_pairs.labels, dtype=float)
    if len(np.unique(y)) < 2:
        raise AttackError("training pairs must contain both classes")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std < 1e-12] = 1.0
    Z = (X - mean) / std
    rng = np.random.default_rng(seed)
    d = Z.shape[1]
    params = [
        rng.normal(0.0, np.sqrt(2.0 / d), (d, hidden)),
        np.zeros(hidden),
        rng.normal(0.0, np.sqrt(1.0 / hidden), hidden),
        np.zeros(1),
    ]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1_, b2_, eps = 0.9, 0.999, 1e-8
    N = len(y)
    for t in range(1, epochs + 1):
        W1, b1, W2, b2 = params
        pre = Z @ W1 + b1
        H = np.maximum(pre, 0.0)
        logit = H @ W2 + b2[0]
        p = _sigmoid(logit)
        loss = -np.mean(y * np.log(np.clip(p, 1e-12, None)) + (1 - y) * np.log(np.clip(1 - p, 1e-12, None)))
        if not np.isfinite(loss):
            raise AttackError(f"attack classifier diverged at epoch {t}; lower the learning rate")
        dlogit = (p - y) / N
        dpre = np.outer(dlogit, W2) * (pre > 0)
        grads = [Z.T @ dpre, dpre.sum(axis=0), H.T @ dlogit, np.array([dlogit.sum()])]
        for k, g in enumerate(grads):
            m[k] = b1_ * m[k] + (1 - b1_) * g
            v[k] = b2_ * v[k] + (1 - b2_) * g * g
            mhat = m[k] / (1 - b1_**t)
            vhat = v[k] / (1 - b2_**t)
            params[k] = params[k] - lr * mhat / (np.sqrt(vhat) + eps)
    W1, b1, W2, b2 = params
    model = AttackModel(kind, W1, b1, W2, float(b2[0]), mean, std)
    model.train_accuracy = float(((model.predict_proba(X) > 0.5) == (y > 0.5)).mean())
    return model


def evaluate_attack(model: AttackModel, test_pairs: PairSet) -> AttackReport:
    scores = model.predict_proba(test_pairs.features)
    return report_from_scores(model.kind, scores, test_pairs.labels, 0.5)


def adaptive_relabel(graph: Graph, n: int, pairs: PairSet, index: HopIndex | None = None) -> PairSet:
    """Mark every pair within ``n`` hops as linked (the attacker's training ground truth)."""
    if n < 1:
        raise ValueError("hop count must be >= 1")
    index = index if index is not None and index.cap >= n else HopIndex(graph, n)
    labels = np.array([
        1 if 0 < index.dist(int(i), int(j)) <= n else 0
        for i, j in pairs.pairs
    ], dtype=np.int64)
    return replace(pairs, labels=labels)
