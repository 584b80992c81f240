"""Two-layer graph convolution used to produce posteriors for synthetic graphs."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graphio import Graph, GraphError, NodeData

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class ToyModel:
    W1: np.ndarray   # (d, h)
    W2: np.ndarray   # (h, A)
    train_accuracy: float | None = None

    def to_json(self) -> str:
        return json.dumps({"W1": self.W1.tolist(), "W2": self.W2.tolist()}, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ToyModel":
        d = json.loads(text)
        return cls(np.asarray(d["W1"], dtype=float), np.asarray(d["W2"], dtype=float))


def normalized_adjacency(graph: Graph) -> sp.csr_matrix:
    """D^-1/2 (A + I) D^-1/2."""
    A = graph.to_scipy() + sp.identity(graph.num_nodes, format="csr")
    d = np.asarray(A.sum(axis=1)).ravel()
    dinv = sp.diags(1.0 / np.sqrt(d))
    return (dinv @ A @ dinv).tocsr()


def _softmax(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def _forward(Ahat, F, W1, W2):
    G = Ahat @ F
    pre = G @ W1
    H = np.maximum(pre, 0.0)
    M = Ahat @ H
    return G, pre, M, _softmax(M @ W2)


def forward(model: ToyModel, graph: Graph, data: NodeData, Ahat=None) -> np.ndarray:
    if data.attributes.shape[1] != model.W1.shape[0]:
        raise GraphError(f"attribute dimension {data.attributes.shape[1]} does not match model input {model.W1.shape[0]}")
    if len(data.labels) != graph.num_nodes:
        raise GraphError("node data and graph disagree on node count")
    Ahat = normalized_adjacency(graph) if Ahat is None else Ahat
    return _forward(Ahat, data.attributes, model.W1, model.W2)[3]


def loss_and_grads(Ahat, F, Y, W1, W2):
    """Mean cross-entropy and its gradients for one-hot targets ``Y``."""
    G, pre, M, P = _forward(Ahat, F, W1, W2)
    N = len(Y)
    loss = -np.sum(Y * np.log(np.clip(P, 1e-300, None))) / N
    dZ = (P - Y) / N
    dW2 = M.T @ dZ
    dH = Ahat.T @ (dZ @ W2.T)
    dW1 = G.T @ (dH * (pre > 0))
    return loss, dW1, dW2, P


def init_model(d: int, h: int, A: int, seed: int) -> ToyModel:
    rng = np.random.default_rng(seed)
    b1 = np.sqrt(6.0 / (d + h))
    b2 = np.sqrt(6.0 / (h + A))
    return ToyModel(rng.uniform(-b1, b1, (d, h)), rng.uniform(-b2, b2, (h, A)))


def train(graph: Graph, data: NodeData, epochs: int = 200, lr: float = 0.1, seed: int = 0,
          hidden: int = 16, num_classes: int | None = None) -> ToyModel:
    """Full-batch gradient descent on cross-entropy over every labeled node."""
    A = num_classes or data.num_classes
    if len(np.unique(data.labels)) < 2:
        raise GraphError("training needs at least two classes")
    F = data.attributes
    Y = np.eye(A)[data.labels]
    Ahat = normalized_adjacency(graph)
    model = init_model(F.shape[1], hidden, A, seed)
    W1, W2 = model.W1, model.W2
    for epoch in range(epochs):
        loss, dW1, dW2, _ = loss_and_grads(Ahat, F, Y, W1, W2)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"loss became non-finite at epoch {epoch}; try a smaller learning rate")
        W1 = W1 - lr * dW1
        W2 = W2 - lr * dW2
    P = _forward(Ahat, F, W1, W2)[3]
    acc = float((P.argmax(axis=1) == data.labels).mean())
    log.info("toy GCN trained: %d epochs, train accuracy %.3f", epochs, acc)
    return ToyModel(W1, W2, train_accuracy=acc)
