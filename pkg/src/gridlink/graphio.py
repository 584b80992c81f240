"""Graph containers, file I/O, the synthetic SBM generator and hop queries."""

from __future__ import annotations

import csv
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._backend import kernels


class GraphError(ValueError):
    """Validation failure for graph or node data (bad IDs, self-loops, ...)."""


class GraphParseError(GraphError):
    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph stored as a canonical edge array plus CSR adjacency.

    ``edges`` holds each edge once as ``(u, v)`` with ``u < v``, sorted
    lexicographically. ``indptr``/``indices`` give sorted neighbor lists.
    """

    num_nodes: int
    edges: np.ndarray
    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)

    @classmethod
    def from_edges(cls, num_nodes: int, edges) -> "Graph":
        num_nodes = int(num_nodes)
        if num_nodes < 0:
            raise GraphError("num_nodes must be non-negative")
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            if (e < 0).any() or (e >= num_nodes).any():
                bad = e[((e < 0) | (e >= num_nodes)).any(axis=1)][0]
                raise GraphError(f"edge {tuple(bad.tolist())} has endpoint outside [0, {num_nodes})")
            loops = e[e[:, 0] == e[:, 1]]
            if len(loops):
                raise GraphError(f"self-loop at node {int(loops[0, 0])}")
            e = np.sort(e, axis=1)
            e = np.unique(e, axis=0)
        else:
            e = np.empty((0, 2), dtype=np.int64)
        both = np.concatenate([e, e[:, ::-1]])
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.add.at(indptr, both[:, 0] + 1, 1)
        indptr = np.cumsum(indptr)
        indices = np.ascontiguousarray(both[:, 1])
        for arr in (e, indptr, indices):
            arr.setflags(write=False)
        return cls(num_nodes, e, indptr, indices)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def adjacency(self) -> dict[int, list[int]]:
        return {i: self.neighbors(i).tolist() for i in range(self.num_nodes)}

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        k = np.searchsorted(nb, v)
        return bool(k < len(nb) and nb[k] == v)

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}

    def to_scipy(self):
        import scipy.sparse as sp

        data = np.ones(len(self.indices))
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.num_nodes, self.num_nodes))

    def bfs(self, source: int, cap: int) -> np.ndarray:
        """Hop distances from ``source``; ``-1`` for nodes farther than ``cap``."""
        return kernels.bfs_capped(self.indptr, self.indices, int(source), int(cap))

    def serialize(self) -> str:
        lines = [f"# nodes {self.num_nodes}"]
        lines += [f"{u}\t{v}" for u, v in self.edges]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class NodeData:
    attributes: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.attributes.ndim != 2:
            raise GraphError("attributes must be a 2-D array")
        if self.labels.shape != (self.attributes.shape[0],):
            raise GraphError("one label per attribute row required")
        if len(self.labels) and self.labels.min() < 0:
            raise GraphError("labels must be non-negative class indices")

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0


class HopIndex:
    """Cache of capped BFS distance rows; safe to share between threads."""

    def __init__(self, graph: Graph, cap: int):
        self.graph = graph
        self.cap = int(cap)
        self._rows: dict[int, np.ndarray] = {}
        self._lock = threading.Lock()

    def distances(self, source: int) -> np.ndarray:
        row = self._rows.get(source)
        if row is None:
            row = self.graph.bfs(source, self.cap)
            row.setflags(write=False)
            with self._lock:
                row = self._rows.setdefault(source, row)
        return row

    def dist(self, i: int, j: int) -> int:
        """Shortest-path length, or ``-1`` when it exceeds the cap."""
        return int(self.distances(i)[j])


# -- file formats ---------------------------------------------------------

def read_edge_file(path, num_nodes: int | None = None) -> Graph:
    path = Path(path)
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise GraphParseError(path, lineno, f"expected 'u<TAB>v', got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphParseError(path, lineno, f"non-integer node id in {line!r}") from None
            if u == v:
                raise GraphParseError(path, lineno, f"self-loop ({u},{v})")
            if u < 0 or v < 0:
                raise GraphParseError(path, lineno, f"negative node id in {line!r}")
            edges.append((u, v))
    if num_nodes is None:
        num_nodes = 1 + max((max(e) for e in edges), default=-1)
    return Graph.from_edges(num_nodes, edges)


def read_node_file(path) -> NodeData:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise GraphParseError(path, 1, "empty node file")
    header = rows[0]
    d = len(header) - 2
    expected = ["id", "label"] + [f"f{k}" for k in range(d)]
    if d < 0 or header != expected:
        raise GraphParseError(path, 1, f"bad header {header!r}")
    ids, labels, feats = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != d + 2:
            raise GraphParseError(path, lineno, f"expected {d + 2} fields, got {len(row)}")
        try:
            ids.append(int(row[0]))
            labels.append(int(row[1]))
            feats.append([float(x) for x in row[2:]])
        except ValueError as exc:
            raise GraphParseError(path, lineno, str(exc)) from None
    n = len(ids)
    if sorted(ids) != list(range(n)):
        raise GraphError(f"{path}: node ids must be 0..{n - 1}, each exactly once")
    order = np.argsort(ids)
    attrs = np.asarray(feats, dtype=float).reshape(n, d)[order]
    return NodeData(attrs, np.asarray(labels, dtype=np.int64)[order])


def load_graph(edge_file, node_file) -> tuple[Graph, NodeData]:
    data = read_node_file(node_file)
    n = len(data.labels)
    graph = _read_edges_checked(edge_file, n)
    return graph, data


def _read_edges_checked(edge_file, n):
    g = read_edge_file(edge_file)
    if g.num_nodes > n:
        raise GraphError(f"{edge_file}: node id {g.num_nodes - 1} out of range for {n} nodes")
    return Graph.from_edges(n, g.edges)


def write_edge_file(path, graph: Graph) -> None:
    Path(path).write_text(graph.serialize(), encoding="utf-8")


def write_node_file(path, data: NodeData) -> None:
    from .simkit import fmt

    d = data.attributes.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label"] + [f"f{k}" for k in range(d)])
        for i, (lab, row) in enumerate(zip(data.labels, data.attributes)):
            w.writerow([i, int(lab)] + [fmt(x) for x in row])


# -- synthetic data -------------------------------------------------------

def generate_synthetic(seed: int, blocks: int = 4, nodes_per_block: int = 50, p_in: float = 0.1,
                       p_out: float = 0.005, attr_dim: int | None = None,
                       attr_noise: float = 0.3) -> tuple[Graph, NodeData]:
    """Stochastic block model with one-hot-plus-Gaussian node attributes.

    Block index is the node label. Attributes are ``one_hot(label)`` padded to
    ``attr_dim`` columns, plus i.i.d. Gaussian noise of std ``attr_noise``.
    """
    if blocks < 1 or nodes_per_block < 1:
        raise GraphError("synthetic graph needs at least one node")
    if not (0.0 <= p_out < p_in <= 1.0):
        raise GraphError(f"need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}")
    attr_dim = blocks if attr_dim is None else int(attr_dim)
    if attr_dim < blocks:
        raise GraphError("attr_dim must be at least the number of blocks")
    rng = np.random.default_rng(seed)
    n = blocks * nodes_per_block
    labels = np.repeat(np.arange(blocks), nodes_per_block)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    graph = Graph.from_edges(n, np.stack([iu[keep], ju[keep]], axis=1))
    attrs = np.zeros((n, attr_dim))
    attrs[np.arange(n), labels] = 1.0
    attrs += rng.normal(0.0, attr_noise, size=attrs.shape)
    return graph, NodeData(attrs, labels.astype(np.int64))


# -- hop queries ----------------------------------------------------------

def _check_hop(n: int) -> None:
    if n < 2:
        raise ValueError(f"indirect neighbors need hop count >= 2, got {n}")


def all_n_hop_pairs(graph: Graph, n: int, index: HopIndex | None = None) -> np.ndarray:
    """Every pair ``(i, j)``, ``i < j``, at shortest-path distance exactly ``n``."""
    _check_hop(n)
    index = index if index is not None and index.cap >= n else HopIndex(graph, n)
    out = []
    for i in range(graph.num_nodes):
        d = index.distances(i)
        js = np.flatnonzero(d == n)
        js = js[js > i]
        if js.size:
            out.append(np.column_stack([np.full(js.size, i), js]))
    if not out:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate(out).astype(np.int64)


def n_hop_pairs(graph: Graph, n: int, max_pairs: int, seed: int, index: HopIndex | None = None) -> np.ndarray:
    """Uniform sample (without replacement) of at most ``max_pairs`` exactly-n-hop pairs."""
    pool = all_n_hop_pairs(graph, n, index)
    if len(pool) <= max_pairs:
        return pool
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(len(pool), size=max_pairs, replace=False))
    return pool[pick]


def adjacent_and_nhop_sets(graph: Graph, i: int, n: int, max_q: int, seed: int,
                           index: HopIndex | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Direct neighbors of ``i`` and a seeded sample of nodes exactly ``n`` hops away."""
    _check_hop(n)
    if not 0 <= i < graph.num_nodes:
        raise GraphError(f"node {i} out of range")
    d = index.distances(i) if index is not None and index.cap >= n else graph.bfs(i, n)
    P = graph.neighbors(i).copy()
    Q = np.flatnonzero(d == n)
    if len(Q) > max_q:
        # Per-node stream: the sample does not depend on which worker handles the node.
        rng = np.random.default_rng([seed, i])
        Q = np.sort(rng.choice(Q, size=max_q, replace=False))
    return P, Q


def sample_non_adjacent_pairs(graph: Graph, max_pairs: int, seed: int) -> np.ndarray:
    """Seeded sample of distinct unlinked pairs ``(i, j)``, ``i < j``."""
    N = graph.num_nodes
    total = N * (N - 1) // 2 - graph.num_edges
    want = min(max_pairs, total)
    if want <= 0:
        return np.empty((0, 2), dtype=np.int64)
    rng = np.random.default_rng(seed)
    if total <= 4 * want:
        iu, ju = np.triu_indices(N, k=1)
        mask = np.array([not graph.has_edge(a, b) for a, b in zip(iu, ju)], dtype=bool)
        cand = np.column_stack([iu[mask], ju[mask]])
        pick = np.sort(rng.choice(len(cand), size=want, replace=False))
        return cand[pick].astype(np.int64)
    seen: set[tuple[int, int]] = set()
    out = []
    while len(out) < want:
        a, b = rng.integers(0, N, size=2)
        if a == b:
            continue
        a, b = (int(a), int(b)) if a < b else (int(b), int(a))
        if (a, b) in seen or graph.has_edge(a, b):
            continue
        seen.add((a, b))
        out.append((a, b))
    return np.asarray(out, dtype=np.int64)
