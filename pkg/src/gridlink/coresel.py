"""Similarity threshold estimation and threshold-based core node selection."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .graphio import Graph, GraphError, HopIndex, n_hop_pairs, sample_non_adjacent_pairs
from .simkit import MetricKind, fmt, pair_similarity

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DeltaEstimate:
    """Threshold value plus how it was obtained.

    ``source`` is ``"n_hop"`` normally, ``"non_adjacent"`` when the graph has no
    pair at the requested distance, and ``"edges"`` when it has no unlinked
    pair at all (complete graphs).
    """

    value: float
    n: int
    num_pairs: int
    source: str = "n_hop"

    @property
    def fallback(self) -> bool:
        return self.source != "n_hop"

    def __float__(self) -> float:
        return self.value


def estimate_delta(graph: Graph, preds: np.ndarray, n: int = 3, max_pairs: int = 1000, seed: int = 0,
                   index: HopIndex | None = None) -> DeltaEstimate:
    if n < 2:
        raise ValueError("hop count must be >= 2")
    if max_pairs < 1:
        raise ValueError("max_pairs must be >= 1")
    if graph.num_nodes < 3:
        raise GraphError("insufficient structure: threshold estimation needs at least 3 nodes")
    pairs = n_hop_pairs(graph, n, max_pairs, seed, index)
    source = "n_hop"
    if len(pairs) == 0:
        pairs = sample_non_adjacent_pairs(graph, max_pairs, seed)
        source = "non_adjacent"
        if len(pairs) == 0:
            pairs = graph.edges
            source = "edges"
        log.warning("no %d-hop pairs; threshold falls back to %s pairs (%d)", n, source, len(pairs))
    if len(pairs) == 0:
        raise GraphError("insufficient structure: graph has no node pairs to estimate a threshold")
    value = float(pair_similarity(preds, pairs, MetricKind.COMBINED).mean())
    return DeltaEstimate(value, n, len(pairs), source)


@dataclass(frozen=True)
class CoreSet:
    members: np.ndarray          # sorted node ids
    delta: float
    degrees: np.ndarray          # similarity-weighted degree per node
    weights: np.ndarray          # per-edge weight, aligned with graph.edges
    covered_edges: np.ndarray    # indices into graph.edges with weight >= delta
    dropped_edges: np.ndarray    # indices into graph.edges with weight < delta
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, node) -> bool:
        k = np.searchsorted(self.members, node)
        return bool(k < len(self.members) and self.members[k] == node)

    def mask(self, num_nodes: int) -> np.ndarray:
        m = np.zeros(num_nodes, dtype=bool)
        m[self.members] = True
        return m

    def sidecar(self) -> dict:
        return {
            "delta": self.delta,
            "n": self.meta.get("n"),
            "num_members": int(len(self.members)),
            "num_covered": int(len(self.covered_edges)),
            "num_dropped": int(len(self.dropped_edges)),
            "delta_source": self.meta.get("delta_source", "given"),
        }

    def write(self, csv_path, json_path) -> None:
        with open(csv_path, "w") as fh:
            fh.write("node_id\n")
            fh.writelines(f"{int(i)}\n" for i in self.members)
        side = self.sidecar()
        side["delta"] = float(fmt(side["delta"]))
        with open(json_path, "w") as fh:
            json.dump(side, fh, indent=2, sort_keys=True)
            fh.write("\n")


def edge_weights(graph: Graph, preds: np.ndarray) -> np.ndarray:
    if graph.num_edges == 0:
        return np.zeros(0)
    return pair_similarity(preds, graph.edges, MetricKind.COMBINED)


def similarity_degrees(graph: Graph, weights: np.ndarray) -> np.ndarray:
    deg = np.zeros(graph.num_nodes)
    np.add.at(deg, graph.edges[:, 0], weights)
    np.add.at(deg, graph.edges[:, 1], weights)
    return deg


def select_core(graph: Graph, preds: np.ndarray, delta, n: int | None = None) -> CoreSet:
    """Greedy threshold cover.

    Edges are visited by descending weight (ties: lexicographic endpoints).
    Edges below ``delta`` are skipped; for each remaining edge with neither
    endpoint chosen, the endpoint with the larger similarity-weighted degree
    is added (ties: lower node id). Degrees are fixed up front.
    """
    meta = {"n": n}
    if isinstance(delta, DeltaEstimate):
        meta.update(n=delta.n, delta_source=delta.source)
        delta = delta.value
    delta = float(delta)
    w = edge_weights(graph, preds)
    deg = similarity_degrees(graph, w)
    E = graph.edges
    # lexsort: last key is primary
    order = np.lexsort((E[:, 1], E[:, 0], -w)) if len(E) else np.zeros(0, dtype=np.int64)
    chosen = np.zeros(graph.num_nodes, dtype=bool)
    for k in order:
        if w[k] < delta:
            break  # descending order: everything after is below the threshold too
        u, v = int(E[k, 0]), int(E[k, 1])
        if chosen[u] or chosen[v]:
            continue
        chosen[u if deg[u] >= deg[v] else v] = True  # u < v, so ties go to the lower id
    keep = w >= delta
    return CoreSet(
        members=np.flatnonzero(chosen),
        delta=delta,
        degrees=deg,
        weights=w,
        covered_edges=np.flatnonzero(keep),
        dropped_edges=np.flatnonzero(~keep),
        meta=meta,
    )


def verify_cover(graph: Graph, core: CoreSet) -> tuple[bool, list[tuple[int, int]]]:
    """Check every edge with weight >= delta touches a member; list the ones that don't."""
    w = core.weights if len(core.weights) == graph.num_edges else None
    if w is None:
        raise ValueError("core set was not built for this graph")
    inside = core.mask(graph.num_nodes)
    E = graph.edges
    qualifying = w >= core.delta
    bad = qualifying & ~(inside[E[:, 0]] | inside[E[:, 1]]) if len(E) else np.zeros(0, dtype=bool)
    missing = [(int(u), int(v)) for u, v in E[bad]]
    return not missing, missing
