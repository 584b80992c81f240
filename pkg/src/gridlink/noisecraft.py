"""Per-core-node noise crafting.

Each core node gets a noise vector minimizing its similarity gap (similarity
to direct neighbors minus similarity to sampled n-hop nodes) subject to:
unchanged argmax, a valid probability vector, and a norm budget ``theta``.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from enum import Enum

import numpy as np

from ._backend import kernels
from .coresel import CoreSet
from .graphio import Graph, HopIndex, adjacent_and_nhop_sets
from .simkit import MetricKind, PredictionError, fmt, tied_argmax_rows, validate_predictions

log = logging.getLogger(__name__)

STATUS_NAMES = {0: "converged", 1: "max_iters", 2: "nonfinite"}


class BudgetNorm(str, Enum):
    L1 = "L1"
    L2 = "L2"


class InvariantViolation(RuntimeError):
    """A crafted plan broke one of the utility constraints (solver bug)."""


@dataclass
class SolverConfig:
    theta: float = 0.4
    alpha: float = 0.05
    beta: float = 0.1
    eps: float = 1e-5
    max_iters: int = 200
    n: int = 3
    max_q: int = 8
    max_pairs: int = 1000
    budget_norm: BudgetNorm = BudgetNorm.L1
    seed: int = 0

    def __post_init__(self):
        self.budget_norm = BudgetNorm(self.budget_norm)
        if self.theta < 0:
            raise ValueError("theta must be non-negative")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.n < 2:
            raise ValueError("n must be >= 2")

    @property
    def l1(self) -> bool:
        return self.budget_norm is BudgetNorm.L1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["budget_norm"] = self.budget_norm.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown solver config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class GapObjective:
    """Similarity gap of one node against fixed neighbor / n-hop posteriors.

    When no n-hop node is available, the subtracted sum is replaced by
    ``len(P) * target`` (a constant, so it adds nothing to the gradient).
    """

    v: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    target: float | None = None
    kind: MetricKind = MetricKind.COMBINED

    def __post_init__(self):
        A = len(self.v)
        self.v = np.ascontiguousarray(self.v, dtype=float)
        self.P = np.ascontiguousarray(np.reshape(self.P, (-1, A)), dtype=float)
        self.Q = np.ascontiguousarray(np.reshape(self.Q, (-1, A)), dtype=float)

    @property
    def q_const(self) -> float:
        if len(self.Q) == 0 and self.target is not None:
            return len(self.P) * float(self.target)
        return 0.0

    def evaluate(self, s) -> tuple[float, np.ndarray]:
        z = self.v + np.asarray(s, dtype=float)
        return kernels.gap_value_grad(z, self.P, self.Q, self.q_const, MetricKind(self.kind).code)


def evaluate_gap(obj: GapObjective, s) -> tuple[float, np.ndarray]:
    return obj.evaluate(s)


def _norm(s, l1: bool) -> float:
    return float(np.abs(s).sum() if l1 else np.sqrt(np.dot(s, s)))


def constraint_check(s, v, theta: float, budget_norm=BudgetNorm.L1) -> np.ndarray:
    """Project a raw noise vector onto the feasible set (in the fixed three-step order)."""
    v = np.ascontiguousarray(v, dtype=float)
    label = int(np.argmax(v))
    l1 = BudgetNorm(budget_norm) is BudgetNorm.L1
    return kernels.constraint_check(np.asarray(s, dtype=float), v, float(theta), l1, label)


@dataclass
class NodeDiagnostics:
    iterations: int
    status: str
    d0: float
    d_final: float
    sum_residual: float
    norm: float
    margin: float
    lam: list
    mu: float
    nu: float
    num_p: int
    num_q: int


def constraint_residuals(s, v, theta: float, l1: bool = True) -> dict:
    """How far ``s`` is from each constraint (0 means satisfied)."""
    r = v + s
    C = int(np.argmax(v))
    others = np.delete(r, C)
    return {
        "label": float(max(0.0, others.max() - r[C])) if others.size else 0.0,
        "sum": float(abs(s.sum())),
        "box": float(max(0.0, -r.min(), r.max() - 1.0)),
        "budget": float(max(0.0, _norm(s, l1) - theta)),
        "label_kept": bool(np.argmax(r) == C),
    }


def solve_node(obj: GapObjective, v, cfg: SolverConfig) -> tuple[np.ndarray, NodeDiagnostics]:
    v = np.ascontiguousarray(v, dtype=float)
    if tied_argmax_rows(v[None, :]):
        raise PredictionError("prediction vector has a tied argmax")
    s, d0, d_best, iters, lam, mu, nu, status = kernels.solve_node(
        v, obj.P, obj.Q, obj.q_const, MetricKind(obj.kind).code, float(cfg.theta), float(cfg.alpha),
        float(cfg.beta), float(cfg.eps), int(cfg.max_iters), cfg.l1,
    )
    s = np.asarray(s) + 0.0
    if status == 2:
        log.warning("non-finite gradient; node left un-noised")
    r = v + s
    C = int(np.argmax(v))
    diag = NodeDiagnostics(
        iterations=int(iters),
        status=STATUS_NAMES[int(status)],
        d0=float(d0),
        d_final=float(d_best),
        sum_residual=float(s.sum()),
        norm=_norm(s, cfg.l1),
        margin=float(r[C] - np.delete(r, C).max()),
        lam=[float(x) for x in lam],
        mu=float(mu),
        nu=float(nu),
        num_p=len(obj.P),
        num_q=len(obj.Q),
    )
    return s, diag


@dataclass
class NoisePlan:
    noise: np.ndarray                       # (num_nodes, A); zero rows outside the core
    members: np.ndarray
    diagnostics: dict = field(default_factory=dict)   # node id -> NodeDiagnostics
    config: SolverConfig | None = None

    def rows(self):
        for i in self.members:
            yield int(i), self.noise[i]

    def write(self, csv_path, json_path) -> None:
        A = self.noise.shape[1]
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node_id"] + [f"s{a}" for a in range(A)])
            for i, s in self.rows():
                w.writerow([i] + [fmt(x) for x in s])
        out = {
            "config": self.config.to_dict() if self.config else None,
            "nodes": {str(i): _round_diag(asdict(d)) for i, d in sorted(self.diagnostics.items())},
        }
        with open(json_path, "w") as fh:
            json.dump(out, fh, indent=1, sort_keys=True)
            fh.write("\n")


def _round_diag(d: dict) -> dict:
    return {k: (float(fmt(v)) if isinstance(v, float) else v) for k, v in d.items()}


def build_objective(graph: Graph, preds: np.ndarray, i: int, cfg: SolverConfig, target: float | None,
                    index: HopIndex | None = None) -> GapObjective:
    P, Q = adjacent_and_nhop_sets(graph, int(i), cfg.n, cfg.max_q, cfg.seed, index)
    return GapObjective(preds[i], preds[P], preds[Q], target=target)


def craft_plan(graph: Graph, preds: np.ndarray, core: CoreSet, cfg: SolverConfig,
               workers: int = 1) -> NoisePlan:
    """Solve every core node independently against the original posteriors."""
    preds = validate_predictions(preds)
    members = np.asarray(core.members, dtype=np.int64)
    tied = tied_argmax_rows(preds, members)
    if tied:
        raise PredictionError(f"tied argmax in core node rows {tied[:20]}")
    noise = np.zeros_like(preds)
    index = HopIndex(graph, cfg.n)

    def one(i):
        obj = build_objective(graph, preds, i, cfg, core.delta, index)
        return solve_node(obj, preds[i], cfg)

    if workers > 1 and len(members) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, members))
    else:
        results = [one(i) for i in members]
    diags = {}
    for i, (s, d) in zip(members, results):
        noise[i] = s
        diags[int(i)] = d
    return NoisePlan(noise, members, diags, cfg)


def check_plan(preds: np.ndarray, plan: NoisePlan, theta: float | None = None, l1: bool | None = None) -> list[str]:
    """List every constraint violation in ``plan`` (empty when all hold)."""
    cfg = plan.config
    theta = cfg.theta if theta is None else theta
    l1 = cfg.l1 if l1 is None else l1
    problems = []
    for i, s in plan.rows():
        v = preds[i]
        r = v + s
        if np.argmax(r) != np.argmax(v):
            problems.append(f"node {i}: label changed")
        if abs(s.sum()) > 1e-6:
            problems.append(f"node {i}: noise sums to {s.sum():.3g}")
        if r.min() < 0 or r.max() > 1:
            problems.append(f"node {i}: entry outside [0, 1]")
        if _norm(s, l1) > theta + 1e-9:
            problems.append(f"node {i}: norm {_norm(s, l1):.12g} exceeds budget {theta}")
    return problems


def apply_plan(preds: np.ndarray, plan: NoisePlan) -> np.ndarray:
    if preds.shape != plan.noise.shape:
        raise ValueError(f"shape mismatch {preds.shape} vs {plan.noise.shape}")
    out = preds + plan.noise
    try:
        validate_predictions(out)
    except PredictionError as exc:
        raise InvariantViolation(f"noisy predictions invalid: {exc}") from exc
    return out
