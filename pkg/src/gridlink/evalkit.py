"""Utility metrics, defense/attack pipeline, parameter sweeps and reports."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import attacks as atk
from .config import ExperimentConfig
from .coresel import CoreSet, DeltaEstimate, estimate_delta, select_core
from .graphio import Graph, HopIndex, NodeData, generate_synthetic, load_graph
from .noisecraft import NoisePlan, SolverConfig, apply_plan, craft_plan
from .simkit import fmt, load_predictions
from .toygnn import ToyModel, forward, train

log = logging.getLogger(__name__)

# Offsets that keep the seeded streams of one experiment apart.
SHADOW_SEED_OFFSET = 7919
PAIR_SEED_OFFSET = 104729


@dataclass
class UtilityReport:
    gan: float
    als: float
    per_node_l1: np.ndarray
    max_distortion: float

    def summary(self) -> dict:
        return {"gan": self.gan, "als": self.als, "max_distortion": self.max_distortion}


def utility_metrics(original: np.ndarray, noisy: np.ndarray, core: CoreSet | None = None) -> UtilityReport:
    """GAN: summed L1 distortion of core rows over the total node count.
    ALS: fraction of nodes whose predicted label changed.
    """
    if original.shape != noisy.shape:
        raise ValueError("prediction matrices differ in shape")
    N = len(original)
    l1 = np.abs(noisy - original).sum(axis=1)
    members = np.arange(N) if core is None else np.asarray(core.members, dtype=np.int64)
    gan = float(l1[members].sum() / N) if N else 0.0
    als = float((original.argmax(axis=1) != noisy.argmax(axis=1)).mean()) if N else 0.0
    return UtilityReport(gan, als, l1, float(l1.max()) if N else 0.0)


# -- experiment pipeline ---------------------------------------------------

@dataclass
class World:
    graph: Graph
    data: NodeData
    preds: np.ndarray
    shadow_graph: Graph
    shadow_data: NodeData
    shadow_preds: np.ndarray
    model: ToyModel | None = None


def synthetic_posteriors(cfg: ExperimentConfig, seed: int):
    ds = cfg.dataset
    graph, data = generate_synthetic(seed, ds.blocks, ds.nodes_per_block, ds.p_in, ds.p_out, ds.attr_dim, ds.attr_noise)
    model = train(graph, data, cfg.gnn.epochs, cfg.gnn.lr, seed, cfg.gnn.hidden)
    return graph, data, forward(model, graph, data), model


def build_world(cfg: ExperimentConfig) -> World:
    ds = cfg.dataset
    model = None
    if ds.edge_file:
        graph, data = load_graph(ds.edge_file, ds.node_file)
        if ds.pred_file:
            preds = load_predictions(ds.pred_file, graph.num_nodes)
        else:
            model = train(graph, data, cfg.gnn.epochs, cfg.gnn.lr, cfg.seed, cfg.gnn.hidden)
            preds = forward(model, graph, data)
    else:
        graph, data, preds, model = synthetic_posteriors(cfg, cfg.seed)
    sg, sd, sp, _ = synthetic_posteriors(cfg, cfg.seed + SHADOW_SEED_OFFSET)
    return World(graph, data, preds, sg, sd, sp, model)


@dataclass
class DefenseResult:
    delta: DeltaEstimate
    core: CoreSet
    plan: NoisePlan
    noisy: np.ndarray
    timings: dict = field(default_factory=dict)


def defend(graph: Graph, preds: np.ndarray, solver: SolverConfig, workers: int = 1) -> DefenseResult:
    t0 = time.perf_counter()
    index = HopIndex(graph, solver.n)
    delta = estimate_delta(graph, preds, solver.n, solver.max_pairs, solver.seed, index)
    core = select_core(graph, preds, delta)
    t1 = time.perf_counter()
    plan = craft_plan(graph, preds, core, solver, workers)
    noisy = apply_plan(preds, plan)
    t2 = time.perf_counter()
    return DefenseResult(delta, core, plan, noisy, {"selection": t1 - t0, "solving": t2 - t1})


@dataclass
class AttackSetup:
    test: atk.PairSet
    shadow_pairs: atk.PairSet
    supervised: atk.AttackModel | None = None


def prepare_attacks(world: World, cfg: ExperimentConfig) -> AttackSetup:
    ac = cfg.attacks
    test = atk.sample_pairs(world.graph, ac.num_pos, ac.num_neg, cfg.seed + PAIR_SEED_OFFSET)
    shadow = atk.sample_pairs(world.shadow_graph, ac.num_pos, ac.num_neg,
                              cfg.seed + SHADOW_SEED_OFFSET + PAIR_SEED_OFFSET)
    model = None
    if "supervised" in ac.kinds:
        train_set = shadow.with_features(world.shadow_preds, _attrs(world.shadow_data, ac))
        model = atk.train_supervised(train_set, ac.epochs, ac.lr, cfg.seed, ac.hidden, "supervised")
    return AttackSetup(test, shadow, model)


def _attrs(data: NodeData, ac) -> np.ndarray | None:
    return data.attributes if ac.with_attributes else None


def train_adaptive(world: World, setup: AttackSetup, cfg: ExperimentConfig, solver: SolverConfig,
                   workers: int = 1) -> atk.AttackModel:
    """Attacker who knows the defense: runs it on the shadow graph and relabels n-hop pairs as linked."""
    ac = cfg.attacks
    shadow_noisy = defend(world.shadow_graph, world.shadow_preds, solver, workers).noisy if solver.theta > 0 \
        else world.shadow_preds
    relabeled = atk.adaptive_relabel(world.shadow_graph, solver.n, setup.shadow_pairs)
    train_set = relabeled.with_features(shadow_noisy, _attrs(world.shadow_data, ac))
    return atk.train_supervised(train_set, ac.epochs, ac.lr, cfg.seed, ac.hidden, "adaptive")


def run_attacks(world: World, setup: AttackSetup, preds: np.ndarray, cfg: ExperimentConfig,
                solver: SolverConfig | None = None, workers: int = 1) -> dict[str, atk.AttackReport]:
    """Score every configured attack against ``preds`` (the released posteriors)."""
    ac = cfg.attacks
    solver = solver or cfg.solver
    out = {}
    test = setup.test.with_features(preds, _attrs(world.data, ac))
    for kind in ac.kinds:
        if kind == "attack0":
            out[kind] = atk.attack0_scores(preds, setup.test)
        elif kind == "supervised":
            out[kind] = atk.evaluate_attack(setup.supervised, test)
        elif kind == "adaptive":
            out[kind] = atk.evaluate_attack(train_adaptive(world, setup, cfg, solver, workers), test)
    return out


# -- sweeps ---------------------------------------------------------------

@dataclass
class SweepPoint:
    value: float
    reports: dict = field(default_factory=dict)
    utility: UtilityReport | None = None
    core_size: int = 0
    delta: float | None = None
    seconds: dict = field(default_factory=dict)
    error: str | None = None


@dataclass
class SweepResult:
    parameter: str
    points: list
    num_nodes: int
    record_timing: bool = False

    def to_dict(self) -> dict:
        pts = []
        for p in self.points:
            d = {
                "value": p.value,
                "core_size": p.core_size,
                "delta": p.delta,
                "error": p.error,
                "utility": p.utility.summary() if p.utility else None,
                "attacks": {k: r.summary() for k, r in sorted(p.reports.items())},
            }
            if self.record_timing:
                d["seconds"] = p.seconds
            pts.append(d)
        return {"parameter": self.parameter, "num_nodes": self.num_nodes, "points": _clean(pts)}


def _clean(obj):
    if isinstance(obj, float):
        return float(fmt(obj))
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def run_sweep(cfg: ExperimentConfig, parameter: str | None = None, values=None, workers: int | None = None,
              world: World | None = None) -> SweepResult:
    """Defend and attack once per parameter value; everything except the swept value is held fixed."""
    parameter = parameter or cfg.sweep.parameter
    values = list(cfg.sweep.values if values is None else values)
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError("sweep values must be strictly increasing")
    if parameter not in ("theta", "n"):
        raise ValueError(f"cannot sweep {parameter!r}")
    workers = cfg.workers if workers is None else workers
    world = world or build_world(cfg)
    setup = prepare_attacks(world, cfg)
    points = []
    for value in values:
        point = SweepPoint(value=value)
        try:
            solver = replace(cfg.solver, **{parameter: int(value) if parameter == "n" else float(value)})
            res = defend(world.graph, world.preds, solver, workers)
            t = time.perf_counter()
            point.reports = run_attacks(world, setup, res.noisy, cfg, solver, workers)
            point.seconds = dict(res.timings, attacks=time.perf_counter() - t)
            point.utility = utility_metrics(world.preds, res.noisy, res.core)
            point.core_size = len(res.core)
            point.delta = res.delta.value
        except Exception as exc:  # recorded; the sweep goes on
            log.exception("sweep point %s=%s failed", parameter, value)
            point.error = f"{type(exc).__name__}: {exc}"
        points.append(point)
    return SweepResult(parameter, points, world.graph.num_nodes, cfg.record_timing)


CSV_COLUMNS = ["param", "attack", "accuracy", "precision", "recall", "auc", "gan", "als", "seconds"]


def _cell(x):
    return "" if x is None else fmt(x)


def report(sweep: SweepResult, out) -> list[Path]:
    """Write ``sweep.json`` and ``tradeoff.csv`` under ``out``."""
    if not sweep.points:
        raise ValueError("empty sweep")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    jpath = out / "sweep.json"
    with open(jpath, "w") as fh:
        json.dump(sweep.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    cpath = out / "tradeoff.csv"
    with open(cpath, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for p in sweep.points:
            u = p.utility
            secs = sum(p.seconds.values()) if sweep.record_timing and p.seconds else None
            for kind, r in sorted(p.reports.items()):
                w.writerow([fmt(p.value), kind, _cell(r.accuracy), _cell(r.precision), _cell(r.recall),
                            _cell(r.auc), _cell(u.gan if u else None), _cell(u.als if u else None), _cell(secs)])
    return [jpath, cpath]


def load_sweep(path) -> SweepResult:
    """Rebuild a ``SweepResult`` (summaries only) from ``sweep.json``."""
    d = json.loads(Path(path).read_text())
    points = []
    for p in d["points"]:
        reports = {
            k: atk.AttackReport(r["attack_kind"], np.zeros(r["n_pairs"]), np.zeros(r["n_pairs"]), None,
                                r["accuracy"], r["precision"], r["recall"], r["auc"], r["threshold"])
            for k, r in p["attacks"].items()
        }
        u = p.get("utility")
        util = UtilityReport(u["gan"], u["als"], np.zeros(0), u["max_distortion"]) if u else None
        points.append(SweepPoint(p["value"], reports, util, p["core_size"], p["delta"], p.get("seconds", {}), p["error"]))
    return SweepResult(d["parameter"], points, d["num_nodes"], any("seconds" in p for p in d["points"]))
