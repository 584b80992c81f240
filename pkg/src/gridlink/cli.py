"""``gridlink`` command line: generate | defend | attack | sweep | report."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import evalkit
from .attacks import ATTACK_KINDS, AttackError
from .config import ConfigError, ExperimentConfig
from .graphio import Graph, GraphError, NodeData, load_graph, read_edge_file, write_edge_file, write_node_file
from .noisecraft import InvariantViolation, check_plan
from .simkit import PredictionError, load_predictions, save_predictions, tied_argmax_rows

log = logging.getLogger("gridlink")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 2, 3, 4
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    pass


# -- config plumbing -------------------------------------------------------

def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.solver.seed = args.seed
    solver = {}
    if args.theta is not None:
        solver["theta"] = args.theta
    if args.n is not None:
        solver["n"] = args.n
    if solver:
        try:
            cfg.solver = replace(cfg.solver, **solver)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg.workers = args.workers
    elif args.config is None:
        cfg.workers = os.cpu_count() or 1
    if args.out is not None:
        cfg.out = args.out
    ds = cfg.dataset
    for flag, attr in (("edges", "edge_file"), ("nodes", "node_file"), ("preds", "pred_file")):
        val = getattr(args, flag, None)
        if val is not None:
            setattr(ds, attr, val)
    if getattr(args, "attacks", None):
        kinds = [k.strip() for k in args.attacks.split(",") if k.strip()]
        unknown = [k for k in kinds if k not in ATTACK_KINDS]
        if unknown:
            raise ConfigError(f"unknown attack(s) {unknown}; choose from {list(ATTACK_KINDS)}")
        cfg.attacks.kinds = kinds
    if getattr(args, "no_defense", False):
        cfg.defense = False
    if getattr(args, "param", None):
        cfg.sweep.parameter = args.param
    if getattr(args, "values", None):
        try:
            vals = [float(v) for v in args.values.split(",")]
        except ValueError:
            raise ConfigError(f"--values: expected comma-separated numbers, got {args.values!r}") from None
        cfg.sweep = type(cfg.sweep)(cfg.sweep.parameter, vals)
    return cfg


def echo_config(cfg: ExperimentConfig, out: Path) -> None:
    # worker count is an execution detail; leaving it out keeps outputs identical across --workers
    d = cfg.to_dict()
    d.pop("workers")
    (out / "config.resolved.json").write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")


def _outdir(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_file(path, what):
    if not path:
        raise UsageError(f"no {what} given (pass it on the command line or in the config)")
    if not Path(path).is_file():
        raise UsageError(f"{what} not found: {path}")


def load_release(cfg) -> tuple[Graph, NodeData | None, np.ndarray]:
    """Graph, node data (may be None) and released posteriors from the configured files."""
    ds = cfg.dataset
    _require_file(ds.pred_file, "prediction file")
    _require_file(ds.edge_file, "edge file")
    preds = load_predictions(ds.pred_file)
    if ds.node_file:
        _require_file(ds.node_file, "node file")
        graph, data = load_graph(ds.edge_file, ds.node_file)
        if graph.num_nodes != len(preds):
            raise GraphError(f"{len(preds)} prediction rows for {graph.num_nodes} nodes")
    else:
        data = None
        g = read_edge_file(ds.edge_file)
        if g.num_nodes > len(preds):
            raise GraphError(f"edge file references node {g.num_nodes - 1}; only {len(preds)} prediction rows")
        graph = Graph.from_edges(len(preds), g.edges)
    return graph, data, preds


# -- commands --------------------------------------------------------------

def cmd_generate(cfg: ExperimentConfig) -> int:
    out = _outdir(cfg)
    echo_config(cfg, out)
    graph, data, preds, model = evalkit.synthetic_posteriors(cfg, cfg.seed)
    write_edge_file(out / "edges.tsv", graph)
    write_node_file(out / "nodes.csv", data)
    save_predictions(out / "predictions.csv", preds)
    (out / "model.json").write_text(model.to_json())
    print(f"generated {graph.num_nodes} nodes, {graph.num_edges} edges, {preds.shape[1]} classes "
          f"(toy GCN train accuracy {model.train_accuracy:.3f}) -> {out}")
    return EXIT_OK


def _check_ties(preds):
    tied = tied_argmax_rows(preds)
    if tied:
        shown = ", ".join(map(str, tied[:50])) + (" ..." if len(tied) > 50 else "")
        raise PredictionError(f"{len(tied)} node(s) have a tied argmax: {shown}")


def cmd_defend(cfg: ExperimentConfig) -> int:
    graph, _, preds = load_release(cfg)
    _check_ties(preds)
    out = _outdir(cfg)
    echo_config(cfg, out)
    res = evalkit.defend(graph, preds, cfg.solver, cfg.workers)
    res.core.write(out / "core.csv", out / "core.json")
    res.plan.write(out / "noise.csv", out / "noise.json")
    save_predictions(out / "noisy_predictions.csv", res.noisy)
    problems = check_plan(preds, res.plan)
    util = evalkit.utility_metrics(preds, res.noisy, res.core)
    print(f"delta={res.delta.value:.6g} ({res.delta.source}), core={len(res.core)}/{graph.num_nodes}, "
          f"GAN={util.gan:.6g}, ALS={util.als:.6g}")
    print(f"constraint violations: {len(problems)}")
    if problems:
        for p in problems[:20]:
            print("  " + p, file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def _world_for_attack(cfg):
    if cfg.dataset.edge_file or cfg.dataset.pred_file:
        graph, data, preds = load_release(cfg)
        if data is None:
            if cfg.attacks.with_attributes:
                raise UsageError("attribute features need a node file")
            data = NodeData(np.zeros((graph.num_nodes, 1)), preds.argmax(axis=1))
        sg, sd, sp, _ = evalkit.synthetic_posteriors(cfg, cfg.seed + evalkit.SHADOW_SEED_OFFSET)
        return evalkit.World(graph, data, preds, sg, sd, sp)
    return evalkit.build_world(cfg)


def cmd_attack(cfg: ExperimentConfig) -> int:
    world = _world_for_attack(cfg)
    _check_ties(world.preds)
    out = _outdir(cfg)
    echo_config(cfg, out)
    setup = evalkit.prepare_attacks(world, cfg)
    phases = {"baseline": world.preds}
    if cfg.defense:
        phases["defended"] = evalkit.defend(world.graph, world.preds, cfg.solver, cfg.workers).noisy
    summary = {}
    for phase, preds in phases.items():
        reports = evalkit.run_attacks(world, setup, preds, cfg, cfg.solver, cfg.workers)
        for kind, rep in reports.items():
            rep.write_json(out / f"attack_{kind}_{phase}.json")
            rep.write_scores(out / f"scores_{kind}_{phase}.csv", setup.test.pairs)
            summary.setdefault(kind, {})[phase] = rep
    for kind, by_phase in summary.items():
        line = "  ".join(f"{ph}: auc={_f(r.auc)} acc={_f(r.accuracy)} prec={_f(r.precision)} rec={_f(r.recall)}"
                         for ph, r in by_phase.items())
        print(f"{kind:<10} {line}")
    return EXIT_OK


def _f(x):
    return "n/a" if x is None else f"{x:.3f}"


def cmd_sweep(cfg: ExperimentConfig) -> int:
    out = _outdir(cfg)
    echo_config(cfg, out)
    world = _world_for_attack(cfg) if cfg.dataset.edge_file or cfg.dataset.pred_file else None
    if world is not None:
        _check_ties(world.preds)
    sweep = evalkit.run_sweep(cfg, world=world)
    evalkit.report(sweep, out)
    _print_sweep(sweep)
    failed = [p for p in sweep.points if p.error]
    for p in failed:
        print(f"point {sweep.parameter}={p.value} failed: {p.error}", file=sys.stderr)
    return EXIT_INVARIANT if any("InvariantViolation" in p.error for p in failed) else EXIT_OK


def _print_sweep(sweep):
    print(f"{sweep.parameter:>8} {'attack':<10} {'auc':>6} {'acc':>6} {'GAN':>8} {'core':>5}")
    for p in sweep.points:
        for kind, r in sorted(p.reports.items()):
            print(f"{p.value:>8g} {kind:<10} {_f(r.auc):>6} {_f(r.accuracy):>6} "
                  f"{p.utility.gan:>8.4f} {p.core_size:>5}")


def cmd_report(cfg: ExperimentConfig, source) -> int:
    src = Path(source or Path(cfg.out) / "sweep.json")
    if not src.is_file():
        raise UsageError(f"sweep file not found: {src}")
    try:
        sweep = evalkit.load_sweep(src)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise UsageError(f"{src}: not a sweep summary ({exc})") from None
    out = _outdir(cfg)
    echo_config(cfg, out)
    evalkit.report(sweep, out)
    _print_sweep(sweep)
    return EXIT_OK


# -- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment config JSON")
    common.add_argument("--seed", type=int)
    common.add_argument("--theta", type=float, help="distortion budget")
    common.add_argument("--n", type=int, help="hop distance of the disguise targets")
    common.add_argument("--workers", type=int, help="threads for the per-node solves (default: all cores)")
    common.add_argument("--out", metavar="DIR")

    files = argparse.ArgumentParser(add_help=False)
    files.add_argument("--edges", metavar="PATH", help="edge file (u<TAB>v)")
    files.add_argument("--nodes", metavar="PATH", help="node file (id,label,f0..)")
    files.add_argument("--preds", metavar="PATH", help="prediction file (id,p0..)")

    attacks = argparse.ArgumentParser(add_help=False)
    attacks.add_argument("--attacks", help=f"comma-separated subset of {','.join(ATTACK_KINDS)}")

    p = argparse.ArgumentParser(prog="gridlink", description="Link-disguise defense and link-stealing attack experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="synthetic graph + toy GCN posteriors")
    sub.add_parser("defend", parents=[common, files], help="select core nodes and perturb their posteriors")
    a = sub.add_parser("attack", parents=[common, files, attacks], help="attack reports before/after defense")
    a.add_argument("--no-defense", action="store_true", help="baseline reports only")
    s = sub.add_parser("sweep", parents=[common, files, attacks], help="sweep theta or n")
    s.add_argument("--param", choices=["theta", "n"])
    s.add_argument("--values", help="comma-separated, strictly increasing")
    r = sub.add_parser("report", parents=[common], help="re-render tables from a sweep.json")
    r.add_argument("--from", dest="source", metavar="PATH", help="sweep.json (default: OUT/sweep.json)")
    return p


def _setup_logging() -> None:
    raw = os.environ.get("GRID_LOG_LEVEL", "warn").lower()
    if raw not in LOG_LEVELS:
        raise UsageError(f"GRID_LOG_LEVEL must be one of {sorted(LOG_LEVELS)}, got {raw!r}")
    logging.basicConfig(level=LOG_LEVELS[raw], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _setup_logging()
        cfg = resolve_config(args)
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "defend":
            return cmd_defend(cfg)
        if args.command == "attack":
            return cmd_attack(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        return cmd_report(cfg, args.source)
    except (ConfigError, UsageError, AttackError) as exc:
        print(f"gridlink: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GraphError, PredictionError) as exc:
        print(f"gridlink: invalid data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvariantViolation as exc:
        print(f"gridlink: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
