"""Compiled vs pure-Python kernels on the default synthetic instance.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Times the per-node solve over a whole core set (default cap and K=20), a round of capped BFS and
batches of projections, and checks the two backends agree.
"""

import argparse
import time

import numpy as np

from gridlink import _pykernels
from gridlink.config import ExperimentConfig
from gridlink.coresel import estimate_delta, select_core
from gridlink.evalkit import synthetic_posteriors
from gridlink.noisecraft import build_objective

try:
    from gridlink import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if _ckernels is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation` first")

    cfg = ExperimentConfig(seed=args.seed)
    graph, _, preds, _ = synthetic_posteriors(cfg, args.seed)
    core = select_core(graph, preds, estimate_delta(graph, preds, cfg.solver.n))
    sc = cfg.solver
    objs = [(i, build_objective(graph, preds, i, sc, core.delta)) for i in core.members]
    rng = np.random.default_rng(args.seed)
    raw = rng.normal(0, 0.3, (2000, preds.shape[1]))
    rows = rng.integers(0, len(preds), 2000)

    def solves(k, iters=sc.max_iters):
        return lambda: [k.solve_node(preds[i], o.P, o.Q, o.q_const, 0, sc.theta, sc.alpha, sc.beta, sc.eps,
                                     iters, True)[0] for i, o in objs]

    def bfs(k):
        return lambda: [k.bfs_capped(graph.indptr, graph.indices, s, sc.n) for s in range(graph.num_nodes)]

    def projections(k):
        return lambda: [k.constraint_check(raw[t], preds[r], sc.theta, True, int(np.argmax(preds[r])))
                        for t, r in enumerate(rows)]

    print(f"instance: {graph.num_nodes} nodes, {graph.num_edges} edges, core {len(core)}")
    print(f"{'kernel':<22}{'python s':>10}{'cython s':>10}{'speedup':>9}  agree")
    # K=20: short fixed iteration cap, the setting usually quoted for timing comparisons
    for name, make in (("solve_node x core", solves), ("solve_node K=20", lambda k: solves(k, 20)),
                       ("bfs_capped x nodes", bfs),
                       ("constraint_check x2000", projections)):
        tp, op = best_of(make(_pykernels), args.repeat)
        tc, oc = best_of(make(_ckernels), args.repeat)
        agree = all(np.allclose(a, b, atol=1e-8) for a, b in zip(op, oc))
        print(f"{name:<22}{tp:>10.4f}{tc:>10.4f}{tp / tc:>8.1f}x  {agree}")


if __name__ == "__main__":
    main()
