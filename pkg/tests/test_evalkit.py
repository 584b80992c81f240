import csv

import numpy as np
import pytest

from gridlink.config import ConfigError, ExperimentConfig
from gridlink.coresel import CoreSet
from gridlink.evalkit import (
    CSV_COLUMNS,
    build_world,
    defend,
    load_sweep,
    prepare_attacks,
    report,
    run_attacks,
    run_sweep,
    utility_metrics,
)
from gridlink.noisecraft import check_plan


def small_cfg(**over) -> ExperimentConfig:
    d = {
        "seed": 3,
        "dataset": {"blocks": 3, "nodes_per_block": 20, "p_in": 0.2, "p_out": 0.02},
        "gnn": {"epochs": 60},
        "attacks": {"kinds": ["attack0", "supervised"], "num_pos": 40, "num_neg": 40, "epochs": 40},
    }
    d.update(over)
    return ExperimentConfig.from_dict(d)


@pytest.fixture(scope="module")
def world():
    return build_world(small_cfg())


def _core(members):
    m = np.asarray(members)
    return CoreSet(m, 0.0, np.zeros(0), np.zeros(0), np.zeros(0, int), np.zeros(0, int))


def test_gan_hand_example():
    orig = np.array([[0.7, 0.3], [0.6, 0.4], [0.2, 0.8], [0.9, 0.1], [0.5, 0.5]])
    noisy = orig.copy()
    noisy[1] = [0.5, 0.5]   # L1 change 0.2 on the only core row
    rep = utility_metrics(orig, noisy, _core([1]))
    assert rep.gan == pytest.approx(0.2 / 5)
    assert rep.per_node_l1[1] == pytest.approx(0.2)
    assert rep.max_distortion == pytest.approx(0.2)


def test_als_counts_flips():
    orig = np.array([[0.7, 0.3], [0.6, 0.4], [0.2, 0.8], [0.9, 0.1]])
    noisy = orig.copy()
    noisy[0] = [0.3, 0.7]
    rep = utility_metrics(orig, noisy)
    assert rep.als == 0.25
    assert utility_metrics(orig, orig).summary() == {"gan": 0.0, "als": 0.0, "max_distortion": 0.0}
    with pytest.raises(ValueError):
        utility_metrics(orig, orig[:2])


def test_defense_keeps_labels(world):
    res = defend(world.graph, world.preds, small_cfg().solver, workers=2)
    assert check_plan(world.preds, res.plan) == []
    u = utility_metrics(world.preds, res.noisy, res.core)
    assert u.als == 0.0
    assert u.gan <= 0.4 * len(res.core) / world.graph.num_nodes + 1e-12


def test_theta_zero_matches_baseline(world):
    cfg = small_cfg()
    sweep = run_sweep(cfg, "theta", [0.0], world=world)
    base = run_attacks(world, prepare_attacks(world, cfg), world.preds, cfg)
    pt = sweep.points[0]
    assert pt.error is None and pt.utility.gan == 0.0
    for kind, rep in base.items():
        assert pt.reports[kind].summary() == rep.summary()


def test_sweep_rejects_bad_values(world):
    with pytest.raises(ValueError, match="increasing"):
        run_sweep(small_cfg(), "theta", [0.4, 0.2], world=world)
    with pytest.raises(ValueError):
        run_sweep(small_cfg(), "alpha", [0.1], world=world)


def test_report_and_reload(tmp_path, world):
    cfg = small_cfg()
    sweep = run_sweep(cfg, "theta", [0.0, 0.4], world=world)
    report(sweep, tmp_path)
    with open(tmp_path / "tradeoff.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == CSV_COLUMNS
    assert [(r[0], r[1]) for r in rows[1:]] == [("0.0", "attack0"), ("0.0", "supervised"),
                                               ("0.4", "attack0"), ("0.4", "supervised")]
    assert all(r[-1] == "" for r in rows[1:])  # timing off by default
    again = tmp_path / "again"
    report(load_sweep(tmp_path / "sweep.json"), again)
    assert (again / "tradeoff.csv").read_text() == (tmp_path / "tradeoff.csv").read_text()
    assert (again / "sweep.json").read_text() == (tmp_path / "sweep.json").read_text()


def test_sweep_deterministic(world):
    cfg = small_cfg()
    a = run_sweep(cfg, "n", [2, 3], world=world).to_dict()
    b = run_sweep(cfg, "n", [2, 3], workers=3, world=world).to_dict()
    assert a == b


def test_config_roundtrip_and_errors(tmp_path):
    cfg = small_cfg()
    p = tmp_path / "c.json"
    p.write_text(cfg.to_json())
    assert ExperimentConfig.load(p) == cfg
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_dict({"sede": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"attacks": {"kinds": ["nope"]}})
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.json")
