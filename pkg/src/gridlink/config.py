"""Experiment configuration: nested dataclasses that round-trip through JSON."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .attacks import ATTACK_KINDS
from .noisecraft import SolverConfig


class ConfigError(ValueError):
    pass


@dataclass
class DatasetConfig:
    # Files take precedence over the synthetic generator when edge_file is set.
    edge_file: str | None = None
    node_file: str | None = None
    pred_file: str | None = None
    blocks: int = 8
    nodes_per_block: int = 25
    p_in: float = 0.15
    p_out: float = 0.01
    attr_dim: int | None = None
    attr_noise: float = 0.3


@dataclass
class GNNConfig:
    hidden: int = 16
    lr: float = 0.1
    epochs: int = 200


@dataclass
class AttackConfig:
    kinds: list = field(default_factory=lambda: list(ATTACK_KINDS))
    num_pos: int = 300
    num_neg: int = 300
    with_attributes: bool = False
    hidden: int = 32
    epochs: int = 300
    lr: float = 0.01

    def __post_init__(self):
        unknown = [k for k in self.kinds if k not in ATTACK_KINDS]
        if unknown:
            raise ConfigError(f"unknown attack(s) {unknown}; choose from {list(ATTACK_KINDS)}")


@dataclass
class SweepConfig:
    parameter: str = "theta"
    values: list = field(default_factory=lambda: [0.0, 0.2, 0.4, 0.6])

    def __post_init__(self):
        if self.parameter not in ("theta", "n"):
            raise ConfigError(f"sweep parameter must be 'theta' or 'n', got {self.parameter!r}")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ConfigError("sweep values must be strictly increasing")
        if not self.values:
            raise ConfigError("sweep needs at least one value")


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = "runs/default"
    workers: int = 1
    defense: bool = True
    record_timing: bool = False
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    gnn: GNNConfig = field(default_factory=GNNConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    attacks: AttackConfig = field(default_factory=AttackConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["solver"] = self.solver.to_dict()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        nested = {"dataset": DatasetConfig, "gnn": GNNConfig, "solver": SolverConfig,
                  "attacks": AttackConfig, "sweep": SweepConfig}
        kwargs = {}
        known = {f.name for f in fields(cls)}
        for key, val in d.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if key in nested:
                kwargs[key] = _build(nested[key], val, key)
            else:
                kwargs[key] = val
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(d)


def _build(klass, val, name):
    if not isinstance(val, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in fields(klass)}
    unknown = set(val) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {sorted(unknown)}")
    try:
        return klass(**val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc
