"""Link-disguise defense for GNN prediction vectors, link-stealing attacks and utility metrics."""

from ._backend import BACKEND
from .config import ExperimentConfig
from .coresel import CoreSet, estimate_delta, select_core
from .evalkit import run_sweep, utility_metrics
from .graphio import Graph, NodeData, generate_synthetic
from .noisecraft import NoisePlan, SolverConfig, apply_plan, craft_plan

__version__ = "0.1.0"
