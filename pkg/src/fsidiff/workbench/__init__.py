"""Experiment plumbing: configuration, diagnostics, optimization, I/O and the CLI."""

from .config import SimConfig, load_config, parse_config
from .diagnostics import (ForceHistory, drag_lift_coefficients, normalize_max, shedding_statistics,
                          strouhal_number)
from .experiments import (Experiment, cylinder_experiment, from_config, run_experiment, run_simulation,
                          tail_experiment, tank_tail_experiment)
from .optimizer import BfgsResult, bfgs_optimize

__all__ = ["SimConfig", "load_config", "parse_config", "ForceHistory", "drag_lift_coefficients",
           "normalize_max", "shedding_statistics", "strouhal_number", "Experiment", "cylinder_experiment",
           "from_config", "run_experiment", "run_simulation", "tail_experiment", "tank_tail_experiment",
           "BfgsResult", "bfgs_optimize"]
