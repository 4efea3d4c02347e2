"""Declarative Monte Carlo experiments and their reports."""

from .config import ExperimentConfig, load_config, build_config, parse_config_text, strength_ladder
from .report import ExperimentReport
from .runners import (
    run_condensation,
    run_energy_bounds,
    run_experiment,
    run_gap_law,
    run_lifshitz,
    run_ls_compare,
    trial_seed,
)
