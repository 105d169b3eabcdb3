"""Experiment runner, result tables and command-line interface."""

from fimmimo.capacity import eigenchannel_gains
from fimmimo.harness.config import ExperimentConfig, config_from_dict, load_config, validate_config
from fimmimo.harness.experiment import (
    ResultTable,
    convergence_trace_experiment,
    derive_seed,
    resolve_scenario,
    run_experiment,
)

__all__ = [
    "ExperimentConfig",
    "ResultTable",
    "config_from_dict",
    "convergence_trace_experiment",
    "derive_seed",
    "eigenchannel_gains",
    "load_config",
    "resolve_scenario",
    "run_experiment",
    "validate_config",
]
