"""Experiment orchestration: configuration, seeded runs, sweeps, replay and the CLI."""
from .config import ConfigError, ExperimentConfig, PolicySpec, load_config, preset
from .runner import EnvironmentTrace, ExperimentResult, run_experiment, write_outputs

__all__ = [
    "ConfigError", "EnvironmentTrace", "ExperimentConfig", "ExperimentResult", "PolicySpec", "load_config",
    "preset", "run_experiment", "write_outputs",
]
