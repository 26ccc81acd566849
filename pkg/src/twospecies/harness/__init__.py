"""Experiment harness: configuration, pipelines and file output."""

from .config import ConfigError, ExperimentConfig, from_dict, load_config
from .experiments import ComparisonReport, ExperimentReport, compare_fields, run_experiment

__all__ = [
    "ComparisonReport",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentReport",
    "compare_fields",
    "from_dict",
    "load_config",
    "run_experiment",
]
