from .config import (
    ConfigError,
    ExperimentConfig,
    default_config,
    format_config,
    load_config,
    parse_config_text,
    validate_config,
)
from .export import aggregate, export_curves
from .runner import TRACE_COLUMNS, TrainingRunner, run_experiment

__all__ = [
    "ConfigError", "ExperimentConfig", "TRACE_COLUMNS", "TrainingRunner", "aggregate",
    "default_config", "export_curves", "format_config", "load_config", "parse_config_text",
    "run_experiment", "validate_config",
]
