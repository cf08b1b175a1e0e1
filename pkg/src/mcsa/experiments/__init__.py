from .config import ConfigError, ExperimentConfig, parse_config, parse_config_file
from .records import CSV_COLUMNS, RunRecord, aggregate_quantiles, read_csv, write_csv
from .runners import run_experiment

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "parse_config_file",
    "CSV_COLUMNS",
    "RunRecord",
    "aggregate_quantiles",
    "read_csv",
    "write_csv",
    "run_experiment",
]
