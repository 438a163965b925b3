"""Config ingestion, experiment drivers, CSV/report output and the CLI."""
from .config import ConfigError, ExperimentConfig, parse_config, parse_config_text
from .experiments import epsilon_sweep, rho_sweep_cmd
from .output import Report, Table, emit_csv, emit_report

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "parse_config_text",
    "epsilon_sweep",
    "rho_sweep_cmd",
    "Report",
    "Table",
    "emit_csv",
    "emit_report",
]
