"""Experiment configs, check catalogs, suite runner and CLI."""
from .checks import Check, Context, NotApplicableCheck, catalog
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .suite import CheckResult, VerificationReport, emit_plot_data, export_trajectory, run_suite

__all__ = [
    "Check",
    "CheckResult",
    "ConfigError",
    "Context",
    "ExperimentConfig",
    "NotApplicableCheck",
    "VerificationReport",
    "catalog",
    "emit_plot_data",
    "export_trajectory",
    "load_config",
    "parse_config",
    "run_suite",
]
