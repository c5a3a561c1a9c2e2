"""Experiment harness: configuration, seeded trial execution and CSV output."""

from .config import ConfigError, build_config, parse_text
from .runner import run_bounds, run_capacity, run_rank_experiment, run_simulate

__all__ = ["ConfigError", "build_config", "parse_text", "run_bounds", "run_capacity", "run_rank_experiment", "run_simulate"]
