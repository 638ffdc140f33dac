"""Scenario files, Monte-Carlo runs and the command line interface."""
from .runner import (CSV_COLUMNS, MetricsReport, ResultRow, generate_batch, run_correlation_sweep,
                     run_crossover, run_scenario, write_outputs)
from .scenario import BUILTINS, Scenario, ScenarioError, SolverOptions, load, loads

__all__ = [
    "BUILTINS", "CSV_COLUMNS", "MetricsReport", "ResultRow", "Scenario", "ScenarioError",
    "SolverOptions", "generate_batch", "load", "loads", "run_correlation_sweep", "run_crossover",
    "run_scenario", "write_outputs",
]
