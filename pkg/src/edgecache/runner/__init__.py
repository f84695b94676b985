"""Scenario runner: configs, execution and the command-line interface."""
from .config import ConfigError, ConfigReadError, ScenarioConfig, load_config, parse_axis
from .core import (
    ResultTable,
    ScenarioRuntimeError,
    ValidationError,
    run_config,
    run_scenario,
    validate_config,
)
from .scenarios import SCENARIOS

__all__ = [
    "ConfigError",
    "ConfigReadError",
    "ResultTable",
    "SCENARIOS",
    "ScenarioConfig",
    "ScenarioRuntimeError",
    "ValidationError",
    "load_config",
    "parse_axis",
    "run_config",
    "run_scenario",
    "validate_config",
]
