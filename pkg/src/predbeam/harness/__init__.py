"""Scenario configuration, Monte-Carlo runs, metrics and file output."""

from .config import (
    ConfigError,
    ScenarioConfig,
    comparison_config,
    load_config,
    multi_vehicle_config,
    single_vehicle_config,
    table_i_vehicles,
)
from .run import EpochRecord, UnrecoverableAllocation, run_scenario, run_trial

__all__ = [
    "ConfigError", "ScenarioConfig", "comparison_config", "load_config",
    "multi_vehicle_config", "single_vehicle_config", "table_i_vehicles",
    "EpochRecord", "UnrecoverableAllocation", "run_scenario", "run_trial",
]
