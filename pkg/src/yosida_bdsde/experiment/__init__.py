"""Configuration-driven experiments: problem catalog, config files, runs and suites."""

from .catalog import BUILTIN, DelaySpec, ExperimentSpec, builtin, describe_catalog
from .config import ConfigError, dump_spec, load_spec, parse_spec, with_overrides
from .runner import RunResult, run_experiment
from .suite import SELECTORS, SuiteReport, run_property_suite

__all__ = [
    "BUILTIN", "DelaySpec", "ExperimentSpec", "builtin", "describe_catalog",
    "ConfigError", "dump_spec", "load_spec", "parse_spec", "with_overrides",
    "RunResult", "run_experiment", "SELECTORS", "SuiteReport", "run_property_suite",
]
