"""Experiment harness: configs, orchestration, reports, and the CLI."""

from .config import ConfigError, ExperimentConfig, dump_config, load_config, preset_path
from .runner import (CalibrationOutcome, EnvBundle, RunOutput, build_bundle,
                     calibrate_and_refine, mean_stderr, refine_lambda,
                     run_experiment, run_seeds)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "dump_config",
    "load_config",
    "preset_path",
    "CalibrationOutcome",
    "EnvBundle",
    "RunOutput",
    "build_bundle",
    "calibrate_and_refine",
    "mean_stderr",
    "refine_lambda",
    "run_experiment",
    "run_seeds",
]
