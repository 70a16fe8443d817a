"""Configuration, orchestration, plotting and the command-line interface."""

from .config import ExperimentSpec, dump_config, load_config, parse_config
from .datasets import resolve_dataset
from .plotting import moving_average, plot_metrics, sample_grid
from .runner import RunOutcome, Runner, RunRefused, run_experiment

__all__ = ["ExperimentSpec", "parse_config", "load_config", "dump_config", "resolve_dataset",
           "plot_metrics", "moving_average", "sample_grid", "Runner", "RunOutcome", "RunRefused",
           "run_experiment"]
