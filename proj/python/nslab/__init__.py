"""Picard-Leray scheme for Navier-Stokes with Hormander diffusions."""

from ._core import (
    ConfigError,
    __version__,
    decay_budget_check,
    growth_regression,
    hormander_check,
    run,
    sample_paths,
    set_threads,
    taylor_green,
    threads,
)

__all__ = [
    "ConfigError",
    "__version__",
    "decay_budget_check",
    "growth_regression",
    "hormander_check",
    "run",
    "sample_paths",
    "set_threads",
    "taylor_green",
    "threads",
]
