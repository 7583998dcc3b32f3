"""Deterministic federated-learning simulator with a GAN-based
information-stealing adversary."""

from .errors import (AggregationError, CheckpointError, ConfigError, DataError,
                     DimensionError, MetricError, ParseError)
from .models import ParamSet
from .runner import ExperimentConfig, build_experiment, parse_config, run_experiment
from .tensor import AdamState, Tensor

__version__ = "0.1.0"

__all__ = [
    "AdamState", "AggregationError", "CheckpointError", "ConfigError",
    "DataError", "DimensionError", "ExperimentConfig", "MetricError",
    "ParamSet", "ParseError", "Tensor", "build_experiment", "parse_config",
    "run_experiment", "__version__",
]
