"""Shared exception types."""


class DimensionError(ValueError):
    """Tensor shapes do not agree for the requested operation."""


class ParseError(ValueError):
    """A dataset file is malformed. Carries the byte offset of the problem."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class DataError(ValueError):
    """Dataset contents cannot satisfy the request (missing files, short classes)."""


class AggregationError(ValueError):
    """Uploaded parameter sets cannot be averaged."""


class MetricError(ValueError):
    """A metric is undefined for the given inputs."""


class ConfigError(ValueError):
    """Bad experiment configuration value or unknown key."""


class CheckpointError(ValueError):
    """Checkpoint file is malformed or does not match the expected model."""
