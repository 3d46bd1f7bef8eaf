"""Exception taxonomy shared across the toolkit.

Exit-code mapping for the CLI lives in cli.py; library code only raises.
"""


class DimensionError(ValueError):
    """Tensor/layer shapes do not line up."""


class ValidationError(ValueError):
    """A value is outside its allowed domain (labels, probabilities, config)."""


class ConfigError(ValueError):
    """A configuration value violates its invariants."""


class SchemaError(ValueError):
    """CSV columns do not match the configured dataset schema."""


class DataError(ValueError):
    """A dataset is degenerate (empty, single-class, too small to split)."""


class UsageError(RuntimeError):
    """An API contract was broken, e.g. reusing a consumed layer cache."""


class CheckpointFormatError(ValueError):
    """A checkpoint file is corrupt: bad magic, truncation, unknown version."""


class CompatibilityError(ValueError):
    """A checkpoint does not fit the dataset it is applied to."""
