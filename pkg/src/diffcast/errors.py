"""Exception hierarchy shared across the package.

Every error carries a short machine-parseable ``category`` that the CLI
prints as ``error:<category>: <message>`` before exiting nonzero.
"""


class DiffcastError(Exception):
    category = "internal"


class ConfigError(DiffcastError, ValueError):
    """Invalid configuration value, flag, or out-of-range argument."""

    category = "config"


class ShapeError(DiffcastError, ValueError):
    """Array shapes inconsistent with a declared contract."""

    category = "shape"


class DataError(DiffcastError, ValueError):
    """Malformed or insufficient input data."""

    category = "data"


class CheckpointError(DiffcastError, RuntimeError):
    """Unreadable, corrupt, or incompatible checkpoint file."""

    category = "checkpoint"


class TrainingError(DiffcastError, RuntimeError):
    """Training aborted (non-finite loss/gradient, untrained model use)."""

    category = "training"


class GradCheckError(DiffcastError, RuntimeError):
    """Analytic gradients disagree with finite differences."""

    category = "gradcheck"
