"""Exception hierarchy.

Each class carries a short ``category`` used by the CLI for its one-line
machine-parsable error report.
"""


class CftMarlError(Exception):
    category = "error"


class DimensionError(CftMarlError, ValueError):
    category = "dimension"


class NumericalError(CftMarlError, ArithmeticError):
    category = "numerical"


class ConfigError(CftMarlError, ValueError):
    category = "config"


class CheckpointError(CftMarlError, ValueError):
    category = "checkpoint"


class DataError(CftMarlError, ValueError):
    """Malformed input data (CSV files, calibration series)."""

    category = "input"
