"""Exception taxonomy shared across the package.

Configuration and schema problems map to CLI exit code 2, everything else
to exit code 1.
"""


class FairsearchError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(FairsearchError, ValueError):
    """An array argument has the wrong length or dimensions."""


class ConfigError(FairsearchError, ValueError):
    """An option or parameter value is outside its valid range."""


class SchemaError(FairsearchError, ValueError):
    """A dataset schema is malformed or inconsistent with the data file."""


class DataError(FairsearchError, ValueError):
    """A data row violates the schema; message names row and column."""


class NumericError(FairsearchError, ArithmeticError):
    """A computation produced a non-finite intermediate value."""


class TrainingDiverged(NumericError):
    """Training loss became NaN; message names the epoch."""
