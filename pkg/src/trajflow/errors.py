"""Exception hierarchy shared by the pipeline stages."""


class TrajflowError(Exception):
    """Base class for all errors raised by trajflow."""


class InputError(TrajflowError):
    """Input data could not be read or is structurally unusable."""


class ConfigError(TrajflowError, ValueError):
    """A parameter is outside its valid domain."""


class InvalidPartitioningError(TrajflowError, ValueError):
    """A row/column grouping has empty groups or the wrong size."""


class OracleLimitError(TrajflowError, ValueError):
    """Instance is too large for exhaustive evaluation."""


class InvariantError(TrajflowError, AssertionError):
    """An internal consistency check failed."""
