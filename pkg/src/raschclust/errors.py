"""Exception types shared across the package."""


class RaschClustError(Exception):
    """Base class for all package-specific errors."""


class DataError(RaschClustError):
    """Malformed input data: non-binary cells, ragged rows, duplicate ids."""


class ConfigError(RaschClustError):
    """Invalid configuration: bad prior spec, impossible chain settings."""


class DimensionError(DataError):
    """Shapes of responses and parameters do not line up."""


class ChainDivergedError(RaschClustError):
    """The log-likelihood became non-finite during sampling."""


class DegenerateChainError(RaschClustError):
    """No stored draw attains the modal cluster count."""


class MetricUndefinedError(RaschClustError):
    """A clustering score has a zero denominator (reported as n/a)."""
