"""Exception types shared across the package."""


class LgaError(Exception):
    """Base class for all library errors."""

    category = "error"


class DomainError(LgaError, ValueError):
    """An argument violates an operation's precondition."""

    category = "domain-error"


class TrainingDivergedError(LgaError):
    """Batch training aborted because the loss exploded."""

    category = "training-diverged"


class MetricUndefinedError(LgaError):
    """A metric cannot be computed from the given data (e.g. zero variance)."""

    category = "metric-undefined"


class FormatError(LgaError, ValueError):
    """A serialized file or log line could not be parsed."""

    category = "format-error"


class ConfigError(LgaError, ValueError):
    """An experiment or CLI configuration is invalid."""

    category = "config-error"
