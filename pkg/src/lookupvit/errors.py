"""Exception types raised across the package."""


class LookupViTError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(LookupViTError, ValueError):
    """Array extents are incompatible with the requested operation."""


class ConfigurationError(LookupViTError, ValueError):
    """A hyperparameter or configuration value is invalid."""


class ContractError(LookupViTError, RuntimeError):
    """A call violated an API precondition (wrong state, stale inputs, ...)."""


class NonFiniteError(LookupViTError, FloatingPointError):
    """A kernel produced NaN or Inf."""


class SchemaError(ConfigurationError):
    """A config file or binary artifact does not match its documented schema."""
