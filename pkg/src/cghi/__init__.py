"""Constraint-guided autoencoder health indicators for bearing prognostics."""

from .errors import CGHIError, ConfigError, DataError, IngestionError, NumericError, StateError

__version__ = "0.1.0"

__all__ = ["CGHIError", "ConfigError", "DataError", "IngestionError", "NumericError", "StateError",
           "__version__"]
