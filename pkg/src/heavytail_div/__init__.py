"""Diversification of Value-at-Risk under multivariate second-order regular variation."""
from . import aggregate, empirical, measures, models, tails
from .errors import (
    AccuracyError,
    CapabilityError,
    ConfigError,
    DegenerateEstimateWarning,
    DomainError,
    ParameterError,
    RateUnavailableError,
    SampleSizeError,
    ShapeError,
)

__version__ = "0.1.0"

__all__ = [
    "aggregate",
    "empirical",
    "measures",
    "models",
    "tails",
    "AccuracyError",
    "CapabilityError",
    "ConfigError",
    "DegenerateEstimateWarning",
    "DomainError",
    "ParameterError",
    "RateUnavailableError",
    "SampleSizeError",
    "ShapeError",
]
