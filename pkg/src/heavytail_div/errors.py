"""Exception hierarchy shared by all modules.

The CLI maps ``ConfigError`` and the ``ValueError`` family to exit code 2 and
``CapabilityError`` (and its subclasses) to exit code 3.
"""


class ParameterError(ValueError):
    """Invalid model or distribution parameter."""


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


class ShapeError(ValueError):
    """Dimension mismatch between a model and an argument."""


class SampleSizeError(ValueError):
    """Too few draws to populate the requested tail."""

    def __init__(self, message, required_n=None):
        super().__init__(message)
        self.required_n = required_n


class ConfigError(ValueError):
    """Malformed run configuration; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class AccuracyError(ArithmeticError):
    """Quadrature did not reach the requested tolerance."""

    def __init__(self, message, estimate, error_bound):
        super().__init__(f"{message} (estimate={estimate!r}, error bound={error_bound!r})")
        self.estimate = estimate
        self.error_bound = error_bound


class CapabilityError(RuntimeError):
    """The operation is not available for this model."""


class RateUnavailableError(CapabilityError):
    """The second-order signed measure is infinite or not catalogued."""


class DegenerateEstimateWarning(UserWarning):
    """Monte Carlo estimate with zero hits; carries a one-sided bound."""
