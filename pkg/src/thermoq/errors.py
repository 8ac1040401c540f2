"""Exception hierarchy shared by the library and the command-line interface.

The CLI maps these onto distinct process exit codes, so keep the three
top-level categories (configuration, data, numerics) stable.
"""

__all__ = ["ThermoqError", "ConfigError", "DataError", "NumericError", "StateError", "IntegrationError"]


class ThermoqError(Exception):
    """Base class for package errors."""


class ConfigError(ThermoqError):
    """Invalid or inconsistent run configuration."""


class DataError(ThermoqError):
    """Malformed dataset, trajectory file, or experimental input."""


class NumericError(ThermoqError):
    """Numerical failure (integration breakdown, non-finite loss, ...)."""


class StateError(NumericError):
    """A state passed to the dynamics is not an admissible density matrix."""


class IntegrationError(NumericError):
    """The ODE integrator failed to produce a solution."""
