"""Desk-scale simulated flight stack for a jet-powered multibody VTOL."""

from .errors import (
    ConfigError,
    ControllerFailure,
    DomainError,
    IdentifiabilityError,
    JetstackError,
    NumericError,
    SimulationFault,
    SingularityError,
    StaleEstimateError,
)

__all__ = [
    "ConfigError",
    "ControllerFailure",
    "DomainError",
    "IdentifiabilityError",
    "JetstackError",
    "NumericError",
    "SimulationFault",
    "SingularityError",
    "StaleEstimateError",
]

__version__ = "0.1.0"
