"""Exception taxonomy shared across the stack."""


class JetstackError(Exception):
    """Base class for all stack errors."""


class DomainError(JetstackError, ValueError):
    """An input violates a documented precondition (limits, ranges, shapes)."""


class NumericError(JetstackError, ArithmeticError):
    """A numerical operation produced non-finite or unusable values."""


class IdentifiabilityError(JetstackError, ValueError):
    """Regression problem is rank deficient; carries the deficient directions."""

    def __init__(self, message: str, deficient_directions=None):
        super().__init__(message)
        self.deficient_directions = deficient_directions


class SingularityError(JetstackError, ArithmeticError):
    """Operating point too close to the Euler-angle singularity."""


class ConfigError(JetstackError, ValueError):
    """Scenario/robot config failed schema validation; message carries the key path."""


class SimulationFault(JetstackError, RuntimeError):
    """Simulation produced a non-finite state; world is frozen."""


class StaleEstimateError(JetstackError, RuntimeError):
    """Controller input older than the freshness contract allows."""


class ControllerFailure(JetstackError, RuntimeError):
    """Two consecutive controller failures; the runtime must shut down."""
