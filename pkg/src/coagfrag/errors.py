"""Exception types shared across the package."""


class CoagFragError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(CoagFragError):
    """Raised when a scenario or model configuration is invalid."""


class WeightError(CoagFragError):
    """Raised when a weight sequence violates its admissibility constraints."""


class AssumptionError(CoagFragError):
    """Raised when an operation requires verified assumptions that do not hold."""


class SolverError(CoagFragError):
    """Raised when the mild solver cannot proceed (outside of a clean blow-up stop)."""


class StiffnessError(CoagFragError):
    """Raised when the explicit reference integrator underflows its step size.

    The message suggests enabling the diagonal integrating-factor splitting,
    which removes the linear decay part from the stability constraint.
    """
