"""Exception types raised across the package."""


class RescrossError(Exception):
    """Base class for all package errors."""


class DegenerateConfig(RescrossError):
    """Two-orbit configuration with a continuum of critical points or a
    singular quadratic form at a minimum (tangent crossing)."""


class SmoothingFails(RescrossError):
    """Tangent vectors at a minimum are parallel, so the sign rule for the
    orbit distance is undefined."""


class NumericalFailure(RescrossError):
    """An iterative solver did not converge."""


class BifurcationNearby(RescrossError):
    """A local minimum could not be continued across a finite-difference
    stencil or a time step."""


class CrossingDegenerate(RescrossError):
    """A crossing event happened at a degenerate configuration."""


class EventAccumulation(RescrossError):
    """Crossing times are accumulating."""


class Collision(RescrossError):
    """The asteroid came too close to the Sun or to a planet."""


class OutOfRange(RescrossError):
    """Requested time lies outside an ephemeris table."""


class EphemerisParseError(RescrossError):
    """Malformed ephemeris table file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Divergent(RescrossError):
    """Averaged Hamiltonian evaluated exactly at a collision angle."""


class ContractViolation(RescrossError):
    """Function called outside its stated domain."""


class ConfigError(RescrossError):
    """Invalid run configuration; ``field`` names the offending key path."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
