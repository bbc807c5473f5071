"""Exception hierarchy; the CLI maps these onto exit codes."""


class WiggleguideError(Exception):
    """Base class for package errors."""


class ConfigError(WiggleguideError, ValueError):
    """Experiment configuration failed validation."""


class PreconditionError(WiggleguideError, ValueError):
    """An operation was called outside its admissible parameter range."""


class SpectralGapError(PreconditionError):
    """Spectral parameter too close to the discrete spectrum.

    ``distance`` is the distance from the requested parameter to the nearest
    Ritz value (or to the excluded region).
    """

    def __init__(self, message, distance):
        super().__init__(f"{message} (distance {distance:.3e})")
        self.distance = float(distance)


class ConvergenceError(WiggleguideError, RuntimeError):
    """Iterative solver stopped without reaching its tolerance."""

    def __init__(self, message, residual=float("nan"), index=None):
        super().__init__(message)
        self.residual = residual
        self.index = index


class BoundViolation(WiggleguideError, AssertionError):
    """A bound that must hold by construction was violated numerically."""
