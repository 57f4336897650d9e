"""Exception hierarchy shared across the solver."""


class CboError(Exception):
    """Base class for all library errors."""


class ConfigError(CboError):
    """Invalid configuration value; raised before any computation starts."""


class DegenerateBoxError(CboError):
    """A box side has zero width, so the barrier has no interior there."""


class BoundaryViolationError(CboError):
    """A barrier quantity was requested at or outside the constraint boundary."""


class NumericError(CboError):
    """A non-finite value surfaced where the math requires finite inputs."""


class SolverFailureError(CboError):
    """An iterative solver failed to converge or detected bad curvature."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual
