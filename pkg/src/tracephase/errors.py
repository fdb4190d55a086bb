"""Exception types raised across the package."""


class TracePhaseError(Exception):
    """Base class for all package errors."""


class ConfigError(TracePhaseError):
    pass


class DegenerateGradient(TracePhaseError):
    """Gradient of the level set (or of its interpolant) is too small to normalize."""


class SolverFailure(TracePhaseError):
    pass


class NoConvergence(SolverFailure):
    """An iteration did not converge.

    For linear solves ``x`` holds the best iterate and ``residual`` its
    true residual norm.
    """

    def __init__(self, message, x=None, residual=None, iterations=None):
        super().__init__(message)
        self.x = x
        self.residual = residual
        self.iterations = iterations


class BreakdownError(SolverFailure):
    pass


class NonFiniteState(TracePhaseError):
    pass


class EmptyBand(TracePhaseError):
    pass


class ResourceLimit(TracePhaseError):
    pass


class NegativeWeight(TracePhaseError):
    pass


class NoInterface(TracePhaseError):
    pass


class IoError(TracePhaseError):
    """Reading or writing an artifact failed."""
