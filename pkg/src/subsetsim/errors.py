"""Exception hierarchy shared by the engine and the command line."""


class SubsetSimError(Exception):
    """Base class for engine errors."""


class DomainError(SubsetSimError, ValueError):
    """An argument lies outside the domain of a mathematical function."""


class ConfigError(SubsetSimError, ValueError):
    """Invalid model or run configuration."""


class ModelError(SubsetSimError, RuntimeError):
    """The performance function misbehaved (e.g. returned a non-finite value)."""


class DegenerateLevelError(SubsetSimError):
    """All performance values at a level coincide, so no threshold can split them."""


class UndefinedCorrelationError(SubsetSimError):
    """Indicator sequences are constant; the lag-0 autocovariance vanishes."""


class TruncationError(SubsetSimError):
    """A series did not converge within the allowed number of terms."""

    def __init__(self, message, partial_sum=None, bound=None):
        super().__init__(message)
        self.partial_sum = partial_sum
        self.bound = bound


class QuadratureError(SubsetSimError):
    """Numerical integration failed to reach the requested tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class PrecisionError(SubsetSimError):
    """Floating-point cancellation destroyed a required inequality."""
