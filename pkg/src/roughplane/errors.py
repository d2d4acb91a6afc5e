"""Exception types shared across the package."""


class RoughPlaneError(Exception):
    """Base class for all package errors."""


class NonPositiveSpectrum(RoughPlaneError):
    """The discretized covariance kernel has a negative Fourier coefficient
    beyond tolerance: bad profile or too-coarse grid."""


class OutOfDomain(RoughPlaneError):
    """A point lies outside the region where the field evaluator is valid."""


class LeftDomain(RoughPlaneError):
    """A trajectory exited the sampled grid before reaching its horizon.

    Attributes
    ----------
    time : float
        Integration time at which the exit happened.
    """

    def __init__(self, time, message=None):
        self.time = float(time)
        super().__init__(message or f"trajectory left the sampled domain at t={time:.6g}")


class OutOfRange(RoughPlaneError):
    """A scalar argument lies outside its defining interval."""


class OutOfRegion(RoughPlaneError):
    """A chart point lies outside the region where the chart metric is defined."""


class HorizonExceeded(RoughPlaneError):
    """A query time lies beyond the computed path horizon."""


class NoExit(RoughPlaneError):
    """The path never leaves the requested ball within its horizon."""


class PreconditionZ(RoughPlaneError):
    """Local fluctuation Z_0 exceeds the admissibility threshold."""


class ChartFailure(RoughPlaneError):
    """The numeric normal-coordinate chart is not usable (non-injective,
    Newton inversion failed, or the blend window is not covered)."""


class SingularBlock(RoughPlaneError):
    """A conditioning block stayed singular after jitter regularization."""


class CholeskyFailure(RoughPlaneError):
    """Covariance factorization failed even with jitter."""


class ConfigError(RoughPlaneError):
    """Invalid experiment configuration."""
