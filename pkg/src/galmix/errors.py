"""Exception types shared across the package."""


class GalmixError(Exception):
    """Base class for package errors."""


class DimensionMismatchError(GalmixError, ValueError):
    """State or increment vector does not conform to the model."""


class DegenerateNoiseError(GalmixError, RuntimeError):
    """A diagonal noise amplitude fell below the underflow threshold."""


class BlowUpError(GalmixError, RuntimeError):
    """A simulated path left the finite-float range."""


class MissingIncrementsError(GalmixError, ValueError):
    """Operation requires a trajectory that recorded its noise increments."""


class OffGridError(GalmixError, ValueError):
    """Requested time does not lie on the trajectory grid."""


class InsufficientDataError(GalmixError, ValueError):
    """Not enough (un-censored) samples to compute the statistic."""


class ConfigError(GalmixError, ValueError):
    """Experiment configuration failed validation."""
