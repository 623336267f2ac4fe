"""Exception types shared across the library."""


class TrajPhdError(Exception):
    """Base class for all library errors."""


class InvalidComponentError(TrajPhdError):
    """A trajectory component violates a structural invariant."""


class SingularInnovationError(TrajPhdError):
    """Innovation covariance is singular or too ill-conditioned to invert."""


class DegenerateMixtureError(TrajPhdError):
    """A mixture with zero total weight was used where mass is required."""


class ImpossibleMeasurementError(TrajPhdError):
    """Measurement-update normalizer is zero; model or clutter misconfigured."""


class ConfigError(TrajPhdError):
    """Invalid scenario, filter, or experiment configuration."""


class MetricIntractableError(TrajPhdError):
    """Trajectory-metric assignment state space exceeds the configured cap."""
