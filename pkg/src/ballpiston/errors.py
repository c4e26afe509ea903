"""Exception types shared across the package.

Every error raised by the package derives from BallPistonError, so callers
can catch the whole family at once.  Domain violations additionally derive
from ValueError; messages always name the violated inequality.
"""


class BallPistonError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(BallPistonError, ValueError):
    """A parameter lies outside its validated domain."""


class NoEventError(BallPistonError):
    """No forward collision exists; the state left the billiard table."""


class CornerAmbiguityError(BallPistonError):
    """Two candidate collisions coincide within tolerance (corner hit)."""


class EventRateCapError(BallPistonError):
    """Suspected chattering: event count exceeded the cap inside one window."""


class SurfaceMismatchError(BallPistonError):
    """A collision rule was applied to a state not on the claimed surface."""


class RejectionStallError(BallPistonError):
    """A rejection sampler's acceptance rate fell below its floor."""


class InsufficientDataError(BallPistonError, ValueError):
    """An estimator was handed fewer events or samples than it requires."""


class NumericalError(BallPistonError):
    """A numerical routine failed to reach its accuracy target."""
