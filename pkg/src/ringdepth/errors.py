"""Exception hierarchy shared by all ringdepth modules."""


class RingDepthError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(RingDepthError):
    """Tensor or image extents do not satisfy an operation's contract."""


class DomainError(RingDepthError):
    """Values outside an operation's mathematical domain (log of a
    non-positive number, a point behind the camera, non-finite results)."""


class ConfigError(RingDepthError):
    """A configuration value is out of its allowed range or inconsistent."""


class FormatError(RingDepthError):
    """A file on disk does not match its expected binary or text layout."""


class GraphError(RingDepthError):
    """Misuse of the gradient tape (non-scalar root, empty tape, wrong tape)."""


class TrainingError(RingDepthError):
    """The optimization loop hit an unrecoverable state (non-finite grads)."""


class AggregationError(RingDepthError):
    """No per-frame reports with valid pixels were available to average."""
