"""Exception types shared across the toolkit."""


class SignMotionError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(SignMotionError, ValueError):
    """An argument violates an operation's preconditions."""


class DegenerateInputError(InvalidArgumentError):
    """Numerically degenerate input (zero-norm or parallel vectors)."""


class ShapeError(InvalidArgumentError):
    """Array dimensions do not match the declared contract."""


class SequenceLengthError(InvalidArgumentError):
    """A sequence exceeds the configured maximum length."""


class FormatError(SignMotionError, ValueError):
    """A file does not conform to its on-disk format."""


class InvalidAnnotationError(InvalidArgumentError):
    """A quality-control annotation is inconsistent with its clip."""


class InsufficientDataError(SignMotionError, ValueError):
    """Too few samples to compute the requested quantity."""


class ConfigError(SignMotionError):
    """Inconsistent or incomplete configuration."""


class StateError(SignMotionError, RuntimeError):
    """Operation requires state (e.g. a loaded checkpoint) that is absent."""


class TransportError(SignMotionError, RuntimeError):
    """An external embedding provider could not be reached."""


class InputError(SignMotionError, ValueError):
    """An input resource (e.g. an image file) could not be read."""
