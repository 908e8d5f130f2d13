"""Exception types shared across the engine."""


class ScaleformError(Exception):
    pass


class ShapeError(ScaleformError, ValueError):
    """Operand shapes are incompatible."""


class ConfigError(ScaleformError, ValueError):
    """A configuration value violates a structural requirement."""


class NonFiniteError(ScaleformError, FloatingPointError):
    """NaN or Inf appeared where only finite values are allowed."""


class UsageError(ScaleformError, RuntimeError):
    pass


class FormatError(ScaleformError, ValueError):
    """A file does not match its declared binary format."""


class RangeError(ScaleformError, ValueError):
    """A value is outside the range an operation supports."""
