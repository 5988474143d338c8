"""Exception hierarchy shared by every module."""


class LcmError(Exception):
    """Base class for all package errors."""


class DimensionError(LcmError, ValueError):
    """Operand shapes are incompatible."""


class NumericError(LcmError, ValueError):
    """Input contains NaN or infinity where finite values are required."""


class ParameterError(LcmError, ValueError):
    """A scalar parameter is outside its valid range."""


class StateError(LcmError, RuntimeError):
    """Operation is invalid for the current state (e.g. reading an empty pool)."""


class ObjectAbsentError(LcmError, ValueError):
    """An object has no foreground pixels where some are required."""

    def __init__(self, message, labels=()):
        super().__init__(message)
        self.labels = tuple(labels)


class ShapeDriftError(LcmError, ValueError):
    """A frame's extents differ from the extents the sequence was initialised with."""


class SceneError(LcmError, ValueError):
    """A synthetic scene description is invalid."""
