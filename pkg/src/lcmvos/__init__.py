"""Toy semi-supervised video object segmentation with global, position-guided
and object-relation memory reads."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DimensionError,
    LcmError,
    NumericError,
    ObjectAbsentError,
    ParameterError,
    SceneError,
    ShapeDriftError,
    StateError,
)
from .fusion import ReadoutConfig  # noqa: E402
from .pipeline import PropagationConfig, SequenceState, Weights, init, run, step  # noqa: E402

__all__ = [
    "DimensionError", "LcmError", "NumericError", "ObjectAbsentError", "ParameterError",
    "SceneError", "ShapeDriftError", "StateError", "ReadoutConfig", "PropagationConfig",
    "SequenceState", "Weights", "init", "run", "step",
]
