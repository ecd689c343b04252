"""kickjudge: real-time head-kick detection, scoring and jury review."""

from .core import (
    ActionClass,
    BoundingBox,
    Keypoint,
    LatencyBreakdown,
    PipelineConfig,
    PoseFrame,
)

__all__ = [
    "ActionClass",
    "BoundingBox",
    "Keypoint",
    "LatencyBreakdown",
    "PipelineConfig",
    "PoseFrame",
]

__version__ = "0.1.0"
