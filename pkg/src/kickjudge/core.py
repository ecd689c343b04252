"""Shared domain types: keypoint layout, pose frames, config, validation.

Coordinates are court coordinates in meters, y up, origin at the mat floor.
Calibration from pixels to meters happens upstream and is not handled here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from enum import IntEnum
from pathlib import Path
from typing import Optional


# OpenPose-style 18-joint body layout. Order is a wire contract: the "kp"
# array in frame JSON and every per-joint track bank index into this list.
JOINT_NAMES = (
    "nose",
    "neck",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_hip",
    "r_knee",
    "r_ankle",
    "l_hip",
    "l_knee",
    "l_ankle",
    "r_eye",
    "l_eye",
    "r_ear",
    "l_ear",
)

NUM_JOINTS = 18

# Index constants for the joints the scoring logic cares about.
HEAD = 0  # nose stands in for the head center
NECK = 1
R_SHOULDER, R_ELBOW, R_WRIST = 2, 3, 4
L_SHOULDER, L_ELBOW, L_WRIST = 5, 6, 7
R_HIP, R_KNEE, R_ANKLE = 8, 9, 10
L_HIP, L_KNEE, L_ANKLE = 11, 12, 13
R_EYE, L_EYE, R_EAR, L_EAR = 14, 15, 16, 17


@dataclass(frozen=True)
class KeypointLayout:
    """Ordered joint-name list plus the index constants derived from it."""

    names: tuple[str, ...] = JOINT_NAMES

    def __post_init__(self):
        if len(self.names) != NUM_JOINTS:
            raise ValueError(f"layout must have {NUM_JOINTS} joints, got {len(self.names)}")
        if len(set(self.names)) != NUM_JOINTS:
            raise ValueError("joint names must be unique")

    def index(self, name: str) -> int:
        return self.names.index(name)

    @property
    def hip_mid_indices(self) -> tuple[int, int]:
        """Hip midpoint is derived from the two hip joints."""
        return (R_HIP, L_HIP)


LAYOUT = KeypointLayout()


@dataclass(frozen=True)
class Keypoint:
    """One 2D joint position in meters with a detector confidence in [0, 1]."""

    x: float
    y: float
    confidence: float


@dataclass(frozen=True)
class PoseFrame:
    """One athlete's full keypoint set at a single timestamp.

    Timestamps must be strictly increasing within one (match_id, athlete_id)
    stream; that is enforced by the stream validator, not the constructor.
    """

    t: float
    match_id: str
    athlete_id: str
    keypoints: tuple[Keypoint, ...]

    def positions(self) -> list[tuple[float, float]]:
        return [(k.x, k.y) for k in self.keypoints]


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError("box min must not exceed max")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)


class ActionClass(IntEnum):
    """Action categories in fixed ordinal order; the order is a contract for
    every probability vector and wire message in the system."""

    SLIDE = 0
    STANDARD_HEAD_KICK = 1
    TURNING_HEAD_KICK = 2

    @property
    def wire_name(self) -> str:
        return _CLASS_WIRE[self]

    @classmethod
    def from_wire(cls, name: str) -> "ActionClass":
        try:
            return _CLASS_FROM_WIRE[name]
        except KeyError:
            raise ValueError(f"unknown action class {name!r}") from None


_CLASS_WIRE = {
    ActionClass.SLIDE: "slide",
    ActionClass.STANDARD_HEAD_KICK: "standard_head_kick",
    ActionClass.TURNING_HEAD_KICK: "turning_head_kick",
}
_CLASS_FROM_WIRE = {v: k for k, v in _CLASS_WIRE.items()}


@dataclass(frozen=True)
class PipelineConfig:
    """Tunable thresholds for the whole decision pipeline.

    Defaults: the IoU gate and 200 ms budget are fixed requirements; the
    turning-rotation threshold is exposed because officiating rules state it
    inconsistently (90-150 degrees depending on source); the deceleration
    threshold and box sides are engineering choices sized so that genuine
    head contact passes both gates while near-misses fail the IoU gate.
    """

    a_threshold: float = 50.0          # m/s^2
    iou_threshold: float = 0.3
    rotation_turning_deg: float = 120.0
    head_margin_m: float = 0.2
    horiz_margin_m: float = 0.1
    window_frames: int = 30
    min_confidence: float = 0.5
    foot_box_side_m: float = 0.25
    head_box_side_m: float = 0.25
    latency_budget_ms: float = 200.0
    lambda_cross: float = 1.0
    lambda_conf: float = 0.5

    def __post_init__(self):
        for name in (
            "a_threshold", "rotation_turning_deg", "head_margin_m",
            "horiz_margin_m", "min_confidence", "foot_box_side_m",
            "head_box_side_m", "latency_budget_ms",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if not 0.0 < self.iou_threshold < 1.0:
            raise ValueError("iou_threshold must be in (0, 1)")
        if self.window_frames < 2:
            raise ValueError("window_frames must be >= 2")


@dataclass(frozen=True)
class LatencyBreakdown:
    """Per-stage compute timings for one decision, in milliseconds.

    t_total_ms is always the exact sum of the recorded stage timings.
    """

    t_pose_ms: float
    t_class_ms: float
    t_impact_ms: float
    t_total_ms: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "t_total_ms", self.t_pose_ms + self.t_class_ms + self.t_impact_ms
        )


class FrameRejected(ValueError):
    """Raised for structurally invalid frames; .reason carries the code."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


@dataclass(frozen=True)
class ValidatedFrame:
    """A frame that passed structural validation, with low-confidence joints
    flagged as occluded (kept in place so the tracker can coast them)."""

    frame: PoseFrame
    occluded: tuple[int, ...]

    def is_occluded(self, joint: int) -> bool:
        return joint in self.occluded


def validate_frame(
    frame: PoseFrame,
    config: PipelineConfig,
    last_t: Optional[float] = None,
) -> ValidatedFrame:
    """Structurally validate one frame.

    Args:
        frame: candidate frame.
        config: supplies min_confidence for occlusion marking.
        last_t: timestamp of the previous accepted frame of the same
            (match, athlete) stream, if any.

    Raises:
        FrameRejected: reason "bad_layout", "non_finite", "bad_confidence"
            or "bad_timestamp".
    """
    if len(frame.keypoints) != NUM_JOINTS:
        raise FrameRejected("bad_layout", f"expected {NUM_JOINTS} keypoints, got {len(frame.keypoints)}")
    if not math.isfinite(frame.t):
        raise FrameRejected("bad_timestamp", "non-finite t")
    if last_t is not None and frame.t <= last_t:
        raise FrameRejected("bad_timestamp", f"t={frame.t} not after {last_t}")
    occluded = []
    for i, kp in enumerate(frame.keypoints):
        if not (math.isfinite(kp.x) and math.isfinite(kp.y)):
            raise FrameRejected("non_finite", f"joint {JOINT_NAMES[i]}")
        if not 0.0 <= kp.confidence <= 1.0:
            raise FrameRejected("bad_confidence", f"joint {JOINT_NAMES[i]}: {kp.confidence}")
        if kp.confidence < config.min_confidence:
            occluded.append(i)
    return ValidatedFrame(frame=frame, occluded=tuple(occluded))


class StreamValidator:
    """Stateful wrapper enforcing per-stream timestamp monotonicity.

    Validation is deterministic and streams for different athletes are
    independent, so interleaving order across athletes does not matter.
    """

    def __init__(self, config: PipelineConfig):
        self.config = config
        self._last_t: dict[tuple[str, str], float] = {}

    def validate(self, frame: PoseFrame) -> ValidatedFrame:
        key = (frame.match_id, frame.athlete_id)
        validated = validate_frame(frame, self.config, self._last_t.get(key))
        self._last_t[key] = frame.t
        return validated


# ---------------------------------------------------------------------------
# Wire formats
# ---------------------------------------------------------------------------

def frame_to_wire(frame: PoseFrame) -> dict:
    """Frame wire schema: {"t":..,"match":..,"athlete":..,"kp":[[x,y,c]*18]}."""
    return {
        "t": frame.t,
        "match": frame.match_id,
        "athlete": frame.athlete_id,
        "kp": [[k.x, k.y, k.confidence] for k in frame.keypoints],
    }


def frame_from_wire(obj: dict) -> PoseFrame:
    try:
        kp = obj["kp"]
        keypoints = tuple(Keypoint(float(x), float(y), float(c)) for x, y, c in kp)
        return PoseFrame(
            t=float(obj["t"]),
            match_id=str(obj["match"]),
            athlete_id=str(obj["athlete"]),
            keypoints=keypoints,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FrameRejected("bad_wire_frame", str(exc)) from None


def frame_to_json(frame: PoseFrame) -> str:
    return json.dumps(frame_to_wire(frame), separators=(",", ":"))


def frame_from_json(line: str) -> PoseFrame:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FrameRejected("bad_wire_frame", str(exc)) from None
    if not isinstance(obj, dict):
        raise FrameRejected("bad_wire_frame", "not an object")
    return frame_from_wire(obj)


# ---------------------------------------------------------------------------
# Config files: a flat JSON object whose keys mirror PipelineConfig field
# names; optional keys q/r/p0 configure the joint tracker.
# ---------------------------------------------------------------------------

_TRACKER_KEYS = ("q", "r", "p0")


def load_config(path: str | Path) -> tuple[PipelineConfig, dict[str, float]]:
    """Load a config file; returns (PipelineConfig, tracker overrides).

    Unknown keys are rejected so typos fail loudly.
    """
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    if not isinstance(raw, dict):
        raise ValueError("config file must hold a flat JSON object")
    known = {f.name for f in fields(PipelineConfig)}
    pipeline_kwargs = {}
    tracker = {}
    for key, value in raw.items():
        if key in known:
            pipeline_kwargs[key] = type(getattr(PipelineConfig(), key))(value)
        elif key in _TRACKER_KEYS:
            tracker[key] = float(value)
        else:
            raise ValueError(f"unknown config key {key!r}")
    return PipelineConfig(**pipeline_kwargs), tracker


def dump_config(config: PipelineConfig, tracker: Optional[dict[str, float]] = None) -> str:
    doc = {f.name: getattr(config, f.name) for f in fields(config) if f.init}
    if tracker:
        doc.update(tracker)
    return json.dumps(doc, indent=2, sort_keys=True)
