"""Pure geometric and kinematic computations over smoothed joint trajectories.

Everything here is a pure function of positions in meters; no filter state,
no I/O. These are the quantities the classifier and the impact verifier run
on: joint angles, speeds, decelerations, torso rotation, keypoint-centered
bounding boxes and their IoU.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .core import (
    BoundingBox,
    L_ANKLE,
    L_HIP,
    L_KNEE,
    L_SHOULDER,
    PipelineConfig,
    PoseFrame,
    R_ANKLE,
    R_HIP,
    R_KNEE,
    R_SHOULDER,
)

Point = tuple[float, float]

# Minimum ankle peak speed for a window to count as a kick rather than a
# slide; chosen well below real head-kick speeds (3.5-4.1 m/s).
SLIDE_SPEED_FLOOR_M_S = 1.5


@dataclass(frozen=True)
class WindowFeatures:
    """Kinematic summary of one action window.

    The six scalar fields (peak speed through dx_min) form the feature vector
    used by the trainable classifier, in that order. The per-frame series are
    kept for impact localization and UI overlays; their length equals the
    window frame count.
    """

    knee_angle_deg_series: tuple[float, ...]
    ankle_speed_series: tuple[float, ...]
    peak_ankle_speed: float
    peak_knee_angle_deg: float
    torso_rotation_deg: float
    mean_torso_angular_velocity_deg_s: float
    ankle_head_dy_min: float
    ankle_head_dx_min: float

    FEATURE_DIM = 6

    def vector(self) -> list[float]:
        return [
            self.peak_ankle_speed,
            self.peak_knee_angle_deg,
            self.torso_rotation_deg,
            self.mean_torso_angular_velocity_deg_s,
            self.ankle_head_dy_min,
            self.ankle_head_dx_min,
        ]

    def to_wire(self) -> dict:
        return {
            "knee_angle_deg": list(self.knee_angle_deg_series),
            "ankle_speed": list(self.ankle_speed_series),
            "peak_ankle_speed": self.peak_ankle_speed,
            "peak_knee_angle_deg": self.peak_knee_angle_deg,
            "torso_rotation_deg": self.torso_rotation_deg,
            "mean_torso_angular_velocity_deg_s": self.mean_torso_angular_velocity_deg_s,
            "ankle_head_dy_min": self.ankle_head_dy_min,
            "ankle_head_dx_min": self.ankle_head_dx_min,
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "WindowFeatures":
        return cls(
            knee_angle_deg_series=tuple(float(v) for v in obj["knee_angle_deg"]),
            ankle_speed_series=tuple(float(v) for v in obj["ankle_speed"]),
            peak_ankle_speed=float(obj["peak_ankle_speed"]),
            peak_knee_angle_deg=float(obj["peak_knee_angle_deg"]),
            torso_rotation_deg=float(obj["torso_rotation_deg"]),
            mean_torso_angular_velocity_deg_s=float(obj["mean_torso_angular_velocity_deg_s"]),
            ankle_head_dy_min=float(obj["ankle_head_dy_min"]),
            ankle_head_dx_min=float(obj["ankle_head_dx_min"]),
        )


def joint_angle(p_prev: Point, p_mid: Point, p_next: Point) -> float:
    """Interior angle at p_mid between the segments to p_prev and p_next.

    Returns degrees in [0, 180]. Raises ValueError("degenerate_angle") when
    either neighbor coincides with p_mid.
    """
    v1x, v1y = p_prev[0] - p_mid[0], p_prev[1] - p_mid[1]
    v2x, v2y = p_next[0] - p_mid[0], p_next[1] - p_mid[1]
    n1 = math.hypot(v1x, v1y)
    n2 = math.hypot(v2x, v2y)
    if n1 <= 1e-9 or n2 <= 1e-9:
        raise ValueError("degenerate_angle")
    c = (v1x * v2x + v1y * v2y) / (n1 * n2)
    c = max(-1.0, min(1.0, c))
    return math.degrees(math.acos(c))


def speed(p_prev: Point, p_curr: Point, dt: float) -> float:
    """Euclidean displacement over dt, in m/s."""
    if dt <= 0:
        raise ValueError("non_positive_dt")
    return math.hypot(p_curr[0] - p_prev[0], p_curr[1] - p_prev[1]) / dt


def deceleration(v_prev: float, v_curr: float, dt: float) -> float:
    """(v_prev - v_curr) / dt; positive means the point is slowing down."""
    if dt <= 0:
        raise ValueError("non_positive_dt")
    return (v_prev - v_curr) / dt


def _wrap_delta_deg(delta: float) -> float:
    """Wrap an angle difference into (-180, 180]."""
    wrapped = math.fmod(delta + 180.0, 360.0)
    if wrapped <= 0.0:
        wrapped += 360.0
    return wrapped - 180.0


def torso_rotation(
    shoulder_pairs: Sequence[Optional[tuple[Point, Point]]],
    hip_pairs: Optional[Sequence[Optional[tuple[Point, Point]]]] = None,
) -> float:
    """Accumulated unsigned torso-line rotation over a frame series, degrees.

    Each frame contributes the absolute orientation change of the shoulder
    line (right-to-left vector); when the shoulders are unresolved for a
    frame the hip line stands in. Frames with neither line are skipped.
    Raises ValueError("insufficient_orientation_data") when fewer than two
    frames have a resolvable line.
    """
    angles: list[float] = []
    for i, pair in enumerate(shoulder_pairs):
        if pair is None and hip_pairs is not None:
            pair = hip_pairs[i]
        if pair is None:
            continue
        (rx, ry), (lx, ly) = pair
        angles.append(math.degrees(math.atan2(ly - ry, lx - rx)))
    if len(angles) < 2:
        raise ValueError("insufficient_orientation_data")
    total = 0.0
    for a_prev, a_curr in zip(angles, angles[1:]):
        total += abs(_wrap_delta_deg(a_curr - a_prev))
    return total


def _square_box(center: Point, side: float) -> BoundingBox:
    if center is None or not (math.isfinite(center[0]) and math.isfinite(center[1])):
        raise ValueError("unresolved_keypoint")
    half = side / 2.0
    return BoundingBox(center[0] - half, center[1] - half, center[0] + half, center[1] + half)


def foot_bbox(ankle: Point, config: PipelineConfig) -> BoundingBox:
    """Axis-aligned square region around the ankle keypoint."""
    return _square_box(ankle, config.foot_box_side_m)


def head_bbox(head: Point, config: PipelineConfig) -> BoundingBox:
    """Axis-aligned square region around the head keypoint."""
    return _square_box(head, config.head_box_side_m)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 for disjoint or fully degenerate boxes."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = max(0.0, ix) * max(0.0, iy)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def ankle_speed_series(
    frames: Sequence[PoseFrame], ankle_index: int
) -> tuple[float, ...]:
    """Per-frame ankle speed; entry 0 is 0 (no prior frame).

    Consecutive frames with non-increasing timestamps (window padding) get a
    0 entry: a repeated frame carries no motion.
    """
    out = [0.0]
    for prev, curr in zip(frames, frames[1:]):
        dt = curr.t - prev.t
        if dt <= 0:
            out.append(0.0)
            continue
        p0 = prev.keypoints[ankle_index]
        p1 = curr.keypoints[ankle_index]
        out.append(speed((p0.x, p0.y), (p1.x, p1.y), dt))
    return tuple(out)


def extract_features(
    frames: Sequence[PoseFrame],
    defender_head: Sequence[Optional[Point]],
    config: PipelineConfig,
) -> WindowFeatures:
    """Compute the full feature set for one attacker window.

    Args:
        frames: window_frames smoothed attacker frames.
        defender_head: defender head position per frame (None when that
            track was lost).
        config: window length contract.

    The kicking leg is the ankle with the greater peak speed over the window.
    Raises ValueError("track_lost") when the defender head is unresolved for
    the whole window.
    """
    if len(frames) != config.window_frames:
        raise ValueError(f"window must have {config.window_frames} frames")
    if all(h is None for h in defender_head):
        raise ValueError("track_lost")

    speeds_r = ankle_speed_series(frames, R_ANKLE)
    speeds_l = ankle_speed_series(frames, L_ANKLE)
    if max(speeds_r) >= max(speeds_l):
        ankle_i, knee_i, hip_i = R_ANKLE, R_KNEE, R_HIP
        speeds = speeds_r
    else:
        ankle_i, knee_i, hip_i = L_ANKLE, L_KNEE, L_HIP
        speeds = speeds_l

    knee_angles = []
    for f in frames:
        hip = f.keypoints[hip_i]
        knee = f.keypoints[knee_i]
        ankle = f.keypoints[ankle_i]
        try:
            knee_angles.append(joint_angle((hip.x, hip.y), (knee.x, knee.y), (ankle.x, ankle.y)))
        except ValueError:
            knee_angles.append(180.0)  # fully collapsed leg segment: treat as straight

    shoulder_pairs = []
    hip_pairs = []
    for f in frames:
        rs, ls = f.keypoints[R_SHOULDER], f.keypoints[L_SHOULDER]
        rh, lh = f.keypoints[R_HIP], f.keypoints[L_HIP]
        shoulder_pairs.append(((rs.x, rs.y), (ls.x, ls.y)))
        hip_pairs.append(((rh.x, rh.y), (lh.x, lh.y)))
    rotation = torso_rotation(shoulder_pairs, hip_pairs)
    duration = frames[-1].t - frames[0].t
    mean_omega = rotation / duration if duration > 0 else 0.0

    dy_min = math.inf
    dx_min = math.inf
    for f, head in zip(frames, defender_head):
        if head is None:
            continue
        ankle = f.keypoints[ankle_i]
        dy_min = min(dy_min, head[1] - ankle.y)
        dx_min = min(dx_min, abs(ankle.x - head[0]))

    return WindowFeatures(
        knee_angle_deg_series=tuple(knee_angles),
        ankle_speed_series=speeds,
        peak_ankle_speed=max(speeds),
        peak_knee_angle_deg=max(knee_angles),
        torso_rotation_deg=rotation,
        mean_torso_angular_velocity_deg_s=mean_omega,
        ankle_head_dy_min=dy_min,
        ankle_head_dx_min=dx_min,
    )
