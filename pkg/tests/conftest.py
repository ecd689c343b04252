"""Shared builders for synthetic action windows with exact kinematics."""

import math

from kickjudge import core
from kickjudge.core import Keypoint, PipelineConfig, PoseFrame
from kickjudge.action import ActionWindow
from kickjudge.kinematics import extract_features


def build_kick_window(
    speeds: list[float],
    head_offset: tuple[float, float],
    dt: float = 0.033,
    rotation_deg: float = 0.0,
    config: PipelineConfig | None = None,
    event_id: str = "E1",
) -> ActionWindow:
    """Construct a window whose measured ankle-speed series is exactly
    `speeds` (entry 0 must be 0) and whose defender head sits at the given
    offset from the final ankle position.

    The right ankle rises vertically; covering v*dt per frame makes the
    finite-difference speed series reproduce `speeds` exactly. Shoulders
    rotate uniformly to accumulate rotation_deg across the window.
    """
    config = config or PipelineConfig()
    n = len(speeds)
    assert n == config.window_frames and speeds[0] == 0.0

    ankle_y = [0.2]
    for v in speeds[1:]:
        ankle_y.append(ankle_y[-1] + v * dt)
    ankle_x = 1.0

    frames = []
    per_frame_rot = rotation_deg / (n - 1)
    for k in range(n):
        kps = [Keypoint(0.0, 0.9, 0.9) for _ in range(18)]
        phi = math.radians(per_frame_rot * k)
        ux, uy = math.cos(phi), math.sin(phi)
        kps[core.L_SHOULDER] = Keypoint(0.0 + 0.2 * ux, 1.4 + 0.2 * uy, 0.9)
        kps[core.R_SHOULDER] = Keypoint(0.0 - 0.2 * ux, 1.4 - 0.2 * uy, 0.9)
        kps[core.L_HIP] = Keypoint(0.1, 0.9, 0.9)
        kps[core.R_HIP] = Keypoint(-0.1, 0.9, 0.9)
        kps[core.R_KNEE] = Keypoint(ankle_x - 0.1, (0.9 + ankle_y[k]) / 2, 0.9)
        kps[core.R_ANKLE] = Keypoint(ankle_x, ankle_y[k], 0.9)
        kps[core.L_KNEE] = Keypoint(-0.05, 0.45, 0.9)
        kps[core.L_ANKLE] = Keypoint(-0.05, 0.05, 0.9)
        frames.append(
            PoseFrame(t=k * dt, match_id="M", athlete_id="red", keypoints=tuple(kps))
        )

    head = (ankle_x + head_offset[0], ankle_y[-1] + head_offset[1])
    heads = tuple(head for _ in range(n))
    frames = tuple(frames)
    features = extract_features(frames, heads, config)
    return ActionWindow(
        event_id=event_id,
        frames=frames,
        defender_head=heads,
        t_start=frames[0].t,
        t_end=frames[-1].t,
        features=features,
    )


def ramp_speeds(n: int, final_pair: tuple[float, float]) -> list[float]:
    """Speed series: gentle creep, then (v_prev, v_curr) as the last two
    entries so the one-step stop dominates the deceleration scan."""
    v_prev, v_curr = final_pair
    speeds = [0.0] + [0.2] * (n - 3)
    speeds += [v_prev, v_curr]
    assert len(speeds) == n
    return speeds


# Horizontal head offsets that produce exact IoU targets for two 0.25 m
# boxes: IoU = (0.25-d)*0.25 / (2*0.0625 - (0.25-d)*0.25).
def offset_for_iou(target: float, side: float = 0.25) -> float:
    inter = target * 2 * side * side / (1.0 + target)
    return side - inter / side
