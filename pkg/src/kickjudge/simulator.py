"""Deterministic synthetic match generator.

Produces labeled two-athlete pose streams: idle sparring, slides, standard
and turning head kicks, plus an explicit near-miss type whose foot stops
15 cm short of the head (it must die at the IoU gate). Kick trajectories are
kinematic arcs with a prescribed peak speed and a hard stop at contact, so
every scoring threshold is exercised with known ground truth. Noise and
keypoint dropout are applied after trajectory synthesis, which keeps the
ground truth exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import core
from .core import (
    ActionClass,
    Keypoint,
    NUM_JOINTS,
    PipelineConfig,
    PoseFrame,
)
from .tracking import FilterParams, TrackBank
from .kinematics import WindowFeatures, extract_features

ATTACKER_ID = "red"
DEFENDER_ID = "blue"

EVENT_KINDS = ("slide", "standard", "turning", "near_miss")

_KIND_TO_CLASS = {
    "slide": ActionClass.SLIDE,
    "standard": ActionClass.STANDARD_HEAD_KICK,
    "turning": ActionClass.TURNING_HEAD_KICK,
    "near_miss": ActionClass.STANDARD_HEAD_KICK,  # an attempted kick that misses
}


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    fps: float = 60.0
    n_events: int = 10
    event_mix: dict = field(
        default_factory=lambda: {"slide": 1 / 3, "standard": 1 / 3, "turning": 1 / 3}
    )
    noise_sigma_m: float = 0.0
    occlusion_prob: float = 0.0
    athlete_height_m: float = 1.7
    kick_peak_speed_m_s: float = 4.0
    turning_rotation_deg: float = 156.0

    def __post_init__(self):
        if self.fps < 30:
            raise ValueError("fps must be >= 30")
        if self.athlete_height_m <= 0 or self.kick_peak_speed_m_s <= 0 or self.turning_rotation_deg <= 0:
            raise ValueError("physical parameters must be > 0")
        if abs(sum(self.event_mix.values()) - 1.0) > 1e-9:
            raise ValueError("event_mix must sum to 1")
        for kind in self.event_mix:
            if kind not in EVENT_KINDS:
                raise ValueError(f"unknown event kind {kind!r}")
        if self.noise_sigma_m < 0 or not 0.0 <= self.occlusion_prob <= 1.0:
            raise ValueError("bad noise/occlusion settings")


@dataclass(frozen=True)
class GroundTruthEvent:
    event_id: str
    true_class: ActionClass
    true_score: int
    t_impact: float
    true_rotation_deg: float
    frame_range: tuple[int, int]
    kind: str = ""

    def to_wire(self) -> dict:
        return {
            "event": self.event_id,
            "class": self.true_class.wire_name,
            "score": self.true_score,
            "t_impact": self.t_impact,
            "rot_deg": self.true_rotation_deg,
        }


def review_time_savings(
    matches_per_day: float, requests_per_match: float, minutes_per_review: float
) -> float:
    """Daily minutes of manual review replaced: matches x requests x minutes."""
    for v in (matches_per_day, requests_per_match, minutes_per_review):
        if v < 0:
            raise ValueError("inputs must be >= 0")
    return matches_per_day * requests_per_match * minutes_per_review


# ---------------------------------------------------------------------------
# Skeleton geometry
# ---------------------------------------------------------------------------

class _Skeleton:
    """Stick-figure joint positions parameterised by root x, facing and a
    few overridable joints (kicking ankle, shoulder-line angle)."""

    def __init__(self, height: float, facing: float):
        h = height
        self.h = h
        self.facing = facing
        self.nose_y = 0.94 * h
        self.neck_y = 0.86 * h
        self.shoulder_y = 0.84 * h
        self.shoulder_half = 0.115 * h
        self.hip_y = 0.53 * h
        self.hip_half = 0.06 * h
        self.knee_y = 0.28 * h
        self.ankle_y = 0.045 * h
        self.thigh = 0.25 * h
        self.shank = 0.24 * h

    def leg_reach(self) -> float:
        return self.thigh + self.shank

    def _knee_between(self, hip, ankle):
        ax, ay = hip
        bx, by = ankle
        dx, dy = bx - ax, by - ay
        d = math.hypot(dx, dy)
        lt, ls = self.thigh, self.shank
        if d < 1e-9:
            return (ax, ay - lt)
        if d >= lt + ls:
            f = lt / (lt + ls)
            return (ax + f * dx, ay + f * dy)
        a = (lt * lt - ls * ls + d * d) / (2 * d)
        h2 = max(lt * lt - a * a, 0.0)
        hh = math.sqrt(h2)
        px, py = ax + a * dx / d, ay + a * dy / d
        # Bow the knee toward the facing direction (chambered leg).
        nx, ny = -dy / d, dx / d
        if nx * self.facing < 0:
            nx, ny = -nx, -ny
        return (px + hh * nx, py + hh * ny)

    def pose(
        self,
        root_x: float,
        shoulder_angle_deg: float = 0.0,
        kick_ankle: Optional[tuple[float, float]] = None,
        kick_side: str = "r",
    ) -> list[tuple[float, float]]:
        f = self.facing
        pts = [(0.0, 0.0)] * NUM_JOINTS
        nose = (root_x + 0.03 * f, self.nose_y)
        neck = (root_x, self.neck_y)
        pts[core.HEAD] = nose
        pts[core.NECK] = neck
        phi = math.radians(shoulder_angle_deg)
        ux, uy = math.cos(phi), math.sin(phi)
        sx, sy = root_x, self.shoulder_y
        pts[core.L_SHOULDER] = (sx + self.shoulder_half * ux, sy + self.shoulder_half * uy)
        pts[core.R_SHOULDER] = (sx - self.shoulder_half * ux, sy - self.shoulder_half * uy)
        for side, sh in (("l", pts[core.L_SHOULDER]), ("r", pts[core.R_SHOULDER])):
            elbow = (sh[0] + 0.02 * f, sh[1] - 0.16 * self.h)
            wrist = (elbow[0] + 0.02 * f, elbow[1] - 0.14 * self.h)
            if side == "l":
                pts[core.L_ELBOW], pts[core.L_WRIST] = elbow, wrist
            else:
                pts[core.R_ELBOW], pts[core.R_WRIST] = elbow, wrist
        pts[core.L_HIP] = (root_x + self.hip_half, self.hip_y)
        pts[core.R_HIP] = (root_x - self.hip_half, self.hip_y)

        stance = {
            "r": (root_x + 0.08 * f, self.ankle_y),
            "l": (root_x - 0.10 * f, self.ankle_y),
        }
        for side in ("r", "l"):
            hip = pts[core.R_HIP] if side == "r" else pts[core.L_HIP]
            if kick_ankle is not None and side == kick_side:
                ankle = kick_ankle
            else:
                ankle = stance[side]
            knee = self._knee_between(hip, ankle)
            if side == "r":
                pts[core.R_KNEE], pts[core.R_ANKLE] = knee, ankle
            else:
                pts[core.L_KNEE], pts[core.L_ANKLE] = knee, ankle

        pts[core.L_EYE] = (nose[0] - 0.02 * f, nose[1] + 0.03)
        pts[core.R_EYE] = (nose[0] - 0.03 * f, nose[1] + 0.03)
        pts[core.L_EAR] = (nose[0] - 0.05 * f, nose[1] + 0.01)
        pts[core.R_EAR] = (nose[0] - 0.06 * f, nose[1] + 0.01)
        return pts


def _bezier(s, c, t, u):
    w = 1.0 - u
    return (
        w * w * s[0] + 2 * w * u * c[0] + u * u * t[0],
        w * w * s[1] + 2 * w * u * c[1] + u * u * t[1],
    )


def _arc_table(s, c, t, samples: int = 400):
    pts = [_bezier(s, c, t, k / samples) for k in range(samples + 1)]
    cum = [0.0]
    for a, b in zip(pts, pts[1:]):
        cum.append(cum[-1] + math.hypot(b[0] - a[0], b[1] - a[1]))
    return pts, cum


def _point_at_arclen(pts, cum, dist):
    if dist <= 0:
        return pts[0]
    if dist >= cum[-1]:
        return pts[-1]
    import bisect
    i = bisect.bisect_left(cum, dist)
    d0, d1 = cum[i - 1], cum[i]
    f = 0.0 if d1 == d0 else (dist - d0) / (d1 - d0)
    a, b = pts[i - 1], pts[i]
    return (a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]))


def _kick_speed_profile(path_len: float, peak: float, dt: float) -> list[float]:
    """Per-step speeds: eased ramp to an exact peak, then a hard 3-step stop.

    The sub-peak ramp is scaled so the integrated distance matches the path
    length exactly while the peak step keeps the configured speed.
    """
    tail = [0.45, 0.18, 0.04]
    tail_plus_peak = 1.0 + sum(tail)
    need = path_len / (dt * peak)
    if need <= tail_plus_peak:
        raise ValueError("infeasible_event")
    # Find the smallest ramp length whose un-scaled distance covers the need.
    ramp_n = 1
    while True:
        shape = [math.sin(0.5 * math.pi * k / ramp_n) ** 2 for k in range(1, ramp_n)]
        if sum(shape) + tail_plus_peak >= need or ramp_n > 4000:
            break
        ramp_n += 1
    alpha = (need - tail_plus_peak) / sum(shape) if shape else 0.0
    speeds = [peak * alpha * v for v in shape]
    speeds.append(peak)
    speeds.extend(peak * v for v in tail)
    return speeds


# ---------------------------------------------------------------------------
# Match generation
# ---------------------------------------------------------------------------

_SEPARATION_M = 1.0
_MATCH_ID = "SIM"


def generate_match(config: SimConfig) -> tuple[list[PoseFrame], list[GroundTruthEvent]]:
    """Generate one match: interleaved attacker/defender frames plus truth.

    Deterministic for a fixed config (seed included). Raises
    ValueError("infeasible_event") if the kick geometry exceeds what the
    configured athlete height can reach.
    """
    rng = np.random.default_rng(config.seed)
    fps = config.fps
    dt = 1.0 / fps

    attacker = _Skeleton(config.athlete_height_m, facing=1.0)
    defender = _Skeleton(config.athlete_height_m, facing=-1.0)

    kinds = sorted(config.event_mix)
    probs = [config.event_mix[k] for k in kinds]
    chosen = [kinds[i] for i in rng.choice(len(kinds), size=config.n_events, p=probs)]

    # Per-frame pose parameter tracks for the attacker, built event by event.
    att_root: list[float] = []
    att_phi: list[float] = []
    att_kick: list[Optional[tuple[float, float]]] = []

    truth: list[GroundTruthEvent] = []
    def_root_base = _SEPARATION_M

    def def_sway(idx: int) -> float:
        return def_root_base + 0.015 * math.sin(2 * math.pi * 0.4 * idx * dt + 1.1)

    def defender_head_at(idx: int) -> tuple[float, float]:
        return (def_sway(idx) + 0.03 * defender.facing, defender.nose_y)

    def idle(frames: int, start_idx: int):
        for k in range(frames):
            idx = start_idx + k
            att_root.append(0.02 * math.sin(2 * math.pi * 0.5 * idx * dt))
            att_phi.append(0.0)
            att_kick.append(None)

    idle(int(round(1.0 * fps)), 0)

    for n, kind in enumerate(chosen, start=1):
        start_idx = len(att_root)
        if kind == "slide":
            slide_frames = int(round(0.8 * fps))
            back_frames = int(round(0.5 * fps))
            reach = 0.4
            base = att_root[-1]
            for k in range(slide_frames):
                att_root.append(base + reach * (k + 1) / slide_frames)
                att_phi.append(0.0)
                att_kick.append(None)
            for k in range(back_frames):
                att_root.append(base + reach * (1.0 - (k + 1) / back_frames))
                att_phi.append(0.0)
                att_kick.append(None)
            end_idx = len(att_root) - 1
            mid_t = (start_idx + slide_frames) * dt
            truth.append(GroundTruthEvent(
                event_id=f"E{n}", true_class=ActionClass.SLIDE, true_score=0,
                t_impact=mid_t, true_rotation_deg=0.0,
                frame_range=(start_idx, end_idx), kind=kind,
            ))
        else:
            base = att_root[-1]
            step_in = 0.30
            # Anchor the arc start at the current stance ankle.
            s0 = (base + 0.08, attacker.ankle_y)
            # Preliminary contact estimate to aim at the swaying head.
            guess_idx = start_idx + int(round(0.75 * fps))
            head = defender_head_at(guess_idx)
            if kind == "near_miss":
                target = (head[0] + float(rng.uniform(-0.02, 0.02)), head[1] - 0.15)
            else:
                target = (
                    head[0] + float(rng.uniform(-0.02, 0.02)),
                    head[1] + float(rng.uniform(-0.02, 0.0)),
                )
            hip_at_contact = (base + step_in, attacker.hip_y)
            reach_needed = math.hypot(target[0] - hip_at_contact[0], target[1] - hip_at_contact[1])
            if reach_needed > 1.35 * attacker.leg_reach():
                raise ValueError("infeasible_event")

            control = ((s0[0] + target[0]) / 2 + 0.1, target[1] - 0.45)
            pts, cum = _arc_table(s0, control, target)
            speeds = _kick_speed_profile(cum[-1], config.kick_peak_speed_m_s, dt)
            n_kick = len(speeds)
            rot = config.turning_rotation_deg if kind == "turning" else 0.0
            rot_steps = min(24, n_kick - 2)
            dist = 0.0
            for k in range(n_kick):
                dist += speeds[k] * dt
                ankle = _point_at_arclen(pts, cum, dist)
                frac = (k + 1) / n_kick
                root = base + step_in * frac
                if rot and k >= n_kick - rot_steps:
                    p = (k - (n_kick - rot_steps) + 1) / rot_steps
                    phi = rot * (3 * p * p - 2 * p * p * p)  # smoothstep sweep
                else:
                    phi = 0.0
                att_root.append(root)
                att_phi.append(phi)
                att_kick.append(ankle)
            contact_idx = len(att_root) - 1

            retract_frames = int(round(0.35 * fps))
            for k in range(retract_frames):
                u = (k + 1) / retract_frames
                back = cum[-1] * (1.0 - u) ** 1.5  # arc length left toward start
                ankle = _point_at_arclen(pts, cum, back) if u < 1.0 else None
                root = base + step_in * (1.0 - u)
                phi = rot * (1.0 - u) if rot else 0.0
                att_root.append(root)
                att_phi.append(phi)
                att_kick.append(ankle)
            end_idx = len(att_root) - 1

            if kind == "near_miss":
                score = 0
            else:
                score = 5 if kind == "turning" else 3
            truth.append(GroundTruthEvent(
                event_id=f"E{n}", true_class=_KIND_TO_CLASS[kind], true_score=score,
                t_impact=contact_idx * dt, true_rotation_deg=rot,
                frame_range=(start_idx, end_idx), kind=kind,
            ))

        gap = int(round(float(rng.uniform(0.8, 1.2)) * fps))
        idle(gap, len(att_root))

    # Render both athletes' keypoints and apply noise/occlusion last.
    n_frames = len(att_root)
    frames: list[PoseFrame] = []
    for idx in range(n_frames):
        t = idx * dt
        att_pts = attacker.pose(
            att_root[idx], shoulder_angle_deg=att_phi[idx], kick_ankle=att_kick[idx]
        )
        def_pts = defender.pose(def_sway(idx))
        for athlete, pts in ((ATTACKER_ID, att_pts), (DEFENDER_ID, def_pts)):
            kps = []
            for (x, y) in pts:
                if config.noise_sigma_m > 0:
                    x += float(rng.normal(0.0, config.noise_sigma_m))
                    y += float(rng.normal(0.0, config.noise_sigma_m))
                conf = 0.9
                if config.occlusion_prob > 0 and float(rng.random()) < config.occlusion_prob:
                    conf = 0.2
                kps.append(Keypoint(x, y, conf))
            frames.append(PoseFrame(t=t, match_id=_MATCH_ID, athlete_id=athlete, keypoints=tuple(kps)))
    return frames, truth


# ---------------------------------------------------------------------------
# Labeled windows for training (anchored on ground truth, no segmenter)
# ---------------------------------------------------------------------------

def labeled_windows(
    sim_config: SimConfig,
    pipeline_config: Optional[PipelineConfig] = None,
    filter_params: Optional[FilterParams] = None,
) -> list[tuple[WindowFeatures, ActionClass]]:
    """Generate a match and cut one feature window per ground-truth event.

    Kick windows end at the contact frame; slide windows end mid-slide. The
    stream is smoothed by the same tracker the live pipeline uses.
    """
    pipeline_config = pipeline_config or PipelineConfig()
    filter_params = filter_params or FilterParams()
    frames, truth = generate_match(sim_config)

    banks = {
        ATTACKER_ID: TrackBank(pipeline_config, filter_params),
        DEFENDER_ID: TrackBank(pipeline_config, filter_params),
    }
    smoothed_att: list[PoseFrame] = []
    head_positions: list[tuple[float, float]] = []
    for frame in frames:
        bank = banks[frame.athlete_id]
        meas = [(k.x, k.y, k.confidence) for k in frame.keypoints]
        positions = bank.step(frame.t, meas)
        if frame.athlete_id == ATTACKER_ID:
            kps = tuple(
                Keypoint(p[0], p[1], k.confidence)
                for p, k in zip(positions, frame.keypoints)
            )
            smoothed_att.append(PoseFrame(frame.t, frame.match_id, frame.athlete_id, kps))
        else:
            head_positions.append(positions[core.HEAD])

    n = pipeline_config.window_frames
    out = []
    for event in truth:
        anchor = int(round(event.t_impact * sim_config.fps))
        anchor = min(anchor, len(smoothed_att) - 1)
        start = anchor - n + 1
        if start < 0:
            continue
        window = smoothed_att[start : anchor + 1]
        heads = head_positions[start : anchor + 1]
        feats = extract_features(window, heads, pipeline_config)
        out.append((feats, event.true_class))
    return out


# ---------------------------------------------------------------------------
# Stream files
# ---------------------------------------------------------------------------

def write_stream(frames: Sequence[PoseFrame], path: str | Path) -> None:
    from .core import frame_to_json

    with open(path, "w", encoding="utf-8") as f:
        for frame in frames:
            f.write(frame_to_json(frame) + "\n")


def write_truth(events: Sequence[GroundTruthEvent], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for event in events:
            f.write(json.dumps(event.to_wire(), separators=(",", ":")) + "\n")


def read_truth(path: str | Path) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
