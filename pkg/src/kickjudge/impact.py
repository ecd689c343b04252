"""Impact verification and point assignment.

Contact is confirmed only when both gates pass: the kicking ankle shows a
sudden deceleration above the configured threshold, and the foot and head
boxes overlap with IoU above 0.3 at the deceleration frame. Verified standard
head kicks score 3, verified turning kicks 5, everything else 0.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Callable

from .core import ActionClass, L_ANKLE, LatencyBreakdown, PipelineConfig, R_ANKLE
from .action import ActionWindow, ClassProbabilities
from .kinematics import deceleration, foot_bbox, head_bbox, iou


@dataclass(frozen=True)
class ImpactEvidence:
    """Physical contact evidence for one window.

    impact_detected is exactly the conjunction of the deceleration gate and
    the IoU gate; it is computed by the constructor so the invariant cannot
    drift from the fields.
    """

    decel_m_s2: float
    iou_value: float
    impact_frame_t: float
    rotation_deg: float
    impact_detected: bool
    flags: tuple[str, ...] = ()

    @classmethod
    def evaluate(
        cls,
        decel_m_s2: float,
        iou_value: float,
        impact_frame_t: float,
        rotation_deg: float,
        config: PipelineConfig,
        flags: tuple[str, ...] = (),
    ) -> "ImpactEvidence":
        detected = decel_m_s2 > config.a_threshold and iou_value > config.iou_threshold
        return cls(decel_m_s2, iou_value, impact_frame_t, rotation_deg, detected, flags)


def detect_impact(
    window: ActionWindow, config: PipelineConfig, max_span: int = 2
) -> ImpactEvidence:
    """Locate the sharpest deceleration of the kicking ankle and gate it.

    The scan evaluates decelerations over one and two frame steps (a hard
    stop often straddles a frame boundary) and keeps the maximum. The IoU of
    the foot and head boxes is taken at the frame where that maximum lands.
    A window whose defender head was unresolved at that frame yields
    impact_detected=False flagged "head_unresolved".
    """
    speeds = window.features.ankle_speed_series
    frames = window.frames
    times = [f.t for f in frames]

    # The feature extractor chose the kicking ankle by peak speed; recompute
    # the same choice so box geometry uses the same joint.
    from .kinematics import ankle_speed_series  # local to avoid cycle at import

    ankle_i = R_ANKLE
    if max(ankle_speed_series(frames, L_ANKLE)) > max(ankle_speed_series(frames, R_ANKLE)):
        ankle_i = L_ANKLE

    best_decel = 0.0
    best_frame = len(frames) - 1
    n = len(speeds)
    for i in range(1, n):
        for span in range(1, max_span + 1):
            j = i - span
            if j < 1:
                continue  # speeds[0] is a filler zero, not a measured speed
            dt = times[i] - times[j]
            if dt <= 0:
                continue
            d = deceleration(speeds[j], speeds[i], dt)
            if d > best_decel:
                best_decel = d
                best_frame = i

    flags: list[str] = []
    head = window.defender_head[best_frame]
    if head is None:
        return ImpactEvidence.evaluate(
            best_decel, 0.0, times[best_frame], window.features.torso_rotation_deg,
            config, flags=("head_unresolved",),
        )
    ankle = frames[best_frame].keypoints[ankle_i]
    overlap = iou(foot_bbox((ankle.x, ankle.y), config), head_bbox(head, config))
    return ImpactEvidence.evaluate(
        best_decel, overlap, times[best_frame], window.features.torso_rotation_deg,
        config, flags=tuple(flags),
    )


def resolve_action(
    action: ActionClass, evidence: ImpactEvidence, config: PipelineConfig
) -> tuple[ActionClass, tuple[str, ...]]:
    """Apply the rotation-evidence override.

    Measured rotation strictly above the turning threshold promotes a
    standard kick to a turning kick; the physical evidence wins over the
    classifier on this axis and the disagreement is flagged for the jury.
    """
    if (
        action is ActionClass.STANDARD_HEAD_KICK
        and evidence.rotation_deg > config.rotation_turning_deg
    ):
        return ActionClass.TURNING_HEAD_KICK, ("rotation_promoted",)
    return action, ()


def assign_score(
    action: ActionClass, evidence: ImpactEvidence, config: PipelineConfig
) -> int:
    """Points for a classified window: 0 without verified impact, 3 for a
    standard head kick, 5 for a turning head kick."""
    action, _ = resolve_action(action, evidence, config)
    if action is ActionClass.SLIDE or not evidence.impact_detected:
        return 0
    return 5 if action is ActionClass.TURNING_HEAD_KICK else 3


@dataclass(frozen=True)
class DecisionPackage:
    """The unit of officiating output shown to the jury."""

    event_id: str
    action_class: ActionClass
    score: int
    confidence: float
    evidence: ImpactEvidence
    window_ref: str
    latency: LatencyBreakdown
    model_version: int
    flags: tuple[str, ...] = ()

    def to_wire(self) -> dict:
        return {
            "event": self.event_id,
            "class": self.action_class.wire_name,
            "score": self.score,
            "conf": self.confidence,
            "evidence": {
                "decel": self.evidence.decel_m_s2,
                "iou": self.evidence.iou_value,
                "rot_deg": self.evidence.rotation_deg,
                "impact": self.evidence.impact_detected,
            },
            "latency_ms": {
                "pose": self.latency.t_pose_ms,
                "class": self.latency.t_class_ms,
                "impact": self.latency.t_impact_ms,
                "total": self.latency.t_total_ms,
            },
            "model_version": self.model_version,
            "flags": list(self.flags),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_wire(), separators=(",", ":"))


class StageTimer:
    """Books per-stage wall time against an injected monotonic clock.

    Stages: "pose" (tracking + feature extraction), "class", "impact".
    """

    STAGES = ("pose", "class", "impact")

    def __init__(self, clock: Callable[[], float] = time.perf_counter):
        self._clock = clock
        self._booked: dict[str, float] = {}

    def book(self, stage: str, seconds: float) -> None:
        if stage not in self.STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        self._booked[stage] = self._booked.get(stage, 0.0) + seconds * 1000.0

    def measure(self, stage: str):
        timer = self

        class _Span:
            def __enter__(self):
                self._start = timer._clock()
                return self

            def __exit__(self, *exc):
                timer.book(stage, timer._clock() - self._start)
                return False

        return _Span()

    def breakdown(self) -> LatencyBreakdown:
        missing = [s for s in self.STAGES if s not in self._booked]
        if missing:
            raise ValueError("incomplete_timing")
        return LatencyBreakdown(
            t_pose_ms=self._booked["pose"],
            t_class_ms=self._booked["class"],
            t_impact_ms=self._booked["impact"],
        )


def build_decision(
    window: ActionWindow,
    probs: ClassProbabilities,
    evidence: ImpactEvidence,
    timers: StageTimer,
    model_version: int,
    config: PipelineConfig,
) -> DecisionPackage:
    """Assemble the jury-facing package for one window.

    Raises ValueError("incomplete_timing") when a stage timer is missing.
    """
    latency = timers.breakdown()
    action, promo_flags = resolve_action(probs.predicted, evidence, config)
    score = assign_score(probs.predicted, evidence, config)
    flags = list(window.flags) + list(evidence.flags) + list(promo_flags)
    if score == 0 and action is not ActionClass.SLIDE and not evidence.impact_detected:
        flags.append("no_impact")
    if latency.t_total_ms > config.latency_budget_ms:
        flags.append("budget_exceeded")
    return DecisionPackage(
        event_id=window.event_id,
        action_class=action,
        score=score,
        confidence=probs.confidence,
        evidence=evidence,
        window_ref=window.event_id,
        latency=latency,
        model_version=model_version,
        flags=tuple(flags),
    )
