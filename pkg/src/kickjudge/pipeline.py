"""Per-match decision pipeline: validate, track, segment, classify, score.

One MatchPipeline owns all mutable state for a match (both athletes). Frames
must arrive in stream order per athlete; the pipeline is symmetric, so either
athlete's kicks are scored against the other athlete's head. Used unchanged
by file replay and by the live service.
"""

from __future__ import annotations

import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

logger = logging.getLogger(__name__)

from . import core
from .core import (
    ActionClass,
    FrameRejected,
    Keypoint,
    PipelineConfig,
    PoseFrame,
    StreamValidator,
    frame_from_json,
)
from .tracking import FilterParams, TrackBank
from .action import ActionWindow, ClassifierModel, RULE_BASED_MODEL, Segmenter, classify
from .impact import DecisionPackage, StageTimer, build_decision, detect_impact


@dataclass
class _AthleteState:
    bank: TrackBank
    segmenter: Segmenter
    track_seconds: deque  # per-frame tracking cost, most recent last
    last_head: Optional[tuple[float, float]] = None
    head_lost: bool = True
    head_warned: bool = False
    last_smoothed: Optional[PoseFrame] = None


class MatchPipeline:
    """Streaming pipeline for one match."""

    def __init__(
        self,
        match_id: str,
        config: Optional[PipelineConfig] = None,
        filter_params: Optional[FilterParams] = None,
        model: Optional[ClassifierModel] = None,
        clock: Callable[[], float] = time.perf_counter,
    ):
        self.match_id = match_id
        self.config = config or PipelineConfig()
        self.filter_params = filter_params or FilterParams()
        self.model = model or RULE_BASED_MODEL
        self.clock = clock
        self.validator = StreamValidator(self.config)
        self._athletes: dict[str, _AthleteState] = {}
        self._event_count = 0
        self.malformed_lines = 0
        self.dropped_frames = 0
        self.windows_emitted = 0
        # Window + probabilities per recent event, for feedback samples and
        # console playback; bounded so long matches stay bounded.
        self._artifacts: "dict[str, tuple[ActionWindow, object]]" = {}
        self._artifact_order: deque[str] = deque()

    def set_model(self, model: ClassifierModel) -> None:
        """Atomic model swap; in-flight windows keep the version they saw."""
        self.model = model

    def _state_for(self, athlete_id: str) -> _AthleteState:
        state = self._athletes.get(athlete_id)
        if state is None:
            n = self.config.window_frames
            state = _AthleteState(
                bank=TrackBank(self.config, self.filter_params),
                segmenter=Segmenter(
                    self.config,
                    event_prefix="E",
                    # Ids must stay unique per match even with two kickers.
                    event_start=1000 * len(self._athletes),
                ),
                track_seconds=deque(maxlen=n),
            )
            self._athletes[athlete_id] = state
        return state

    def _opponent_head(self, athlete_id: str) -> Optional[tuple[float, float]]:
        others = [s for a, s in self._athletes.items() if a != athlete_id]
        if len(others) != 1:
            return None
        other = others[0]
        if other.head_lost or other.last_head is None:
            return None
        hx, hy = other.last_head
        if not (math.isfinite(hx) and math.isfinite(hy)):
            return None
        return other.last_head

    def process_line(self, line: str) -> list[DecisionPackage]:
        """Parse and process one wire line; malformed input is counted and
        skipped, out-of-order frames are counted and dropped."""
        line = line.strip()
        if not line:
            return []
        try:
            frame = frame_from_json(line)
        except FrameRejected:
            self.malformed_lines += 1
            return []
        try:
            return self.process_frame(frame)
        except FrameRejected as exc:
            if exc.reason == "bad_timestamp":
                self.dropped_frames += 1
            else:
                self.malformed_lines += 1
            return []

    def process_frame(self, frame: PoseFrame) -> list[DecisionPackage]:
        """Run one validated frame through the pipeline; returns any decision
        completed by this frame."""
        if frame.match_id != self.match_id:
            raise FrameRejected("wrong_match", frame.match_id)
        validated = self.validator.validate(frame)
        state = self._state_for(frame.athlete_id)

        t0 = self.clock()
        measurements = [(k.x, k.y, k.confidence) for k in frame.keypoints]
        positions = state.bank.step(frame.t, measurements)
        state.last_head = positions[core.HEAD]
        state.head_lost = state.bank.is_lost(core.HEAD)
        smoothed = PoseFrame(
            t=frame.t,
            match_id=frame.match_id,
            athlete_id=frame.athlete_id,
            keypoints=tuple(
                Keypoint(p[0], p[1], k.confidence)
                for p, k in zip(positions, frame.keypoints)
            ),
        )
        state.last_smoothed = smoothed
        track_cost = self.clock() - t0
        state.track_seconds.append(track_cost)

        head = self._opponent_head(frame.athlete_id)
        if head is None and len(self._athletes) > 1 and not state.head_warned:
            logger.warning(
                "%s: opponent head unresolved for %s at t=%.3f; no candidates until it recovers",
                self.match_id, frame.athlete_id, frame.t,
            )
            state.head_warned = True
        elif head is not None:
            state.head_warned = False
        t1 = self.clock()
        window = state.segmenter.push(smoothed, head)
        push_cost = self.clock() - t1
        if window is None:
            return []
        return [self._decide(frame.athlete_id, window, push_cost)]

    def flush(self) -> list[DecisionPackage]:
        """Emit any window still pending at end of stream."""
        out = []
        for athlete_id, state in self._athletes.items():
            t0 = self.clock()
            window = state.segmenter.flush()
            cost = self.clock() - t0
            if window is not None:
                out.append(self._decide(athlete_id, window, cost))
        return out

    def _decide(
        self, athlete_id: str, window: ActionWindow, extraction_seconds: float
    ) -> DecisionPackage:
        self.windows_emitted += 1
        timer = StageTimer(self.clock)
        pose_seconds = extraction_seconds
        for state in self._athletes.values():
            pose_seconds += sum(state.track_seconds)
        timer.book("pose", pose_seconds)
        model = self.model  # snapshot: retrain swaps are atomic
        with timer.measure("class"):
            probs = classify(window.features, model, self.config)
        with timer.measure("impact"):
            evidence = detect_impact(window, self.config)
        decision = build_decision(window, probs, evidence, timer, model.version, self.config)
        self._artifacts[decision.event_id] = (window, probs)
        self._artifact_order.append(decision.event_id)
        while len(self._artifact_order) > 256:
            self._artifacts.pop(self._artifact_order.popleft(), None)
        return decision

    def artifacts_for(self, event_id: str):
        """(window, probabilities) for a recent decision, or None."""
        return self._artifacts.get(event_id)

    def playback_payload(self, window: ActionWindow) -> dict:
        """Overlay data for the jury console: per-frame skeleton + head."""
        return {
            "fps": _infer_fps(window),
            "frames": [[[k.x, k.y] for k in f.keypoints] for f in window.frames],
            "head": [list(h) if h is not None else None for h in window.defender_head],
            "head_box_side": self.config.head_box_side_m,
            "foot_box_side": self.config.foot_box_side_m,
        }


def _infer_fps(window: ActionWindow) -> float:
    steps = [b.t - a.t for a, b in zip(window.frames, window.frames[1:]) if b.t > a.t]
    if not steps:
        return 60.0
    return 1.0 / (sorted(steps)[len(steps) // 2])


@dataclass
class ReplayResult:
    decisions: list[DecisionPackage] = field(default_factory=list)
    windows: list[ActionWindow] = field(default_factory=list)
    malformed_lines: int = 0
    dropped_frames: int = 0


def replay_file(
    path: str | Path,
    config: Optional[PipelineConfig] = None,
    filter_params: Optional[FilterParams] = None,
    model: Optional[ClassifierModel] = None,
    speed_factor: Optional[float] = None,
    clock: Callable[[], float] = time.perf_counter,
    on_decision: Optional[Callable[[DecisionPackage], None]] = None,
) -> ReplayResult:
    """Feed a frame JSONL file through fresh pipelines, one per match.

    speed_factor None means unpaced (as fast as possible); otherwise frame
    timestamps are honored scaled by 1/speed_factor.
    """
    pipelines: dict[str, MatchPipeline] = {}
    result = ReplayResult()
    prev_t: Optional[float] = None
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            try:
                frame = frame_from_json(line)
            except FrameRejected:
                result.malformed_lines += 1
                continue
            if speed_factor:
                if prev_t is not None and frame.t > prev_t:
                    time.sleep((frame.t - prev_t) / speed_factor)
                prev_t = max(prev_t, frame.t) if prev_t is not None else frame.t
            pipe = pipelines.get(frame.match_id)
            if pipe is None:
                pipe = MatchPipeline(frame.match_id, config, filter_params, model, clock)
                pipelines[frame.match_id] = pipe
            try:
                decisions = pipe.process_frame(frame)
            except FrameRejected as exc:
                if exc.reason == "bad_timestamp":
                    result.dropped_frames += 1
                else:
                    result.malformed_lines += 1
                continue
            for d in decisions:
                result.decisions.append(d)
                if on_decision:
                    on_decision(d)
    for pipe in pipelines.values():
        for d in pipe.flush():
            result.decisions.append(d)
            if on_decision:
                on_decision(d)
        result.malformed_lines += pipe.malformed_lines
        result.dropped_frames += pipe.dropped_frames
    return result


# ---------------------------------------------------------------------------
# Metrics against ground truth
# ---------------------------------------------------------------------------

_MATCH_TOLERANCE_S = 0.8


def compute_metrics(
    decisions: list[DecisionPackage],
    truth: Optional[list[dict]],
    config: Optional[PipelineConfig] = None,
) -> dict:
    """Aggregate accuracy/fp-rate/latency for a replay run.

    Decisions are matched to ground-truth events by impact-frame time. A
    slide counts as correct when nothing was scored near it (or the decision
    says slide); a kick must be matched with the right class, and its points
    must equal the ground-truth score to count as exact.
    """
    config = config or PipelineConfig()
    latencies = sorted(d.latency.t_total_ms for d in decisions)
    budget_violations = sum(1 for d in decisions if "budget_exceeded" in d.flags)
    out: dict = {
        "events": len(truth) if truth is not None else len(decisions),
        "decisions": len(decisions),
        "latency_ms": {
            "mean": float(np.mean(latencies)) if latencies else 0.0,
            "p95": float(np.percentile(latencies, 95)) if latencies else 0.0,
            "max": latencies[-1] if latencies else 0.0,
        },
        "budget_violations": budget_violations,
    }
    if truth is None:
        return out

    used: set[int] = set()

    def match_decision(t_impact: float) -> Optional[tuple[int, DecisionPackage]]:
        best = None
        for i, d in enumerate(decisions):
            if i in used:
                continue
            gap = abs(d.evidence.impact_frame_t - t_impact)
            if gap <= _MATCH_TOLERANCE_S and (best is None or gap < best[0]):
                best = (gap, i, d)
        if best is None:
            return None
        return best[1], best[2]

    correct = 0
    exact_scores = 0
    slides = 0
    slide_fp = 0
    for event in truth:
        truth_class = ActionClass.from_wire(event["class"])
        matched = match_decision(float(event["t_impact"]))
        if truth_class is ActionClass.SLIDE:
            slides += 1
            if matched is None or matched[1].action_class is ActionClass.SLIDE:
                correct += 1
                if matched is not None:
                    used.add(matched[0])
                if matched is not None and matched[1].score == int(event["score"]):
                    exact_scores += 1
            else:
                used.add(matched[0])
                if matched[1].score > 0:
                    slide_fp += 1
            continue
        if matched is None:
            continue
        used.add(matched[0])
        if matched[1].action_class is truth_class:
            correct += 1
            if matched[1].score == int(event["score"]):
                exact_scores += 1

    out["accuracy"] = correct / len(truth) if truth else 1.0
    out["fp_rate"] = slide_fp / slides if slides else 0.0
    out["correct"] = correct
    out["exact_scores"] = exact_scores
    return out
