"""Human-in-the-loop resolution, feedback logging and classifier retraining.

Every confirm/override becomes a training sample (features, AI label, jury
label). Retraining minimizes a two-term loss: cross-entropy of the model's
probabilities against the jury label, plus a squared calibration gap between
the model's confidence and the jury's (a verdict counts as confidence 1).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import ActionClass, PipelineConfig
from .action import ClassifierModel, ClassProbabilities, ModelError, _descend, _softmax
from .impact import DecisionPackage
from .kinematics import WindowFeatures

# Hard liveness rule: without a verdict the AI decision stands after this.
AUTO_FINAL_TIMEOUT_S = 30.0

# Scores a jury override may pair with each class (0 always allowed: the
# jury can void any action).
VALID_SCORES = {
    ActionClass.SLIDE: (0,),
    ActionClass.STANDARD_HEAD_KICK: (0, 3),
    ActionClass.TURNING_HEAD_KICK: (0, 5),
}


def nominal_score(action: ActionClass) -> int:
    """Score implied by a class alone (impact assumed): 0 / 3 / 5.

    Used for offline classifier evaluation, where there is no impact
    evidence and a kick call is counted as a scored event.
    """
    return {ActionClass.SLIDE: 0, ActionClass.STANDARD_HEAD_KICK: 3,
            ActionClass.TURNING_HEAD_KICK: 5}[action]


class VerdictError(ValueError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


@dataclass(frozen=True)
class JuryVerdict:
    """One juror's response to a decision: confirm it or override it."""

    event_id: str
    verdict: str  # "confirm" | "override"
    juror_id: str
    t_verdict: float
    elapsed_ms: float = 0.0
    corrected_class: Optional[ActionClass] = None
    corrected_score: Optional[int] = None

    def __post_init__(self):
        if self.verdict not in ("confirm", "override"):
            raise VerdictError("bad_verdict_kind")
        if self.verdict == "override":
            if self.corrected_class is None or self.corrected_score is None:
                raise VerdictError("override_requires_correction")
            if self.corrected_score not in VALID_SCORES[self.corrected_class]:
                raise VerdictError("inconsistent_override")
        else:
            if self.corrected_class is not None or self.corrected_score is not None:
                raise VerdictError("confirm_forbids_correction")

    @classmethod
    def from_wire(cls, obj: dict) -> "JuryVerdict":
        kind = str(obj.get("verdict", ""))
        corrected_class = None
        corrected_score = None
        if kind == "override":
            corrected_class = ActionClass.from_wire(str(obj.get("class", "")))
            corrected_score = int(obj.get("score"))
        return cls(
            event_id=str(obj.get("event", "")),
            verdict=kind,
            juror_id=str(obj.get("juror", "")),
            t_verdict=float(obj.get("t", 0.0)),
            corrected_class=corrected_class,
            corrected_score=corrected_score,
        )

    def to_wire(self) -> dict:
        doc = {
            "event": self.event_id,
            "verdict": self.verdict,
            "juror": self.juror_id,
            "t": self.t_verdict,
        }
        if self.verdict == "override":
            doc["class"] = self.corrected_class.wire_name
            doc["score"] = self.corrected_score
        return doc


@dataclass(frozen=True)
class FinalRecord:
    """The decision of record after jury resolution."""

    event_id: str
    action_class: ActionClass
    score: int
    source: str  # "ai" | "jury"
    verdict_kind: str  # "confirm" | "override" | "auto"
    juror_id: str = ""
    model_version: int = 0
    class_delta: int = 0  # jury ordinal minus AI ordinal
    score_delta: int = 0  # jury score minus AI score
    flags: tuple[str, ...] = ()

    def to_wire(self) -> dict:
        return {
            "event": self.event_id,
            "class": self.action_class.wire_name,
            "score": self.score,
            "source": self.source,
            "verdict": self.verdict_kind,
            "juror": self.juror_id,
            "model_version": self.model_version,
            "class_delta": self.class_delta,
            "score_delta": self.score_delta,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class FeedbackSample:
    """Logged training triple: features, AI prediction, jury label."""

    features: WindowFeatures
    y_ai: ActionClass
    p_ai: tuple[float, float, float]
    y_jury: ActionClass
    p_jury: tuple[float, float, float]
    event_id: str
    model_version: int

    def __post_init__(self):
        if abs(sum(self.p_ai) - 1.0) > 1e-9:
            raise ValueError("p_ai must be a probability simplex")
        if sorted(self.p_jury, reverse=True) != [1.0, 0.0, 0.0]:
            raise ValueError("p_jury must be one-hot")

    @classmethod
    def build(
        cls,
        features: WindowFeatures,
        probs: ClassProbabilities,
        y_jury: ActionClass,
        event_id: str,
        model_version: int,
    ) -> "FeedbackSample":
        one_hot = [0.0, 0.0, 0.0]
        one_hot[int(y_jury)] = 1.0
        return cls(
            features=features,
            y_ai=probs.predicted,
            p_ai=probs.p,
            y_jury=y_jury,
            p_jury=tuple(one_hot),
            event_id=event_id,
            model_version=model_version,
        )

    def to_wire(self) -> dict:
        return {
            "event": self.event_id,
            "model_version": self.model_version,
            "y_ai": self.y_ai.wire_name,
            "p_ai": list(self.p_ai),
            "y_jury": self.y_jury.wire_name,
            "p_jury": list(self.p_jury),
            "features": self.features.to_wire(),
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "FeedbackSample":
        return cls(
            features=WindowFeatures.from_wire(obj["features"]),
            y_ai=ActionClass.from_wire(obj["y_ai"]),
            p_ai=tuple(float(v) for v in obj["p_ai"]),
            y_jury=ActionClass.from_wire(obj["y_jury"]),
            p_jury=tuple(float(v) for v in obj["p_jury"]),
            event_id=str(obj["event"]),
            model_version=int(obj["model_version"]),
        )


def resolve_final(decision: DecisionPackage, verdict: JuryVerdict) -> FinalRecord:
    """Combine the AI decision with the jury verdict into the final record.

    Raises VerdictError("verdict_event_mismatch") for a verdict addressed to
    a different event. Duplicate protection lives in DecisionResolver.
    """
    if verdict.event_id != decision.event_id:
        raise VerdictError("verdict_event_mismatch")
    if verdict.verdict == "confirm":
        return FinalRecord(
            event_id=decision.event_id,
            action_class=decision.action_class,
            score=decision.score,
            source="ai",
            verdict_kind="confirm",
            juror_id=verdict.juror_id,
            model_version=decision.model_version,
        )
    return FinalRecord(
        event_id=decision.event_id,
        action_class=verdict.corrected_class,
        score=verdict.corrected_score,
        source="jury",
        verdict_kind="override",
        juror_id=verdict.juror_id,
        model_version=decision.model_version,
        class_delta=int(verdict.corrected_class) - int(decision.action_class),
        score_delta=verdict.corrected_score - decision.score,
    )


class DecisionResolver:
    """Pending-decision table with duplicate rejection and auto-finalize.

    Per-event resolution is serialized by the caller; the table itself only
    tracks which events are pending or already final.
    """

    def __init__(self, timeout_s: float = AUTO_FINAL_TIMEOUT_S):
        self.timeout_s = timeout_s
        self._pending: dict[str, tuple[DecisionPackage, float]] = {}
        self._resolved: dict[str, FinalRecord] = {}

    def add(self, decision: DecisionPackage, emitted_at: float) -> None:
        if decision.event_id in self._pending or decision.event_id in self._resolved:
            raise VerdictError("duplicate_event")
        self._pending[decision.event_id] = (decision, emitted_at)

    def pending_events(self) -> list[str]:
        return list(self._pending)

    def get_final(self, event_id: str) -> Optional[FinalRecord]:
        return self._resolved.get(event_id)

    def resolve(self, verdict: JuryVerdict, now: float) -> FinalRecord:
        if verdict.event_id in self._resolved:
            raise VerdictError("already_resolved")
        entry = self._pending.get(verdict.event_id)
        if entry is None:
            raise VerdictError("unknown_event")
        decision, emitted_at = entry
        verdict = replace(verdict, elapsed_ms=max(0.0, (now - emitted_at) * 1000.0))
        record = resolve_final(decision, verdict)
        del self._pending[verdict.event_id]
        self._resolved[verdict.event_id] = record
        return record

    def expire(self, now: float) -> list[tuple[DecisionPackage, FinalRecord]]:
        """Auto-finalize every pending decision older than the timeout."""
        done = []
        for event_id, (decision, emitted_at) in list(self._pending.items()):
            if now - emitted_at < self.timeout_s:
                continue
            record = FinalRecord(
                event_id=event_id,
                action_class=decision.action_class,
                score=decision.score,
                source="ai",
                verdict_kind="auto",
                model_version=decision.model_version,
                flags=("auto_final",),
            )
            del self._pending[event_id]
            self._resolved[event_id] = record
            done.append((decision, record))
        return done


def feedback_loss(
    sample: FeedbackSample, lambda_cross: float = 1.0, lambda_conf: float = 0.5
) -> float:
    """Weighted cross-entropy plus squared confidence-calibration gap.

    The jury's probability vector is one-hot, so its confidence term is 1.
    A zero model probability on the jury label is clamped at 1e-12.
    """
    p_target = sample.p_ai[int(sample.y_jury)]
    ce = -math.log(max(p_target, 1e-12))
    conf_gap = (max(sample.p_ai) - max(sample.p_jury)) ** 2
    return lambda_cross * ce + lambda_conf * conf_gap


def _feedback_loss_grad(
    W: np.ndarray,
    Xs: np.ndarray,
    labels: np.ndarray,
    lambda_cross: float,
    lambda_conf: float,
) -> tuple[float, np.ndarray]:
    """Mean feedback loss over the log and its gradient w.r.t. the weights."""
    n = Xs.shape[0]
    probs = _softmax(Xs @ W.T)  # n x 3
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), labels] = 1.0

    clipped = np.clip(probs, 1e-12, None)
    ce = -np.log(clipped[np.arange(n), labels])
    max_idx = probs.argmax(axis=1)
    p_max = probs[np.arange(n), max_idx]
    conf = (p_max - 1.0) ** 2
    loss = float((lambda_cross * ce + lambda_conf * conf).mean())

    # d(ce)/d(logits) = p - onehot.
    dlogits = lambda_cross * (probs - onehot)
    # d(conf)/d(logits_j) = 2 (p_m - 1) p_m (delta_mj - p_j), m = argmax.
    coeff = 2.0 * (p_max - 1.0) * p_max
    dmax = -probs * coeff[:, None]
    dmax[np.arange(n), max_idx] += coeff
    dlogits = dlogits + lambda_conf * dmax
    grad = dlogits.T @ Xs / n
    return loss, grad


def retrain(
    model: ClassifierModel,
    feedback_log: Sequence[FeedbackSample],
    epochs: int = 500,
    learning_rate: float = 0.5,
    config: Optional[PipelineConfig] = None,
) -> ClassifierModel:
    """Gradient descent on the mean feedback loss, jury labels as targets.

    Returns a new model with version+1; the input model is untouched.
    Standardization parameters carry over so decisions stay comparable
    across versions. Raises ValueError("no_feedback") on an empty log and
    ModelError for a non-linear model.
    """
    if model.kind != "linear":
        raise ModelError("retrain requires a linear model")
    if not feedback_log:
        raise ValueError("no_feedback")
    lam_cross = config.lambda_cross if config else 1.0
    lam_conf = config.lambda_conf if config else 0.5

    means = np.asarray(model.feature_means)
    stds = np.asarray(model.feature_stds)
    X = np.array([s.features.vector() for s in feedback_log], dtype=float)
    Xs = np.concatenate([(X - means) / stds, np.ones((X.shape[0], 1))], axis=1)
    labels = np.array([int(s.y_jury) for s in feedback_log])

    W = np.asarray(model.weights, dtype=float)
    W = _descend(
        W, epochs, learning_rate,
        lambda w: _feedback_loss_grad(w, Xs, labels, lam_cross, lam_conf),
    )
    return replace(
        model,
        version=model.version + 1,
        weights=tuple(tuple(row) for row in W.tolist()),
    )


def mean_feedback_loss(
    model: ClassifierModel,
    feedback_log: Sequence[FeedbackSample],
    lambda_cross: float = 1.0,
    lambda_conf: float = 0.5,
) -> float:
    """Mean Eq-style feedback loss of a model over a log, via classify."""
    from .action import classify_linear

    total = 0.0
    for s in feedback_log:
        probs = classify_linear(s.features, model)
        rescored = replace(s, p_ai=probs.p, y_ai=probs.predicted)
        total += feedback_loss(rescored, lambda_cross, lambda_conf)
    return total / len(feedback_log)


def fp_rate(
    decisions: Sequence[FinalRecord | DecisionPackage],
    ground_truth: Sequence[ActionClass],
) -> float:
    """Fraction of non-kick ground-truth events that received points."""
    if len(decisions) != len(ground_truth):
        raise ValueError("length_mismatch")
    negatives = 0
    false_pos = 0
    for decision, truth in zip(decisions, ground_truth):
        if truth is not ActionClass.SLIDE:
            continue
        negatives += 1
        if decision.score > 0:
            false_pos += 1
    if negatives == 0:
        return 0.0
    return false_pos / negatives


class FeedbackLog:
    """Append-only JSONL store of feedback samples, fsynced per append."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def append(self, sample: FeedbackSample) -> None:
        line = json.dumps(sample.to_wire(), separators=(",", ":"))
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(line + "\n")
            f.flush()
            os.fsync(f.fileno())

    def load(self) -> list[FeedbackSample]:
        if not self.path.exists():
            return []
        samples = []
        with open(self.path, "r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    samples.append(FeedbackSample.from_wire(json.loads(line)))
        return samples
