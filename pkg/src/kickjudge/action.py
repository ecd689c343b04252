"""Action segmentation and classification.

The stream is cut into fixed-length windows anchored on the head-proximity
trigger (ankle near head height and horizontally close). Each window is
classified as slide / standard head kick / turning head kick either by a
deterministic rule baseline or by a trainable multinomial linear model over
the six summary features. The rule baseline is the default; the linear model
exists so jury feedback can actually move the system.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import ActionClass, L_ANKLE, PipelineConfig, PoseFrame, R_ANKLE
from .kinematics import SLIDE_SPEED_FLOOR_M_S, Point, WindowFeatures, extract_features

# Fixed calibration of the rule baseline: it has no native probabilities, so
# the chosen class gets a constant confident mass.
RULE_CONFIDENCE = 0.9


@dataclass(frozen=True)
class ClassProbabilities:
    """A probability vector over (slide, standard, turning), always summing
    to 1; predicted is the argmax with ties broken toward the lowest ordinal."""

    p: tuple[float, float, float]

    def __post_init__(self):
        total = sum(self.p)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total}, not 1")
        if any(v < 0.0 or v > 1.0 for v in self.p):
            raise ValueError("probabilities must lie in [0, 1]")

    @property
    def predicted(self) -> ActionClass:
        best = max(range(3), key=lambda i: (self.p[i], -i))
        return ActionClass(best)

    @property
    def confidence(self) -> float:
        return max(self.p)


@dataclass(frozen=True)
class ActionWindow:
    """One candidate window: smoothed attacker frames right-aligned on the
    trigger frame, with the defender head position per frame."""

    event_id: str
    frames: tuple[PoseFrame, ...]
    defender_head: tuple[Optional[Point], ...]
    t_start: float
    t_end: float
    features: WindowFeatures
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if "padded" not in self.flags and len(self.frames) >= 2:
            span = self.t_end - self.t_start
            steps = [b.t - a.t for a, b in zip(self.frames, self.frames[1:])]
            expected = (len(self.frames) - 1) * (sorted(steps)[len(steps) // 2])
            if expected > 0 and abs(span - expected) > 0.1 * expected:
                raise ValueError("window span inconsistent with frame interval")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ClassifierModel:
    """Versioned parameters of the action classifier.

    kind "rule_based" ignores the matrices; kind "linear" applies softmax
    over weights @ [standardized features, 1]. Weights are 3 x (d+1) with the
    bias in the last column.
    """

    kind: str
    version: int
    feature_means: tuple[float, ...] = ()
    feature_stds: tuple[float, ...] = ()
    weights: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self):
        if self.kind not in ("rule_based", "linear"):
            raise ModelError(f"unknown model kind {self.kind!r}")
        if self.kind == "linear":
            d = len(self.feature_means)
            if len(self.feature_stds) != d:
                raise ModelError("means/stds length mismatch")
            if any(s <= 0 for s in self.feature_stds):
                raise ModelError("feature stds must all be > 0")
            if len(self.weights) != 3 or any(len(row) != d + 1 for row in self.weights):
                raise ModelError("weights must be 3 x (d+1)")

    def to_wire(self) -> dict:
        return {
            "version": self.version,
            "kind": self.kind,
            "means": list(self.feature_means),
            "stds": list(self.feature_stds),
            "weights": [list(row) for row in self.weights],
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "ClassifierModel":
        return cls(
            kind=str(obj["kind"]),
            version=int(obj["version"]),
            feature_means=tuple(float(v) for v in obj["means"]),
            feature_stds=tuple(float(v) for v in obj["stds"]),
            weights=tuple(tuple(float(v) for v in row) for row in obj["weights"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_wire()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ClassifierModel":
        return cls.from_wire(json.loads(Path(path).read_text(encoding="utf-8")))


RULE_BASED_MODEL = ClassifierModel(kind="rule_based", version=0)


def detect_candidate(
    frame: PoseFrame, defender_head: Optional[Point], config: PipelineConfig
) -> bool:
    """Head-proximity trigger: either ankle at head height (within the head
    margin) and horizontally within the strict horizontal margin."""
    if defender_head is None:
        return False
    hx, hy = defender_head
    if not (math.isfinite(hx) and math.isfinite(hy)):
        return False
    for ankle_i in (R_ANKLE, L_ANKLE):
        ankle = frame.keypoints[ankle_i]
        if ankle.y >= hy - config.head_margin_m and abs(ankle.x - hx) < config.horiz_margin_m:
            return True
    return False


class Segmenter:
    """Per-athlete sliding-window segmentation state.

    The proximity trigger holds over a short run of frames while the foot
    approaches and leaves the head zone; the window is anchored on the
    closest-approach frame of that run so the impact physics land inside the
    window. Emission happens when the run ends (or when it exceeds one full
    window length). A refractory period of window_frames frames after each
    emitted window suppresses overlap.
    """

    def __init__(self, config: PipelineConfig, event_prefix: str = "E", event_start: int = 0):
        self.config = config
        self.event_prefix = event_prefix
        n = config.window_frames
        self._buffer: deque[tuple[PoseFrame, Optional[Point]]] = deque(maxlen=2 * n)
        self._frame_count = 0
        self._event_count = event_start
        self._run_active = False
        self._run_best_dist = math.inf
        self._run_best_index = -1  # global frame index of closest approach
        self._run_len = 0
        self._refractory_until = -1

    def _next_event_id(self) -> str:
        self._event_count += 1
        return f"{self.event_prefix}{self._event_count}"

    def push(self, frame: PoseFrame, defender_head: Optional[Point]) -> Optional[ActionWindow]:
        """Feed one smoothed frame; returns a window when one completes."""
        self._buffer.append((frame, defender_head))
        index = self._frame_count
        self._frame_count += 1

        if index < self._refractory_until:
            return None

        is_candidate = detect_candidate(frame, defender_head, self.config)
        if is_candidate:
            hx, hy = defender_head
            dist = math.inf
            for ankle_i in (R_ANKLE, L_ANKLE):
                a = frame.keypoints[ankle_i]
                dist = min(dist, math.hypot(a.x - hx, a.y - hy))
            if not self._run_active:
                self._run_active = True
                self._run_best_dist = dist
                self._run_best_index = index
                self._run_len = 1
            else:
                self._run_len += 1
                if dist < self._run_best_dist:
                    self._run_best_dist = dist
                    self._run_best_index = index
            if self._run_len >= self.config.window_frames:
                return self._emit(index)
            return None

        if self._run_active:
            return self._emit(index)
        return None

    def flush(self) -> Optional[ActionWindow]:
        """Emit a pending run at end of stream."""
        if self._run_active:
            return self._emit(self._frame_count - 1)
        return None

    def _emit(self, current_index: int) -> ActionWindow:
        self._run_active = False
        anchor = self._run_best_index
        self._refractory_until = anchor + self.config.window_frames
        n = self.config.window_frames

        # Pull the n frames ending at the anchor out of the buffer.
        offset_from_end = current_index - anchor
        buf = list(self._buffer)
        end = len(buf) - offset_from_end
        start = end - n
        flags: list[str] = []
        if start < 0:
            # Stream too young: pad by repeating the first frame, with
            # timestamps extended backwards so the window keeps its span.
            missing = -start
            first_frame, first_head = buf[0]
            if len(buf) >= 2 and buf[1][0].t > first_frame.t:
                step = buf[1][0].t - first_frame.t
            else:
                step = 1.0 / 60.0
            pad = [
                (replace(first_frame, t=first_frame.t - step * (missing - k)), first_head)
                for k in range(missing)
            ]
            window_slice = pad + buf[:end]
            flags.append("padded")
        else:
            window_slice = buf[start:end]

        frames = tuple(f for f, _ in window_slice)
        heads = tuple(h for _, h in window_slice)
        features = extract_features(frames, heads, self.config)
        return ActionWindow(
            event_id=self._next_event_id(),
            frames=frames,
            defender_head=heads,
            t_start=frames[0].t,
            t_end=frames[-1].t,
            features=features,
            flags=tuple(flags),
        )


def segment(
    stream: Iterable[tuple[PoseFrame, Optional[Point]]], config: PipelineConfig
) -> list[ActionWindow]:
    """Run the segmenter over a finished (frame, defender_head) stream."""
    seg = Segmenter(config)
    windows = []
    for frame, head in stream:
        w = seg.push(frame, head)
        if w is not None:
            windows.append(w)
    w = seg.flush()
    if w is not None:
        windows.append(w)
    return windows


def _head_reached(features: WindowFeatures, config: PipelineConfig) -> bool:
    return (
        features.ankle_head_dy_min <= config.head_margin_m
        and features.ankle_head_dx_min < config.horiz_margin_m
    )


def classify_rules(features: WindowFeatures, config: PipelineConfig) -> ClassProbabilities:
    """Deterministic baseline mirroring the scoring criteria directly."""
    if features.peak_ankle_speed < SLIDE_SPEED_FLOOR_M_S or not _head_reached(features, config):
        chosen = ActionClass.SLIDE
    elif features.torso_rotation_deg > config.rotation_turning_deg:
        chosen = ActionClass.TURNING_HEAD_KICK
    else:
        chosen = ActionClass.STANDARD_HEAD_KICK
    rest = (1.0 - RULE_CONFIDENCE) / 2.0
    p = [rest, rest, rest]
    p[chosen] = RULE_CONFIDENCE
    return ClassProbabilities(p=tuple(p))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _standardize(x: np.ndarray, model: ClassifierModel) -> np.ndarray:
    means = np.asarray(model.feature_means)
    stds = np.asarray(model.feature_stds)
    return (x - means) / stds


def classify_linear(features: WindowFeatures, model: ClassifierModel) -> ClassProbabilities:
    if model.kind != "linear":
        raise ModelError("model is not linear")
    x = np.asarray(features.vector(), dtype=float)
    if x.shape[0] != len(model.feature_means):
        raise ModelError("model_shape_mismatch")
    z = np.append(_standardize(x, model), 1.0)
    logits = np.asarray(model.weights) @ z
    p = _softmax(logits)
    # Renormalize exactly so the simplex invariant holds bit-for-bit.
    p = p / p.sum()
    return ClassProbabilities(p=tuple(float(v) for v in p))


def classify(
    features: WindowFeatures, model: ClassifierModel, config: PipelineConfig
) -> ClassProbabilities:
    """Dispatch on the active model kind."""
    if model.kind == "linear":
        return classify_linear(features, model)
    return classify_rules(features, config)


def _one_hot(labels: np.ndarray) -> np.ndarray:
    out = np.zeros((labels.shape[0], 3))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _cross_entropy(probs: np.ndarray, onehot: np.ndarray) -> float:
    clipped = np.clip(probs, 1e-12, None)
    return float(-(onehot * np.log(clipped)).sum(axis=1).mean())


def train_linear(
    samples: Sequence[tuple[WindowFeatures, ActionClass]],
    epochs: int = 500,
    learning_rate: float = 0.5,
    start_version: int = 0,
) -> ClassifierModel:
    """Fit a multinomial logistic model by full-batch gradient descent.

    Deterministic given the sample order. The step is halved whenever it
    would increase the loss, so the training loss is non-increasing across
    epochs by construction. Requires at least one sample of every class
    ("class_unrepresented" otherwise).
    """
    if not samples:
        raise ValueError("class_unrepresented")
    labels = np.array([int(label) for _, label in samples])
    present = set(labels.tolist())
    if present != {0, 1, 2}:
        raise ValueError("class_unrepresented")

    X = np.array([feat.vector() for feat, _ in samples], dtype=float)
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    stds[stds <= 1e-9] = 1.0
    Xs = np.concatenate([(X - means) / stds, np.ones((X.shape[0], 1))], axis=1)
    Y = _one_hot(labels)

    W = np.zeros((3, Xs.shape[1]))
    W = _descend(W, epochs, learning_rate, lambda w: _ce_loss_grad(w, Xs, Y))

    return ClassifierModel(
        kind="linear",
        version=start_version + 1,
        feature_means=tuple(means.tolist()),
        feature_stds=tuple(stds.tolist()),
        weights=tuple(tuple(row) for row in W.tolist()),
    )


def _ce_loss_grad(W: np.ndarray, Xs: np.ndarray, Y: np.ndarray) -> tuple[float, np.ndarray]:
    probs = _softmax(Xs @ W.T)
    loss = _cross_entropy(probs, Y)
    grad = (probs - Y).T @ Xs / Xs.shape[0]
    return loss, grad


def _descend(W, epochs, learning_rate, loss_grad) -> np.ndarray:
    """Gradient descent with per-epoch backtracking so loss never increases."""
    loss, grad = loss_grad(W)
    lr = learning_rate
    for _ in range(epochs):
        step_lr = lr
        while True:
            W_next = W - step_lr * grad
            next_loss, next_grad = loss_grad(W_next)
            if next_loss <= loss or step_lr < 1e-12:
                break
            step_lr *= 0.5
        if next_loss > loss:
            break  # cannot descend further at any step size
        W, loss, grad = W_next, next_loss, next_grad
    return W


def training_accuracy(
    model: ClassifierModel, samples: Sequence[tuple[WindowFeatures, ActionClass]]
) -> float:
    correct = sum(
        1 for feat, label in samples if classify_linear(feat, model).predicted == label
    )
    return correct / len(samples)
