import numpy as np
import pytest

from kickjudge import core
from kickjudge.core import ActionClass, Keypoint, PipelineConfig, PoseFrame
from kickjudge.action import (
    ClassProbabilities,
    ClassifierModel,
    ModelError,
    RULE_BASED_MODEL,
    classify_linear,
    classify_rules,
    detect_candidate,
    segment,
    train_linear,
    training_accuracy,
)
from kickjudge.kinematics import WindowFeatures
from kickjudge.simulator import ATTACKER_ID, SimConfig, generate_match, labeled_windows

CFG = PipelineConfig()


def frame_with_ankle(ankle_xy, t=1.0, athlete="red"):
    kps = [Keypoint(0.0, 0.8, 0.9) for _ in range(18)]
    kps[core.R_ANKLE] = Keypoint(ankle_xy[0], ankle_xy[1], 0.9)
    kps[core.L_ANKLE] = Keypoint(-0.1, 0.05, 0.9)
    return PoseFrame(t=t, match_id="M", athlete_id=athlete, keypoints=tuple(kps))


def features_with(
    peak_speed=4.0, rotation=20.0, dy_min=0.0, dx_min=0.05, n=30
) -> WindowFeatures:
    return WindowFeatures(
        knee_angle_deg_series=(170.0,) * n,
        ankle_speed_series=(0.0,) * (n - 1) + (peak_speed,),
        peak_ankle_speed=peak_speed,
        peak_knee_angle_deg=170.0,
        torso_rotation_deg=rotation,
        mean_torso_angular_velocity_deg_s=rotation * 2,
        ankle_head_dy_min=dy_min,
        ankle_head_dx_min=dx_min,
    )


class TestClassProbabilities:
    def test_simplex_enforced(self):
        with pytest.raises(ValueError):
            ClassProbabilities(p=(0.5, 0.4, 0.2))

    def test_argmax_and_confidence(self):
        cp = ClassProbabilities(p=(0.02, 0.04, 0.94))
        assert cp.predicted is ActionClass.TURNING_HEAD_KICK
        assert cp.confidence == 0.94

    def test_tie_breaks_to_lowest_ordinal(self):
        cp = ClassProbabilities(p=(0.4, 0.4, 0.2))
        assert cp.predicted is ActionClass.SLIDE


class TestDetectCandidate:
    def test_ankle_at_head_height_close_in(self):
        frame = frame_with_ankle((0.95, 1.6))
        assert detect_candidate(frame, (1.0, 1.6), CFG) is True

    def test_ankle_at_floor_is_no_candidate(self):
        frame = frame_with_ankle((1.0, 0.1))
        assert detect_candidate(frame, (1.0, 1.6), CFG) is False

    def test_horizontal_margin_is_strict(self):
        # dx exactly 0.10 m must not trigger (same float as the margin).
        frame = frame_with_ankle((-0.1, 1.6))
        assert detect_candidate(frame, (0.0, 1.6), CFG) is False
        frame = frame_with_ankle((-0.099, 1.6))
        assert detect_candidate(frame, (0.0, 1.6), CFG) is True

    def test_vertical_margin_inclusive(self):
        frame = frame_with_ankle((1.0, 1.6 - CFG.head_margin_m))
        assert detect_candidate(frame, (1.0, 1.6), CFG) is True

    def test_unresolved_head_is_no_candidate(self):
        frame = frame_with_ankle((1.0, 1.6))
        assert detect_candidate(frame, None, CFG) is False


def _sim_stream(n_events, mix, seed=21, **kw):
    sim = SimConfig(seed=seed, n_events=n_events, event_mix=mix, **kw)
    frames, truth = generate_match(sim)
    att = [f for f in frames if f.athlete_id == ATTACKER_ID]
    deff = [f for f in frames if f.athlete_id != ATTACKER_ID]
    stream = [
        (a, (d.keypoints[core.HEAD].x, d.keypoints[core.HEAD].y))
        for a, d in zip(att, deff)
    ]
    return stream, truth


class TestSegment:
    def test_single_kick_in_five_seconds_yields_single_window(self):
        from dataclasses import replace

        stream, _ = _sim_stream(1, {"standard": 1.0})
        # Extend with trailing idle footage to a full five seconds.
        last_frame, last_head = stream[-1]
        t = last_frame.t
        while t < 5.0:
            t += 1 / 60
            stream.append((replace(last_frame, t=t), last_head))
        assert stream[-1][0].t >= 5.0
        windows = segment(stream, CFG)
        assert len(windows) == 1

    def test_two_kicks_yield_two_windows(self):
        stream, truth = _sim_stream(2, {"turning": 1.0})
        windows = segment(stream, CFG)
        assert len(windows) == 2

    def test_idle_stream_yields_none(self):
        stream, _ = _sim_stream(1, {"slide": 1.0})
        assert segment(stream, CFG) == []

    def test_windows_have_exact_frame_count(self):
        stream, _ = _sim_stream(3, {"standard": 0.5, "turning": 0.5})
        for w in segment(stream, CFG):
            assert len(w.frames) == CFG.window_frames
            assert len(w.defender_head) == CFG.window_frames

    def test_window_anchored_at_closest_approach(self):
        stream, truth = _sim_stream(1, {"standard": 1.0})
        (window,) = segment(stream, CFG)
        assert window.t_end == pytest.approx(truth[0].t_impact, abs=0.05)

    def test_candidate_near_stream_start_pads_window(self):
        stream, truth = _sim_stream(1, {"standard": 1.0})
        contact = int(round(truth[0].t_impact * 60))
        # Drop all but the last few pre-contact frames so the buffer is short.
        short = stream[contact - 10 :]
        windows = segment(short, CFG)
        assert len(windows) == 1
        assert "padded" in windows[0].flags
        assert len(windows[0].frames) == CFG.window_frames

    def test_determinism(self):
        stream, _ = _sim_stream(3, {"standard": 1.0})
        a = segment(stream, CFG)
        b = segment(stream, CFG)
        assert [(w.event_id, w.t_start, w.t_end) for w in a] == [
            (w.event_id, w.t_start, w.t_end) for w in b
        ]


class TestClassifyRules:
    def test_high_rotation_fast_kick_is_turning(self):
        probs = classify_rules(features_with(peak_speed=4.1, rotation=156.0), CFG)
        assert probs.predicted is ActionClass.TURNING_HEAD_KICK
        assert probs.confidence == pytest.approx(0.9)

    def test_low_rotation_fast_kick_is_standard(self):
        probs = classify_rules(features_with(peak_speed=4.0, rotation=20.0), CFG)
        assert probs.predicted is ActionClass.STANDARD_HEAD_KICK

    def test_slow_motion_is_slide(self):
        probs = classify_rules(features_with(peak_speed=0.5), CFG)
        assert probs.predicted is ActionClass.SLIDE

    def test_head_never_reached_is_slide(self):
        probs = classify_rules(features_with(peak_speed=4.0, dy_min=1.2), CFG)
        assert probs.predicted is ActionClass.SLIDE

    def test_valid_simplex(self):
        probs = classify_rules(features_with(), CFG)
        assert sum(probs.p) == pytest.approx(1.0, abs=1e-12)


class TestClassifyLinear:
    def make_model(self, weights, d=6, version=1):
        return ClassifierModel(
            kind="linear",
            version=version,
            feature_means=(0.0,) * d,
            feature_stds=(1.0,) * d,
            weights=tuple(tuple(row) for row in weights),
        )

    def test_zero_weights_uniform_and_tie_to_slide(self):
        model = self.make_model(np.zeros((3, 7)))
        probs = classify_linear(features_with(), model)
        assert probs.p == pytest.approx((1 / 3, 1 / 3, 1 / 3))
        assert probs.predicted is ActionClass.SLIDE

    def test_constructed_weights_favor_turning(self):
        # Big positive weight on the rotation feature for class 2.
        W = np.zeros((3, 7))
        W[2, 2] = 5.0
        W[2, 6] = 2.0
        model = self.make_model(W)
        probs = classify_linear(features_with(rotation=2.0), model)
        assert probs.p[2] > 0.9
        assert probs.predicted is ActionClass.TURNING_HEAD_KICK

    def test_simplex_sums_to_one(self):
        rng = np.random.default_rng(2)
        model = self.make_model(rng.normal(size=(3, 7)))
        for _ in range(20):
            feats = features_with(
                peak_speed=float(rng.uniform(0, 6)),
                rotation=float(rng.uniform(0, 360)),
                dy_min=float(rng.uniform(-0.5, 1.5)),
            )
            probs = classify_linear(feats, model)
            assert abs(sum(probs.p) - 1.0) <= 1e-9

    def test_shape_mismatch_rejected(self):
        model = ClassifierModel(
            kind="linear", version=1,
            feature_means=(0.0,) * 4, feature_stds=(1.0,) * 4,
            weights=tuple((0.0,) * 5 for _ in range(3)),
        )
        with pytest.raises(ModelError, match="model_shape_mismatch"):
            classify_linear(features_with(), model)

    def test_logit_shift_leaves_argmax_unchanged(self):
        rng = np.random.default_rng(8)
        W = rng.normal(size=(3, 7))
        feats = features_with(peak_speed=3.0, rotation=100.0)
        base = classify_linear(feats, self.make_model(W)).predicted
        W_shift = W.copy()
        W_shift[:, 6] += 7.5  # constant added to every class logit
        assert classify_linear(feats, self.make_model(W_shift)).predicted is base


def synthetic_separable_set(n=300, seed=13):
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(n):
        label = ActionClass(int(rng.integers(0, 3)))
        if label is ActionClass.SLIDE:
            feats = features_with(
                peak_speed=float(rng.uniform(0.2, 1.2)),
                rotation=float(rng.uniform(0, 25)),
                dy_min=float(rng.uniform(0.8, 1.5)),
            )
        elif label is ActionClass.STANDARD_HEAD_KICK:
            feats = features_with(
                peak_speed=float(rng.uniform(3.0, 5.0)),
                rotation=float(rng.uniform(0, 40)),
                dy_min=float(rng.uniform(-0.1, 0.1)),
            )
        else:
            feats = features_with(
                peak_speed=float(rng.uniform(3.0, 5.0)),
                rotation=float(rng.uniform(130, 200)),
                dy_min=float(rng.uniform(-0.1, 0.1)),
            )
        samples.append((feats, label))
    return samples


class TestTrainLinear:
    def test_separable_set_reaches_99_percent(self):
        samples = synthetic_separable_set()
        model = train_linear(samples, epochs=400, learning_rate=1.0)
        assert training_accuracy(model, samples) >= 0.99

    def test_three_point_memorization(self):
        samples = [
            (features_with(peak_speed=0.5, rotation=5.0, dy_min=1.0), ActionClass.SLIDE),
            (features_with(peak_speed=4.0, rotation=20.0), ActionClass.STANDARD_HEAD_KICK),
            (features_with(peak_speed=4.0, rotation=160.0), ActionClass.TURNING_HEAD_KICK),
        ]
        model = train_linear(samples, epochs=1000, learning_rate=1.0)
        assert training_accuracy(model, samples) == 1.0

    def test_loss_non_increasing(self):
        from kickjudge.action import _ce_loss_grad

        samples = synthetic_separable_set(n=60, seed=5)
        X = np.array([f.vector() for f, _ in samples])
        means, stds = X.mean(axis=0), X.std(axis=0)
        stds[stds <= 1e-9] = 1.0
        Xs = np.concatenate([(X - means) / stds, np.ones((len(samples), 1))], axis=1)
        Y = np.zeros((len(samples), 3))
        for i, (_, label) in enumerate(samples):
            Y[i, int(label)] = 1.0

        losses = []
        model_1 = train_linear(samples, epochs=1, learning_rate=1.0)
        model_50 = train_linear(samples, epochs=50, learning_rate=1.0)
        for model in (model_1, model_50):
            W = np.array(model.weights)
            losses.append(_ce_loss_grad(W, Xs, Y)[0])
        assert losses[1] <= losses[0]

    def test_missing_class_rejected(self):
        samples = [
            (features_with(), ActionClass.STANDARD_HEAD_KICK),
            (features_with(rotation=160.0), ActionClass.TURNING_HEAD_KICK),
        ]
        with pytest.raises(ValueError, match="class_unrepresented"):
            train_linear(samples)

    def test_deterministic(self):
        samples = synthetic_separable_set(n=90, seed=3)
        m1 = train_linear(samples, epochs=50, learning_rate=0.5)
        m2 = train_linear(samples, epochs=50, learning_rate=0.5)
        assert m1.weights == m2.weights

    def test_simulator_windows_train_cleanly(self):
        samples = labeled_windows(SimConfig(seed=31, n_events=30))
        present = {label for _, label in samples}
        assert present == {ActionClass.SLIDE, ActionClass.STANDARD_HEAD_KICK, ActionClass.TURNING_HEAD_KICK}
        model = train_linear(samples, epochs=300, learning_rate=1.0)
        assert training_accuracy(model, samples) >= 0.95


class TestModelFile:
    def test_bit_exact_round_trip(self, tmp_path):
        samples = synthetic_separable_set(n=30, seed=1)
        model = train_linear(samples, epochs=20, learning_rate=0.5)
        path = tmp_path / "model.json"
        model.save(path)
        loaded = ClassifierModel.load(path)
        assert loaded == model  # bit-exact: json floats round-trip via repr

    def test_wire_schema(self):
        doc = RULE_BASED_MODEL.to_wire()
        assert set(doc) == {"version", "kind", "means", "stds", "weights"}

    def test_stds_must_be_positive(self):
        with pytest.raises(ModelError):
            ClassifierModel(
                kind="linear", version=1,
                feature_means=(0.0,) * 6, feature_stds=(1.0,) * 5 + (0.0,),
                weights=tuple((0.0,) * 7 for _ in range(3)),
            )
