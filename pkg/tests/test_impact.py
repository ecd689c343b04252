import numpy as np
import pytest

from conftest import build_kick_window, offset_for_iou, ramp_speeds

from kickjudge.core import ActionClass, PipelineConfig
from kickjudge.action import ClassProbabilities
from kickjudge.impact import (
    ImpactEvidence,
    StageTimer,
    assign_score,
    build_decision,
    detect_impact,
    resolve_action,
)

CFG = PipelineConfig()


class TestDetectImpact:
    def test_worked_stop_93_with_iou_035(self):
        # Foot 3.5 -> 0.4 m/s over 0.033 s with 35% box overlap: valid impact.
        window = build_kick_window(
            ramp_speeds(30, (3.5, 0.4)), head_offset=(offset_for_iou(0.35), 0.0)
        )
        ev = detect_impact(window, CFG)
        assert ev.decel_m_s2 == pytest.approx(93.94, abs=0.1)
        assert ev.iou_value == pytest.approx(0.35, abs=0.01)
        assert ev.impact_detected is True
        assert ev.impact_frame_t == window.t_end

    def test_worked_stop_106_with_iou_036(self):
        window = build_kick_window(
            ramp_speeds(30, (4.1, 0.6)), head_offset=(offset_for_iou(0.36), 0.0)
        )
        ev = detect_impact(window, CFG)
        assert ev.decel_m_s2 == pytest.approx(106.06, abs=0.1)
        assert ev.iou_value == pytest.approx(0.36, abs=0.01)
        assert ev.impact_detected is True

    def test_high_decel_but_low_iou_fails_conjunction(self):
        window = build_kick_window(
            ramp_speeds(30, (4.1, 0.6)), head_offset=(offset_for_iou(0.29), 0.0)
        )
        ev = detect_impact(window, CFG)
        assert ev.decel_m_s2 > 100.0
        assert ev.iou_value == pytest.approx(0.29, abs=0.01)
        assert ev.impact_detected is False

    def test_weak_deceleration_fails_conjunction(self):
        # 1.72 -> 0.4 over 0.033 s is exactly 40 m/s2, below the gate.
        window = build_kick_window(
            ramp_speeds(30, (1.72, 0.4)), head_offset=(0.0, 0.0)
        )
        ev = detect_impact(window, CFG)
        assert ev.decel_m_s2 == pytest.approx(40.0, abs=0.1)
        assert ev.iou_value > 0.9
        assert ev.impact_detected is False

    def test_unresolved_head_flags_and_fails(self):
        window = build_kick_window(
            ramp_speeds(30, (3.5, 0.4)), head_offset=(0.0, 0.0)
        )
        window = type(window)(
            event_id=window.event_id,
            frames=window.frames,
            defender_head=(window.defender_head[0],) + (None,) * 29,
            t_start=window.t_start,
            t_end=window.t_end,
            features=window.features,
        )
        ev = detect_impact(window, CFG)
        assert ev.impact_detected is False
        assert "head_unresolved" in ev.flags

    def test_rotation_copied_from_features(self):
        window = build_kick_window(
            ramp_speeds(30, (3.5, 0.4)), head_offset=(0.0, 0.0), rotation_deg=156.0
        )
        ev = detect_impact(window, CFG)
        assert ev.rotation_deg == pytest.approx(156.0, abs=0.5)

    def test_two_step_stop_still_found(self):
        # The stop spread over two frames: 4.0 -> 2.0 -> 0.2; the two-step
        # scan sees (4.0 - 0.2) / 0.066 = 57.6 > threshold.
        speeds = [0.0] + [0.2] * 26 + [4.0, 2.0, 0.2]
        window = build_kick_window(speeds, head_offset=(0.0, 0.0))
        ev = detect_impact(window, CFG)
        assert ev.decel_m_s2 > CFG.a_threshold
        assert ev.impact_detected is True


class TestEvidenceInvariant:
    def test_conjunction_fuzz(self):
        rng = np.random.default_rng(4)
        for _ in range(500):
            decel = float(rng.uniform(0, 200))
            overlap = float(rng.uniform(0, 1))
            ev = ImpactEvidence.evaluate(decel, overlap, 1.0, 0.0, CFG)
            assert ev.impact_detected == (
                decel > CFG.a_threshold and overlap > CFG.iou_threshold
            )

    def test_monotonic_in_iou_and_decel(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            decel = float(rng.uniform(0, 200))
            overlap = float(rng.uniform(0, 1))
            base = ImpactEvidence.evaluate(decel, overlap, 0.0, 0.0, CFG).impact_detected
            more_iou = ImpactEvidence.evaluate(decel, min(1.0, overlap + 0.2), 0.0, 0.0, CFG)
            more_decel = ImpactEvidence.evaluate(decel + 50, overlap, 0.0, 0.0, CFG)
            if base:
                assert more_iou.impact_detected and more_decel.impact_detected


def evidence(decel=106.0, overlap=0.36, rotation=0.0, impact=None):
    ev = ImpactEvidence.evaluate(decel, overlap, 1.0, rotation, CFG)
    if impact is not None:
        assert ev.impact_detected == impact
    return ev


class TestAssignScore:
    def test_turning_with_impact_scores_five(self):
        assert assign_score(ActionClass.TURNING_HEAD_KICK, evidence(rotation=156.0), CFG) == 5

    def test_standard_with_impact_scores_three(self):
        assert assign_score(ActionClass.STANDARD_HEAD_KICK, evidence(rotation=40.0), CFG) == 3

    def test_no_impact_scores_zero_for_any_class(self):
        no_contact = evidence(overlap=0.1, impact=False)
        for cls in ActionClass:
            assert assign_score(cls, no_contact, CFG) == 0

    def test_slide_scores_zero_even_with_contact_like_motion(self):
        assert assign_score(ActionClass.SLIDE, evidence(), CFG) == 0

    def test_rotation_promotes_standard_to_turning(self):
        promoted, flags = resolve_action(
            ActionClass.STANDARD_HEAD_KICK, evidence(rotation=156.0), CFG
        )
        assert promoted is ActionClass.TURNING_HEAD_KICK
        assert flags == ("rotation_promoted",)
        assert assign_score(ActionClass.STANDARD_HEAD_KICK, evidence(rotation=156.0), CFG) == 5

    def test_rotation_exactly_at_threshold_does_not_promote(self):
        ev = evidence(rotation=CFG.rotation_turning_deg)
        promoted, flags = resolve_action(ActionClass.STANDARD_HEAD_KICK, ev, CFG)
        assert promoted is ActionClass.STANDARD_HEAD_KICK
        assert flags == ()

    def test_turning_never_demoted(self):
        promoted, _ = resolve_action(ActionClass.TURNING_HEAD_KICK, evidence(rotation=10.0), CFG)
        assert promoted is ActionClass.TURNING_HEAD_KICK

    def test_score_table_fuzz(self):
        rng = np.random.default_rng(6)
        for _ in range(500):
            cls = ActionClass(int(rng.integers(0, 3)))
            ev = evidence(
                decel=float(rng.uniform(0, 200)),
                overlap=float(rng.uniform(0, 1)),
                rotation=float(rng.uniform(0, 200)),
            )
            score = assign_score(cls, ev, CFG)
            final, _ = resolve_action(cls, ev, CFG)
            if final is ActionClass.SLIDE or not ev.impact_detected:
                assert score == 0
            elif final is ActionClass.STANDARD_HEAD_KICK:
                assert score == 3
            else:
                assert score == 5


def fake_timer(pose_ms, class_ms, impact_ms):
    timer = StageTimer(clock=lambda: 0.0)
    timer.book("pose", pose_ms / 1000.0)
    timer.book("class", class_ms / 1000.0)
    timer.book("impact", impact_ms / 1000.0)
    return timer


class TestBuildDecision:
    def window(self, rotation=0.0):
        return build_kick_window(
            ramp_speeds(30, (3.5, 0.4)),
            head_offset=(offset_for_iou(0.35), 0.0),
            rotation_deg=rotation,
        )

    def probs(self, cls):
        p = [0.05, 0.05, 0.05]
        p[cls] = 0.9
        return ClassProbabilities(p=tuple(p))

    def test_latency_sums_to_60_without_flag(self):
        window = self.window()
        ev = detect_impact(window, CFG)
        d = build_decision(
            window, self.probs(ActionClass.STANDARD_HEAD_KICK), ev,
            fake_timer(9, 43, 8), model_version=3, config=CFG,
        )
        assert d.latency.t_total_ms == pytest.approx(60.0)
        assert "budget_exceeded" not in d.flags
        assert d.score == 3
        assert d.model_version == 3

    def test_budget_flag_at_220ms(self):
        window = self.window()
        ev = detect_impact(window, CFG)
        d = build_decision(
            window, self.probs(ActionClass.STANDARD_HEAD_KICK), ev,
            fake_timer(100, 90, 30), model_version=1, config=CFG,
        )
        assert d.latency.t_total_ms == pytest.approx(220.0)
        assert "budget_exceeded" in d.flags

    def test_missing_timer_rejected(self):
        window = self.window()
        ev = detect_impact(window, CFG)
        timer = StageTimer(clock=lambda: 0.0)
        timer.book("pose", 0.001)
        with pytest.raises(ValueError, match="incomplete_timing"):
            build_decision(window, self.probs(1), ev, timer, 1, CFG)

    def test_no_impact_decision_carries_flag(self):
        window = build_kick_window(
            ramp_speeds(30, (3.5, 0.4)), head_offset=(offset_for_iou(0.2), 0.0)
        )
        ev = detect_impact(window, CFG)
        d = build_decision(
            window, self.probs(ActionClass.TURNING_HEAD_KICK), ev,
            fake_timer(1, 1, 1), model_version=1, config=CFG,
        )
        assert d.score == 0
        assert "no_impact" in d.flags

    def test_wire_schema_matches_contract(self):
        window = self.window(rotation=156.0)
        ev = detect_impact(window, CFG)
        d = build_decision(
            window, self.probs(ActionClass.TURNING_HEAD_KICK), ev,
            fake_timer(9, 43, 8), model_version=3, config=CFG,
        )
        doc = d.to_wire()
        assert set(doc) == {
            "event", "class", "score", "conf", "evidence", "latency_ms",
            "model_version", "flags",
        }
        assert set(doc["evidence"]) == {"decel", "iou", "rot_deg", "impact"}
        assert set(doc["latency_ms"]) == {"pose", "class", "impact", "total"}
        assert doc["class"] == "turning_head_kick"
        assert doc["score"] == 5

    def test_simulator_turning_kick_end_to_end(self):
        from kickjudge.pipeline import MatchPipeline
        from kickjudge.simulator import SimConfig, generate_match

        frames, truth = generate_match(SimConfig(seed=17, n_events=1, event_mix={"turning": 1.0}))
        pipe = MatchPipeline("SIM")
        decisions = []
        for f in frames:
            decisions += pipe.process_frame(f)
        decisions += pipe.flush()
        assert len(decisions) == 1
        d = decisions[0]
        assert d.action_class is ActionClass.TURNING_HEAD_KICK
        assert d.score == 5
        assert d.confidence >= 0.9
