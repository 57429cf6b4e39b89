import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectra.detio import DetectionRecord, FrameDetections
from spectra.fusion import (
    FusedDetection,
    FusionConfig,
    classify_payload_or,
    confidence_gate,
    fuse_decision_layer,
    nms,
)
from spectra.geometry import BBox, iou
from spectra.modality import resolve_policy


def fused(conf, box, cls="drone", eff=None, source="RGB", frame=0):
    return FusedDetection(
        frame_index=frame,
        class_id=0,
        class_name=cls,
        confidence=conf,
        bbox=BBox(*box),
        source=source,
        effective_confidence=conf if eff is None else eff,
    )


def rec(conf, box, modality="RGB", cls="drone", frame=0):
    return DetectionRecord(frame, modality, 0, cls, conf, BBox(*box))


def nms_reference(dets, iou_threshold):
    """Independent O(n^2) reference: repeatedly pull the best remaining
    record by scan, then drop overlapping same-class records."""
    remaining = list(range(len(dets)))
    kept = []
    while remaining:
        best = remaining[0]
        for i in remaining[1:]:
            if dets[i].effective_confidence > dets[best].effective_confidence:
                best = i
        kept.append(dets[best])
        survivors = []
        for i in remaining:
            if i == best:
                continue
            same_class = dets[i].class_name == dets[best].class_name
            if same_class and iou(dets[i].bbox, dets[best].bbox) > iou_threshold:
                continue
            survivors.append(i)
        remaining = survivors
    return kept


def random_frame(rng, max_boxes=50):
    dets = []
    for _ in range(rng.randint(0, max_boxes)):
        x1 = rng.uniform(0, 280)
        y1 = rng.uniform(0, 220)
        dets.append(
            fused(
                round(rng.uniform(0, 1), 3),
                (x1, y1, x1 + rng.uniform(2, 40), y1 + rng.uniform(2, 40)),
                cls=rng.choice(["drone", "bird"]),
            )
        )
    return dets


class TestConfidenceGate:
    def test_zero_threshold_keeps_all(self):
        dets = [rec(0.1, (0, 0, 1, 1)), rec(0.9, (0, 0, 1, 1))]
        assert confidence_gate(dets, 0.0) == dets

    def test_one_keeps_only_perfect(self):
        dets = [rec(0.99, (0, 0, 1, 1)), rec(1.0, (0, 0, 1, 1))]
        assert confidence_gate(dets, 1.0) == [dets[1]]

    def test_inclusive_filter(self):
        dets = [rec(c, (0, 0, 1, 1)) for c in (0.2, 0.5, 0.9)]
        assert [d.confidence for d in confidence_gate(dets, 0.5)] == [0.5, 0.9]


class TestNms:
    def test_single_detection_kept(self):
        d = [fused(0.7, (0, 0, 10, 10))]
        assert nms(d, 0.5) == d

    def test_overlapping_pair_keeps_higher(self):
        a = fused(0.9, (0, 0, 10, 10))
        b = fused(0.7, (0, 1, 10, 11))  # IoU 9/11 ~ 0.82
        assert nms([b, a], 0.5) == [a]

    def test_disjoint_pair_both_kept(self):
        a = fused(0.9, (0, 0, 10, 10))
        b = fused(0.1, (50, 50, 60, 60))
        assert nms([a, b], 0.5) == [a, b]

    def test_different_classes_never_suppress(self):
        a = fused(0.9, (0, 0, 10, 10), cls="drone")
        b = fused(0.2, (0, 0, 10, 10), cls="bird")
        assert nms([a, b], 0.5) == [a, b]

    def test_output_sorted_by_confidence(self):
        dets = [fused(0.3, (0, 0, 5, 5)), fused(0.8, (50, 0, 55, 5)), fused(0.5, (100, 0, 105, 5))]
        assert [d.effective_confidence for d in nms(dets, 0.5)] == [0.8, 0.5, 0.3]

    def test_matches_reference_on_random_frames(self):
        rng = random.Random(42)
        for _ in range(200):
            dets = random_frame(rng)
            out = nms(dets, 0.45)
            assert out == nms_reference(dets, 0.45)

    def test_idempotent(self):
        rng = random.Random(7)
        for _ in range(50):
            dets = random_frame(rng, max_boxes=30)
            once = nms(dets, 0.45)
            assert nms(once, 0.45) == once

    def test_subset_of_input(self):
        rng = random.Random(3)
        dets = random_frame(rng)
        out = nms(dets, 0.3)
        assert len(out) <= len(dets)
        assert all(d in dets for d in out)

    def test_confidence_scaling_invariance(self):
        rng = random.Random(11)
        dets = random_frame(rng, max_boxes=25)
        scaled = [
            fused(d.confidence * 0.5, (d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2),
                  cls=d.class_name, eff=d.effective_confidence * 0.5)
            for d in dets
        ]
        kept = {(d.bbox, d.class_name) for d in nms(dets, 0.45)}
        kept_scaled = {(d.bbox, d.class_name) for d in nms(scaled, 0.45)}
        assert kept == kept_scaled


class TestDecisionLayer:
    def test_ir_only_passthrough(self):
        cfg = FusionConfig(mode="ir_only", conf_threshold_ir=0.5)
        frame = FrameDetections(0, ir=(rec(0.8, (0, 0, 10, 10), "IR"),))
        out = fuse_decision_layer(frame, cfg)
        assert len(out) == 1
        assert out[0].source == "IR"
        assert out[0].effective_confidence == 0.8

    def test_ir_only_never_emits_rgb(self):
        cfg = FusionConfig(mode="ir_only")
        frame = FrameDetections(
            0, rgb=(rec(0.9, (0, 0, 10, 10), "RGB"),), ir=(rec(0.8, (20, 0, 30, 10), "IR"),)
        )
        assert all(d.source == "IR" for d in fuse_decision_layer(frame, cfg))

    def test_rgb_only_never_emits_ir(self):
        cfg = FusionConfig(mode="rgb_only")
        frame = FrameDetections(
            0, rgb=(rec(0.9, (0, 0, 10, 10), "RGB"),), ir=(rec(0.8, (20, 0, 30, 10), "IR"),)
        )
        assert all(d.source == "RGB" for d in fuse_decision_layer(frame, cfg))

    def test_rgb_only_applies_nms(self):
        cfg = FusionConfig(mode="rgb_only", nms_iou_threshold=0.5)
        frame = FrameDetections(
            0,
            rgb=(rec(0.7, (0, 1, 10, 11), "RGB"), rec(0.9, (0, 0, 10, 10), "RGB")),
        )
        out = fuse_decision_layer(frame, cfg)
        assert [d.confidence for d in out] == [0.9]

    def test_ir_only_skips_nms_by_default(self):
        cfg = FusionConfig(mode="ir_only")
        frame = FrameDetections(
            0, ir=(rec(0.7, (0, 1, 10, 11), "IR"), rec(0.9, (0, 0, 10, 10), "IR"))
        )
        assert len(fuse_decision_layer(frame, cfg)) == 2

    def test_ir_nms_can_be_enabled(self):
        cfg = FusionConfig(mode="ir_only", nms_ir=True)
        frame = FrameDetections(
            0, ir=(rec(0.7, (0, 1, 10, 11), "IR"), rec(0.9, (0, 0, 10, 10), "IR"))
        )
        assert len(fuse_decision_layer(frame, cfg)) == 1

    def test_both_without_cross_nms_concatenates(self):
        cfg = FusionConfig(mode="both", cross_modality_nms=False)
        frame = FrameDetections(
            0,
            rgb=(rec(0.9, (0, 0, 10, 10), "RGB"),),
            ir=(rec(0.8, (0, 0, 10, 10), "IR"),),
        )
        out = fuse_decision_layer(frame, cfg)
        assert [d.source for d in out] == ["RGB", "IR"]

    def test_pooled_nms_keeps_higher_confidence_modality(self):
        cfg = FusionConfig(mode="both", cross_modality_nms=True, nms_iou_threshold=0.5)
        frame = FrameDetections(
            0,
            rgb=(rec(0.6, (0, 0, 10, 10), "RGB"),),
            ir=(rec(0.9, (0, 1, 10, 11), "IR"),),  # same object, IoU ~0.82
        )
        out = fuse_decision_layer(frame, cfg)
        assert [d.source for d in out] == ["IR"]

    def test_weighted_rescoring_prefers_weighted_modality(self):
        cfg = FusionConfig(
            mode="both", cross_modality_nms=True, weight_rgb=2.0, weight_ir=1.0,
            nms_iou_threshold=0.5,
        )
        frame = FrameDetections(
            0,
            rgb=(rec(0.5, (0, 0, 10, 10), "RGB"),),
            ir=(rec(0.9, (0, 1, 10, 11), "IR"),),
        )
        out = fuse_decision_layer(frame, cfg)
        assert [d.source for d in out] == ["RGB"]
        assert out[0].effective_confidence == 1.0  # min(1, 2 * 0.5)

    def test_both_with_absent_modality_raises_without_policy(self):
        cfg = FusionConfig(mode="both")
        frame = FrameDetections(0, rgb=(rec(0.9, (0, 0, 10, 10), "RGB"),), ir=None)
        with pytest.raises(ValueError, match="IR"):
            fuse_decision_layer(frame, cfg)

    def test_both_with_absent_modality_ok_with_policy(self):
        cfg = FusionConfig(mode="both")
        policy = resolve_policy("payload_identification", {"RGB"})
        frame = FrameDetections(0, rgb=(rec(0.9, (0, 0, 10, 10), "RGB"),), ir=None)
        out = fuse_decision_layer(frame, cfg, policy)
        assert [d.source for d in out] == ["RGB"]

    def test_for_task_defaults(self):
        assert FusionConfig.for_task("drone_detection").cross_modality_nms is False
        assert FusionConfig.for_task("payload_identification").cross_modality_nms is True


class TestPayloadOr:
    def test_ir_only_confident_harmful(self):
        dets = [fused(0.9, (0, 0, 10, 10), cls="harmful", source="IR")]
        assert classify_payload_or(dets, 0.5) == "harmful"

    def test_empty_is_normal(self):
        assert classify_payload_or([], 0.5) == "normal"

    def test_below_threshold_is_normal(self):
        dets = [fused(0.3, (0, 0, 10, 10), cls="harmful")]
        assert classify_payload_or(dets, 0.5) == "normal"

    def test_normal_class_never_flags(self):
        dets = [fused(1.0, (0, 0, 10, 10), cls="normal")]
        assert classify_payload_or(dets, 0.5) == "normal"

    @given(
        st.lists(
            st.tuples(st.sampled_from(["harmful", "normal"]), st.floats(0, 1)), max_size=8
        ),
        st.tuples(st.sampled_from(["harmful", "normal"]), st.floats(0, 1)),
    )
    @settings(max_examples=100)
    def test_monotone_under_added_detection(self, base, extra):
        def build(items):
            return [fused(c, (0, 0, 10, 10), cls=n, eff=c) for n, c in items]

        before = classify_payload_or(build(base), 0.5)
        after = classify_payload_or(build(base + [extra]), 0.5)
        if before == "harmful":
            assert after == "harmful"


def test_fusion_config_validation():
    with pytest.raises(ValueError):
        FusionConfig(mode="mid")
    with pytest.raises(ValueError):
        FusionConfig(conf_threshold_rgb=1.5)
    with pytest.raises(ValueError):
        FusionConfig(weight_rgb=0.0, weight_ir=0.0)
    with pytest.raises(ValueError):
        FusionConfig(nms_iou_threshold=1.0)
