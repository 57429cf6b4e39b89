"""Decision layer: confidence gating, NMS, cross-modality merge, payload OR flag.

RGB output is refined with greedy NMS; IR relies on confidence gating alone
(intra-modality NMS for IR is off by default, switchable via ``nms_ir``).
With both modalities present the layer either concatenates the per-modality
outputs (drone detection) or pools them, rescores by modality weight, and
runs a single NMS pass (payload identification).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .detio import DetectionRecord, FrameDetections
from .geometry import BBox, iou
from .modality import SurrogatePolicy

MODES = ("both", "rgb_only", "ir_only")


@dataclass(frozen=True)
class FusionConfig:
    mode: str = "both"
    conf_threshold_rgb: float = 0.25
    conf_threshold_ir: float = 0.25
    weight_rgb: float = 1.0
    weight_ir: float = 1.0
    nms_iou_threshold: float = 0.45
    cross_modality_nms: bool = False
    nms_ir: bool = False
    harmful_conf_threshold: float = 0.5

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown fusion mode: {self.mode!r}")
        for name in ("conf_threshold_rgb", "conf_threshold_ir", "harmful_conf_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} outside [0,1]: {v}")
        if self.weight_rgb < 0 or self.weight_ir < 0 or self.weight_rgb + self.weight_ir <= 0:
            raise ValueError("modality weights must be non-negative with positive sum")
        if not 0.0 < self.nms_iou_threshold < 1.0:
            raise ValueError(f"nms_iou_threshold outside (0,1): {self.nms_iou_threshold}")

    @classmethod
    def for_task(cls, task: str, mode: str = "both", **overrides) -> "FusionConfig":
        """Task defaults: payload identification pools both modalities through one NMS pass."""
        overrides.setdefault("cross_modality_nms", task == "payload_identification")
        return cls(mode=mode, **overrides)


@dataclass(frozen=True)
class FusedDetection:
    """A decision-layer output record: detection fields plus source and rescored confidence."""

    frame_index: int
    class_id: int
    class_name: str
    confidence: float
    bbox: BBox
    source: str
    effective_confidence: float


def _fuse(rec: DetectionRecord, weight: float) -> FusedDetection:
    return FusedDetection(
        frame_index=rec.frame_index,
        class_id=rec.class_id,
        class_name=rec.class_name,
        confidence=rec.confidence,
        bbox=rec.bbox,
        source=rec.modality,
        effective_confidence=min(1.0, weight * rec.confidence),
    )


def confidence_gate(dets: Sequence, threshold: float) -> list:
    """Keep records with confidence >= threshold, order preserved."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold outside [0,1]: {threshold}")
    return [d for d in dets if d.confidence >= threshold]


def nms(dets: Sequence[FusedDetection], iou_threshold: float) -> list[FusedDetection]:
    """Greedy class-aware non-maximum suppression.

    Records are visited in descending effective confidence (ties: input
    order); each kept record suppresses later same-class records whose IoU
    with it exceeds the threshold. Boxes of different classes never
    suppress each other. The kept list is in descending-confidence order.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold outside (0,1): {iou_threshold}")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].effective_confidence, i))
    kept: list[FusedDetection] = []
    suppressed = [False] * len(dets)
    for pos, i in enumerate(order):
        if suppressed[i]:
            continue
        top = dets[i]
        kept.append(top)
        for j in order[pos + 1 :]:
            if suppressed[j] or dets[j].class_name != top.class_name:
                continue
            if iou(top.bbox, dets[j].bbox) > iou_threshold:
                suppressed[j] = True
    return kept


def fuse_decision_layer(
    frame: FrameDetections,
    cfg: FusionConfig,
    surrogate_policy: SurrogatePolicy | None = None,
) -> list[FusedDetection]:
    """Finalize one frame's per-modality detections into fused outputs.

    In ``both`` mode a modality absent from the frame is an error unless a
    surrogate policy covering it is attached (the stand-in input means the
    stream was intentionally synthesized, so absence of records is valid).
    """
    rgb = frame.rgb
    ir = frame.ir
    if cfg.mode == "both":
        if rgb is None:
            rgb = _covered_or_raise("RGB", surrogate_policy)
        if ir is None:
            ir = _covered_or_raise("IR", surrogate_policy)
    elif cfg.mode == "rgb_only":
        rgb, ir = rgb or (), ()
    else:
        rgb, ir = (), ir or ()

    rgb_gated = [_fuse(r, cfg.weight_rgb) for r in confidence_gate(rgb, cfg.conf_threshold_rgb)]
    ir_gated = [_fuse(r, cfg.weight_ir) for r in confidence_gate(ir, cfg.conf_threshold_ir)]

    if cfg.mode == "both" and cfg.cross_modality_nms:
        return nms(rgb_gated + ir_gated, cfg.nms_iou_threshold)

    rgb_out = nms(rgb_gated, cfg.nms_iou_threshold)
    ir_out = nms(ir_gated, cfg.nms_iou_threshold) if cfg.nms_ir else ir_gated
    if cfg.mode == "rgb_only":
        return rgb_out
    if cfg.mode == "ir_only":
        return ir_out
    return rgb_out + ir_out


def _covered_or_raise(name: str, policy: SurrogatePolicy | None) -> tuple:
    if policy is not None and name in policy.actions:
        return ()
    raise ValueError(f"mode 'both' but {name} modality absent and no surrogate policy covers it")


def classify_payload_or(dets: Iterable[FusedDetection], harmful_conf_threshold: float) -> str:
    """Logical-OR payload flag: harmful if any modality is confident it is.

    Returns ``"harmful"`` when any detection with class_name ``harmful``
    has effective confidence >= the threshold, else ``"normal"`` (an empty
    input is normal).
    """
    for d in dets:
        if d.class_name == "harmful" and d.effective_confidence >= harmful_conf_threshold:
            return "harmful"
    return "normal"
