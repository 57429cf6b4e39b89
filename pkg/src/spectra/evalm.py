"""Detection and tracking metrics: matched P/R/F1, average precision, ID switches.

Matching is greedy in descending confidence order (the standard detection
benchmarking convention, pinned here so numbers are comparable across
implementations): each prediction takes the highest-IoU unmatched ground
truth of its frame and class at or above the IoU threshold. Vacuous cases
are pinned: 0/0 precision and recall are 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .geometry import iou

MAP_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))


@dataclass(frozen=True)
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError(f"negative match counts: {self}")

    def __add__(self, other: "MatchCounts") -> "MatchCounts":
        return MatchCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float


def match_detections(preds: Sequence, gts: Sequence, iou_threshold: float) -> MatchCounts:
    """Greedy confidence-ordered matching for one frame and class.

    Each prediction (in descending confidence) matches the highest-IoU
    unmatched ground truth with IoU >= threshold; matched predictions are
    tp, the rest fp, leftover ground truths fn.
    """
    flags = _match_flags(preds, gts, iou_threshold)
    tp = sum(flags)
    return MatchCounts(tp=tp, fp=len(preds) - tp, fn=len(gts) - tp)


def _match_flags(preds: Sequence, gts: Sequence, iou_threshold: float) -> list[bool]:
    """Per-prediction tp flags in input order."""
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, i))
    taken = [False] * len(gts)
    flags = [False] * len(preds)
    for i in order:
        best_j = -1
        best_iou = -1.0
        for j, g in enumerate(gts):
            if taken[j]:
                continue
            o = iou(preds[i].bbox, g.bbox)
            if o >= iou_threshold and o > best_iou:
                best_j, best_iou = j, o
        if best_j >= 0:
            taken[best_j] = True
            flags[i] = True
    return flags


def precision_recall_f1(c: MatchCounts) -> tuple[float, float, float]:
    """(precision, recall, f1) with 0/0 precision and recall pinned to 1."""
    p = c.tp / (c.tp + c.fp) if c.tp + c.fp else 1.0
    r = c.tp / (c.tp + c.fn) if c.tp + c.fn else 1.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def _group(items: Sequence, key) -> dict:
    out: dict = {}
    for it in items:
        out.setdefault(key(it), []).append(it)
    return out


def match_counts(preds: Sequence, gts: Sequence, iou_threshold: float) -> MatchCounts:
    """Micro-averaged counts over every (frame, class) group."""
    preds_by = _group(preds, lambda p: (p.frame_index, p.class_name))
    gts_by = _group(gts, lambda g: (g.frame_index, g.class_name))
    total = MatchCounts()
    for key in set(preds_by) | set(gts_by):
        total = total + match_detections(preds_by.get(key, ()), gts_by.get(key, ()), iou_threshold)
    return total


def per_class_counts(preds: Sequence, gts: Sequence, iou_threshold: float) -> dict[str, MatchCounts]:
    """Counts accumulated per class across all frames."""
    preds_by = _group(preds, lambda p: p.class_name)
    gts_by = _group(gts, lambda g: g.class_name)
    return {
        cls: match_counts(preds_by.get(cls, ()), gts_by.get(cls, ()), iou_threshold)
        for cls in sorted(set(preds_by) | set(gts_by))
    }


def _class_ap(preds: Sequence, gts: Sequence, iou_threshold: float) -> float:
    """All-point interpolated AP for one class (preds/gts span frames)."""
    n_gt = len(gts)
    if n_gt == 0:
        raise ValueError("AP undefined without ground truths")
    if not preds:
        return 0.0
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, i))
    ordered = [preds[i] for i in order]
    gts_by_frame = _group(gts, lambda g: g.frame_index)
    taken = {f: [False] * len(v) for f, v in gts_by_frame.items()}
    recalls: list[float] = []
    precisions: list[float] = []
    tp = fp = 0
    for p in ordered:
        cands = gts_by_frame.get(p.frame_index, ())
        best_j = -1
        best_iou = -1.0
        for j, g in enumerate(cands):
            if taken[p.frame_index][j]:
                continue
            o = iou(p.bbox, g.bbox)
            if o >= iou_threshold and o > best_iou:
                best_j, best_iou = j, o
        if best_j >= 0:
            taken[p.frame_index][best_j] = True
            tp += 1
        else:
            fp += 1
        recalls.append(tp / n_gt)
        precisions.append(tp / (tp + fp))

    # Monotone precision envelope, integrated at every recall step.
    mrec = [0.0] + recalls + [1.0]
    mpre = [0.0] + precisions + [0.0]
    for i in range(len(mpre) - 1, 0, -1):
        mpre[i - 1] = max(mpre[i - 1], mpre[i])
    return sum(
        (mrec[i] - mrec[i - 1]) * mpre[i] for i in range(1, len(mrec)) if mrec[i] != mrec[i - 1]
    )


def pr_points(preds: Sequence, gts: Sequence, iou_threshold: float) -> list[PRPoint]:
    """Precision/recall at every distinct confidence threshold (micro counts),
    highest threshold first."""
    points = []
    for thr in sorted({p.confidence for p in preds}, reverse=True):
        kept = [p for p in preds if p.confidence >= thr]
        p, r, _ = precision_recall_f1(match_counts(kept, gts, iou_threshold))
        points.append(PRPoint(threshold=thr, precision=p, recall=r))
    return points


def average_precision(preds: Sequence, gts: Sequence, iou_threshold: float) -> float:
    """Class-mean AP at one IoU threshold; classes with no ground truth are excluded."""
    gts_by_class = _group(gts, lambda g: g.class_name)
    if not gts_by_class:
        return 0.0
    preds_by_class = _group(preds, lambda p: p.class_name)
    aps = [
        _class_ap(preds_by_class.get(cls, ()), cls_gts, iou_threshold)
        for cls, cls_gts in sorted(gts_by_class.items())
    ]
    return sum(aps) / len(aps)


def map_range(preds: Sequence, gts: Sequence) -> float:
    """COCO-style mAP: mean of class-mean AP over IoU 0.50:0.05:0.95."""
    aps = [average_precision(preds, gts, t) for t in MAP_THRESHOLDS]
    return sum(aps) / len(aps)


def id_switches(pred_rows: Sequence, gt_rows: Sequence) -> int:
    """Frames where a ground-truth object's best-IoU track id changed.

    For each ground-truth object, frames with no overlapping track are
    skipped (absence is not a switch); a switch is counted when the
    best-IoU track id differs from the id in the previous matched frame.
    """
    preds_by_frame = _group(pred_rows, lambda r: r.frame_index)
    switches = 0
    by_object = _group(gt_rows, lambda g: _gt_id(g))
    for _, rows in sorted(by_object.items()):
        rows = sorted(rows, key=lambda g: g.frame_index)
        prev_id = None
        for g in rows:
            best_id = None
            best_iou = 0.0
            for r in preds_by_frame.get(g.frame_index, ()):
                o = iou(r.bbox, g.bbox)
                if o > best_iou:
                    best_id, best_iou = r.track_id, o
            if best_id is None:
                continue
            if prev_id is not None and best_id != prev_id:
                switches += 1
            prev_id = best_id
    return switches


def _gt_id(g):
    for attr in ("object_id", "track_id"):
        if hasattr(g, attr):
            return getattr(g, attr)
    raise ValueError(f"ground-truth row without object/track id: {g!r}")
