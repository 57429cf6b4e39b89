"""Frame-to-frame identity maintenance via greedy IoU association.

Tracks hold the last observed box through detection gaps (no motion
model); a track whose miss count exceeds ``max_gap`` is lost and never
revived. Association is greedy over descending IoU, which keeps per-frame
cost at O(T*D) pair evaluations plus a sort.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

from .geometry import BBox, iou

TENTATIVE = "tentative"
ACTIVE = "active"
LOST = "lost"


@dataclass(frozen=True)
class TrackerConfig:
    iou_match_threshold: float = 0.3
    max_gap: int = 15
    min_hits: int = 1
    history_length: int = 32

    def __post_init__(self):
        if not 0.0 < self.iou_match_threshold < 1.0:
            raise ValueError(f"iou_match_threshold outside (0,1): {self.iou_match_threshold}")
        if self.max_gap < 1:
            raise ValueError(f"max_gap must be >= 1: {self.max_gap}")
        if self.min_hits < 1:
            raise ValueError(f"min_hits must be >= 1: {self.min_hits}")
        if self.history_length < 2:
            raise ValueError(f"history_length must be >= 2: {self.history_length}")


class Track:
    """Persistent identity with bounded box history and a miss counter."""

    def __init__(self, track_id: int, class_name: str, history_length: int):
        self.id = track_id
        self.class_name = class_name
        self.boxes: deque[tuple[int, BBox, float]] = deque(maxlen=history_length)
        self.last_seen = -1
        self.misses = 0
        self.state = TENTATIVE
        self.consecutive_hits = 0

    @property
    def bbox(self) -> BBox:
        """Last observed box (held unchanged through gaps)."""
        return self.boxes[-1][1]

    def observe(self, frame_index: int, box: BBox, confidence: float) -> None:
        if self.last_seen == frame_index - 1:
            self.consecutive_hits += 1
        else:
            self.consecutive_hits = 1
        self.boxes.append((frame_index, box, confidence))
        self.last_seen = frame_index
        self.misses = 0


@dataclass(frozen=True)
class TrackSnapshot:
    """A track as observed in one frame; the unit handed downstream."""

    frame_index: int
    track_id: int
    class_name: str
    bbox: BBox
    confidence: float
    state: str


def associate(
    tracks: Sequence[Track], dets: Sequence, iou_match_threshold: float
) -> tuple[list[tuple[Track, int]], list[Track], list[int]]:
    """Greedy same-class matching by descending IoU.

    Candidate (track, detection) pairs with IoU >= threshold are sorted by
    IoU descending (ties: lower track id, then detection input order) and
    accepted while both sides are unclaimed. Returns (matched pairs,
    unmatched tracks, unmatched detection indices).
    """
    pairs = []
    for t in tracks:
        for di, d in enumerate(dets):
            if d.class_name != t.class_name:
                continue
            overlap = iou(t.bbox, d.bbox)
            if overlap >= iou_match_threshold:
                pairs.append((-overlap, t.id, di, t))
    pairs.sort(key=lambda p: p[:3])

    matches: list[tuple[Track, int]] = []
    claimed_tracks: set[int] = set()
    claimed_dets: set[int] = set()
    for _, tid, di, t in pairs:
        if tid in claimed_tracks or di in claimed_dets:
            continue
        claimed_tracks.add(tid)
        claimed_dets.add(di)
        matches.append((t, di))
    unmatched_tracks = [t for t in tracks if t.id not in claimed_tracks]
    unmatched_dets = [di for di in range(len(dets)) if di not in claimed_dets]
    return matches, unmatched_tracks, unmatched_dets


class IouTracker:
    """Sequential single-writer tracker state; step frames in increasing order."""

    def __init__(self, cfg: TrackerConfig | None = None):
        self.cfg = cfg or TrackerConfig()
        self.tracks: list[Track] = []
        self.tracks_created = 0
        self._next_id = 1
        self._last_frame = -1

    def step(self, frame_index: int, dets: Sequence) -> list[TrackSnapshot]:
        """Apply one frame of detections; returns snapshots of tracks seen this frame.

        Detections need ``bbox``, ``class_name`` and ``confidence``
        attributes (FusedDetection and DetectionRecord both qualify).
        """
        if frame_index <= self._last_frame:
            raise ValueError(
                f"frame index {frame_index} not after previous {self._last_frame}"
            )
        self._last_frame = frame_index

        # Tracks whose gap already exceeded max_gap before this frame are
        # lost and may not claim detections, even if empty frames were
        # never stepped explicitly.
        for t in self.tracks:
            if t.state != LOST and frame_index - 1 - t.last_seen > self.cfg.max_gap:
                t.misses = frame_index - 1 - t.last_seen
                t.state = LOST

        live = [t for t in self.tracks if t.state != LOST]
        matches, unmatched_tracks, unmatched_dets = associate(
            live, dets, self.cfg.iou_match_threshold
        )

        seen: list[Track] = []
        for t, di in matches:
            d = dets[di]
            t.observe(frame_index, d.bbox, d.confidence)
            if t.state == TENTATIVE and t.consecutive_hits >= self.cfg.min_hits:
                t.state = ACTIVE
            seen.append(t)

        for t in unmatched_tracks:
            t.misses = frame_index - t.last_seen
            if t.misses > self.cfg.max_gap:
                t.state = LOST

        for di in unmatched_dets:
            d = dets[di]
            t = Track(self._next_id, d.class_name, self.cfg.history_length)
            self._next_id += 1
            self.tracks_created += 1
            t.observe(frame_index, d.bbox, d.confidence)
            if t.consecutive_hits >= self.cfg.min_hits:
                t.state = ACTIVE
            self.tracks.append(t)
            seen.append(t)

        seen.sort(key=lambda t: t.id)
        return [
            TrackSnapshot(
                frame_index=frame_index,
                track_id=t.id,
                class_name=t.class_name,
                bbox=t.bbox,
                confidence=t.boxes[-1][2],
                state=t.state,
            )
            for t in seen
        ]

    def active_tracks(self) -> list[Track]:
        """Tracks currently in the active state, sorted by id."""
        return sorted((t for t in self.tracks if t.state == ACTIVE), key=lambda t: t.id)

    def live_tracks(self) -> list[Track]:
        """Tentative and active tracks, sorted by id."""
        return sorted((t for t in self.tracks if t.state != LOST), key=lambda t: t.id)
