"""Multi-cue direction estimation for tracked objects.

Four independent cues per track and frame: area trend (least-squares slope
of box area), centroid velocity, scale variation (sqrt area ratio), and
sparse block-matching optical flow on a small uniform grid inside the box.
Cues abstain rather than emit low-quality votes; the fusion step combines
planar votes as a strength-weighted vector sum and radial votes by
weighted majority, and a short temporal window smooths the labels.

Directions are in image coordinates (+x = E, +y = S); headings are compass
bearings with 0 deg = N, 90 deg = E. Per-track work is constant per frame:
G^2 block matches over a (2R+1)^2 search window plus short-window
arithmetic, independent of video length.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .detio import ensure_gray
from .geometry import BBox, area, centroid

log = logging.getLogger(__name__)

COMPASS = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")
NONE_LABEL = "none"

APPROACHING = "approaching"
RECEDING = "receding"
STATIONARY = "stationary"

AREA_TREND = "area_trend"
CENTROID_VELOCITY = "centroid_velocity"
SCALE_VARIATION = "scale_variation"
SPARSE_FLOW = "sparse_flow"


def _norm_deg(angle: float) -> float:
    # float modulo of a tiny negative angle can round to exactly 360.0
    angle = angle % 360.0
    return 0.0 if angle >= 360.0 else angle


def bearing_deg(dx: float, dy: float) -> float:
    """Compass bearing of an image-plane displacement (0 = N = up, 90 = E)."""
    return _norm_deg(math.degrees(math.atan2(dx, -dy)))


def compass_label(dx: float, dy: float) -> str:
    """8-way compass label of a nonzero displacement."""
    return COMPASS[int(math.floor(bearing_deg(dx, dy) / 45.0 + 0.5)) % 8]


@dataclass(frozen=True)
class DirectionConfig:
    history_len: int = 16
    cue_window: int = 10
    smooth_window: int = 5
    grid_points: int = 4
    block_size: int = 9
    search_radius: int = 7
    area_epsilon: float = 0.02      # relative area slope per frame
    scale_epsilon: float = 0.05
    velocity_epsilon: float = 0.5   # px/frame
    velocity_saturation: float = 8.0
    texture_floor: float = 4.0      # block intensity std
    min_valid_points: int = 4
    min_area: float = 64.0          # px^2; smaller boxes skip motion analysis
    flow_weight: float = 2.0
    centroid_weight: float = 1.0

    def __post_init__(self):
        if self.history_len < 2 or self.cue_window < 2 or self.smooth_window < 1:
            raise ValueError("history_len/cue_window must be >= 2, smooth_window >= 1")
        if self.grid_points < 1 or self.search_radius < 1:
            raise ValueError("grid_points and search_radius must be >= 1")
        if self.block_size < 3 or self.block_size % 2 == 0:
            raise ValueError(f"block_size must be odd and >= 3: {self.block_size}")
        if self.flow_weight < 0 or self.centroid_weight < 0:
            raise ValueError("cue weights must be non-negative")


@dataclass(frozen=True)
class TrackSample:
    frame_index: int
    bbox: BBox
    area: float
    centroid: tuple[float, float]


class TrackHistory:
    """Bounded per-track feature history; constant-time append with eviction."""

    def __init__(self, maxlen: int):
        self._samples: deque[TrackSample] = deque(maxlen=maxlen)

    def append(self, frame_index: int, box: BBox) -> None:
        if self._samples and frame_index <= self._samples[-1].frame_index:
            raise ValueError(f"frame index {frame_index} not increasing")
        self._samples.append(TrackSample(frame_index, box, area(box), centroid(box)))

    def window(self, n: int) -> list[TrackSample]:
        """Most recent n samples, oldest first."""
        if n >= len(self._samples):
            return list(self._samples)
        return list(self._samples)[-n:]

    def __len__(self) -> int:
        return len(self._samples)


@dataclass(frozen=True)
class CueResult:
    """One cue's verdict: an optional planar unit vote, an optional radial vote, and a strength."""

    cue: str
    planar_vote: tuple[float, float] | None
    radial_vote: str | None
    strength: float

    def __post_init__(self):
        if self.strength > 0 and self.planar_vote is None and self.radial_vote is None:
            raise ValueError("positive strength requires at least one vote")


def _abstain(cue: str) -> CueResult:
    return CueResult(cue, None, None, 0.0)


@dataclass(frozen=True)
class DirectionEstimate:
    planar_label: str
    radial_label: str
    heading_deg: float | None
    confidence: float

    def __post_init__(self):
        if (self.planar_label == NONE_LABEL) != (self.heading_deg is None):
            raise ValueError("planar label is none iff heading is absent")
        if self.heading_deg is not None and not 0.0 <= self.heading_deg < 360.0:
            raise ValueError(f"heading outside [0,360): {self.heading_deg}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence outside [0,1]: {self.confidence}")


NO_ESTIMATE = DirectionEstimate(NONE_LABEL, STATIONARY, None, 0.0)


def area_trend(history: TrackHistory, cfg: DirectionConfig) -> CueResult:
    """Radial vote from the least-squares slope of area over the cue window,
    normalized by the mean area."""
    samples = history.window(cfg.cue_window)
    if len(samples) < 3:
        return _abstain(AREA_TREND)
    x = np.array([s.frame_index for s in samples], dtype=np.float64)
    y = np.array([s.area for s in samples], dtype=np.float64)
    xc = x - x.mean()
    slope = float((xc * (y - y.mean())).sum() / (xc * xc).sum())
    rel = slope / float(y.mean())
    if rel > cfg.area_epsilon:
        vote = APPROACHING
    elif rel < -cfg.area_epsilon:
        vote = RECEDING
    else:
        vote = STATIONARY
    strength = min(1.0, abs(rel) / (4.0 * cfg.area_epsilon))
    return CueResult(AREA_TREND, None, vote, strength)


def centroid_velocity(history: TrackHistory, cfg: DirectionConfig) -> CueResult:
    """Planar vote from mean per-frame centroid displacement over the cue window."""
    samples = history.window(cfg.cue_window)
    if len(samples) < 2:
        return _abstain(CENTROID_VELOCITY)
    first, last = samples[0], samples[-1]
    span = last.frame_index - first.frame_index
    dx = (last.centroid[0] - first.centroid[0]) / span
    dy = (last.centroid[1] - first.centroid[1]) / span
    mag = math.hypot(dx, dy)
    if mag < cfg.velocity_epsilon:
        return _abstain(CENTROID_VELOCITY)
    strength = min(1.0, mag / cfg.velocity_saturation)
    return CueResult(CENTROID_VELOCITY, (dx / mag, dy / mag), None, strength)


def scale_variation(history: TrackHistory, cfg: DirectionConfig) -> CueResult:
    """Radial vote from the square-root area ratio across the cue window."""
    samples = history.window(cfg.cue_window)
    if len(samples) < 2:
        return _abstain(SCALE_VARIATION)
    r = math.sqrt(samples[-1].area / samples[0].area)
    if r > 1.0 + cfg.scale_epsilon:
        vote = APPROACHING
    elif r < 1.0 - cfg.scale_epsilon:
        vote = RECEDING
    else:
        vote = STATIONARY
    strength = min(1.0, abs(r - 1.0) / (4.0 * cfg.scale_epsilon))
    return CueResult(SCALE_VARIATION, None, vote, strength)


def _candidate_order(radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Displacements in tie-break order: magnitude, then dx, then dy."""
    dy, dx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    dx, dy = dx.ravel(), dy.ravel()
    perm = sorted(range(dx.size), key=lambda i: (dx[i] ** 2 + dy[i] ** 2, dx[i], dy[i]))
    return dx[perm], dy[perm]


def block_match_flow(
    prev: np.ndarray, cur: np.ndarray, box: BBox, cfg: DirectionConfig
) -> tuple[tuple[float, float], int] | None:
    """Median block-matching displacement over a grid inside the box.

    A uniform grid_points x grid_points grid is placed inside the box; each
    point's block from ``prev`` is matched into ``cur`` by minimum sum of
    absolute differences over displacements within +-search_radius per axis
    (ties: smallest magnitude, then dx, then dy). Points whose block
    intensity std falls below the texture floor are discarded.

    Returns (component-wise median displacement, surviving point count), or
    None when the box lacks edge margin for block + search or too few
    points survive the texture floor.
    """
    prev = ensure_gray(prev)
    cur = ensure_gray(cur)
    if prev.shape != cur.shape:
        raise ValueError(f"frame shape mismatch: {prev.shape} vs {cur.shape}")
    h, w = prev.shape
    g, b, r = cfg.grid_points, cfg.block_size, cfg.search_radius
    half = b // 2
    margin = half + r

    fracs = [(i + 1) / (g + 1) for i in range(g)]
    xs = [int(round(box.x1 + box.width * f)) for f in fracs]
    ys = [int(round(box.y1 + box.height * f)) for f in fracs]
    if min(xs) - margin < 0 or max(xs) + margin >= w or min(ys) - margin < 0 or max(ys) + margin >= h:
        log.debug("block_match_flow: box %s too close to %dx%d frame edge for margin %d",
                  box, w, h, margin)
        return None

    points = [(x, y) for y in ys for x in xs]
    blocks = np.stack(
        [prev[y - half : y + half + 1, x - half : x + half + 1] for x, y in points]
    ).astype(np.int32)
    texture = blocks.reshape(len(points), -1).std(axis=1)
    valid = texture >= cfg.texture_floor
    n_valid = int(valid.sum())
    if n_valid < cfg.min_valid_points:
        return None

    regions = np.stack(
        [
            cur[y - margin : y + margin + 1, x - margin : x + margin + 1]
            for (x, y), ok in zip(points, valid)
            if ok
        ]
    ).astype(np.int32)
    # (n, 2r+1, 2r+1, b, b): every candidate block per surviving point.
    windows = np.lib.stride_tricks.sliding_window_view(regions, (b, b), axis=(1, 2))
    costs = np.abs(windows - blocks[valid][:, None, None, :, :]).sum(axis=(3, 4))
    costs = costs.reshape(n_valid, -1)

    cand_dx, cand_dy = _candidate_order(r)
    flat_idx = (cand_dy + r) * (2 * r + 1) + (cand_dx + r)
    ordered = costs[:, flat_idx]
    best = ordered.argmin(axis=1)  # first minimum = tie-break order
    mdx = float(np.median(cand_dx[best]))
    mdy = float(np.median(cand_dy[best]))
    return (mdx, mdy), n_valid


def sparse_flow(prev: np.ndarray, cur: np.ndarray, box: BBox, cfg: DirectionConfig) -> CueResult:
    """Planar vote from the median grid displacement; abstains below the
    velocity floor, on geometry violations, and on texture-poor boxes."""
    match = block_match_flow(prev, cur, box, cfg)
    if match is None:
        return _abstain(SPARSE_FLOW)
    (mdx, mdy), n_valid = match
    mag = math.hypot(mdx, mdy)
    if mag < cfg.velocity_epsilon:
        return _abstain(SPARSE_FLOW)
    strength = (n_valid / cfg.grid_points**2) * min(1.0, mag / cfg.velocity_saturation)
    return CueResult(SPARSE_FLOW, (mdx / mag, mdy / mag), None, strength)


_PLANAR_WEIGHT_ATTR = {SPARSE_FLOW: "flow_weight", CENTROID_VELOCITY: "centroid_weight"}


def fuse_cues(cues: Sequence[CueResult], box_area: float, cfg: DirectionConfig) -> DirectionEstimate:
    """Combine cue votes into one instantaneous estimate.

    Planar: strength-weighted vector sum of planar votes (flow outranks
    centroid velocity), quantized to the 8-way compass. Radial: strength-
    weighted majority among approaching/receding/stationary (ties fall to
    stationary). Very small boxes are excluded from motion analysis
    entirely. Confidence is the mean vote-agreement fraction times the
    mean strength of the contributing cues.
    """
    if box_area < cfg.min_area:
        return NO_ESTIMATE

    vx = vy = planar_total = 0.0
    radial_scores = {APPROACHING: 0.0, RECEDING: 0.0, STATIONARY: 0.0}
    radial_total = 0.0
    contributing = [c for c in cues if c.strength > 0]
    for c in contributing:
        if c.planar_vote is not None:
            weight = getattr(cfg, _PLANAR_WEIGHT_ATTR.get(c.cue, "centroid_weight"))
            vx += weight * c.strength * c.planar_vote[0]
            vy += weight * c.strength * c.planar_vote[1]
            planar_total += weight * c.strength
        if c.radial_vote is not None:
            radial_scores[c.radial_vote] += c.strength
            radial_total += c.strength

    fracs = []
    heading = None
    planar_label = NONE_LABEL
    if planar_total > 0:
        mag = math.hypot(vx, vy)
        fracs.append(mag / planar_total)
        if mag > 0:
            heading = bearing_deg(vx, vy)
            planar_label = compass_label(vx, vy)

    radial_label = STATIONARY
    if radial_total > 0:
        best = max(radial_scores.values())
        winners = [k for k, v in radial_scores.items() if v == best]
        radial_label = winners[0] if len(winners) == 1 else STATIONARY
        fracs.append(radial_scores[radial_label] / radial_total)

    if not contributing or not fracs:
        return NO_ESTIMATE
    agreement = sum(fracs) / len(fracs)
    mean_strength = sum(c.strength for c in contributing) / len(contributing)
    confidence = min(1.0, agreement * mean_strength)
    return DirectionEstimate(planar_label, radial_label, heading, confidence)


def _majority(labels: list[str]) -> str:
    """Most frequent label; ties go to the most recently seen among the tied."""
    counts: dict[str, int] = {}
    last_seen: dict[str, int] = {}
    for i, lab in enumerate(labels):
        counts[lab] = counts.get(lab, 0) + 1
        last_seen[lab] = i
    return max(counts, key=lambda lab: (counts[lab], last_seen[lab]))


def smooth(recent: Sequence[DirectionEstimate], window: int) -> DirectionEstimate:
    """Majority-vote temporal smoothing over the most recent estimates.

    Confidence is the planar majority fraction times the mean confidence
    of the estimates agreeing with the winning planar label; the heading
    is the circular mean of the agreeing headings.
    """
    recent = list(recent)[-window:]
    if not recent:
        return NO_ESTIMATE
    planar_winner = _majority([e.planar_label for e in recent])
    radial_winner = _majority([e.radial_label for e in recent])
    agreeing = [e for e in recent if e.planar_label == planar_winner]
    confidence = (len(agreeing) / len(recent)) * (
        sum(e.confidence for e in agreeing) / len(agreeing)
    )
    heading = None
    if planar_winner != NONE_LABEL:
        rad = [math.radians(e.heading_deg) for e in agreeing]
        heading = _norm_deg(
            math.degrees(
                math.atan2(sum(math.sin(a) for a in rad), sum(math.cos(a) for a in rad))
            )
        )
    return DirectionEstimate(planar_winner, radial_winner, heading, min(1.0, confidence))


class DirectionEstimator:
    """Per-track online estimator: bounded history in, smoothed estimate out.

    The flow cue runs only when the track was updated in the immediately
    preceding frame (the pipeline holds a single previous image, so an
    older box would sample background).
    """

    def __init__(self, cfg: DirectionConfig | None = None):
        self.cfg = cfg or DirectionConfig()
        self.history = TrackHistory(self.cfg.history_len)
        self.recent: deque[DirectionEstimate] = deque(maxlen=self.cfg.smooth_window)
        self._prev_frame: int | None = None
        self._prev_box: BBox | None = None

    def update(
        self,
        frame_index: int,
        box: BBox,
        prev_img: np.ndarray | None = None,
        cur_img: np.ndarray | None = None,
    ) -> DirectionEstimate:
        self.history.append(frame_index, box)
        cues = [
            area_trend(self.history, self.cfg),
            centroid_velocity(self.history, self.cfg),
            scale_variation(self.history, self.cfg),
        ]
        if (
            prev_img is not None
            and cur_img is not None
            and self._prev_frame == frame_index - 1
        ):
            cues.append(sparse_flow(prev_img, cur_img, self._prev_box, self.cfg))
        instantaneous = fuse_cues(cues, area(box), self.cfg)
        self.recent.append(instantaneous)
        self._prev_frame = frame_index
        self._prev_box = box
        return smooth(self.recent, self.cfg.smooth_window)
