"""Synthetic scenarios: parametric trajectories, noisy detection logs, rendered frames.

Serves as the ground-truth oracle for tracker, direction, and metric tests.
All randomness comes from a counter-based splitmix64 hash keyed by
(seed, stream, frame, object, ...) so identical (spec, seed) pairs produce
byte-identical outputs regardless of generation order, and the generator
is reproducible in any language:

    mix(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
            z *= 0x94D049BB133111EB; z ^= z >> 31          (mod 2^64)
    hash(seed, p1..pn): h = mix(seed + G); for p: h = mix((h ^ p) + G)
    with G = 0x9E3779B97F4A7C15; uniform = hash / 2^64.

Gaussians are Box-Muller over two uniforms; Poisson uses Knuth's product
method. Rendered frames are a dark background (16) plus one isotropic
Gaussian blob per object (peak 240, sigma = box width / 4) plus a static
per-pixel dither field in [-7, +7] (std ~= 4.32, above the default flow
texture floor of 4.0). The dither field does not vary per frame, so an
integer object translation moves blob pixels bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from .detio import DetectionRecord, FrameDetections, TrackRow
from .direction import NONE_LABEL, compass_label
from .geometry import BBox, FrameDims

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

# Stream keys; part of the pinned generator contract.
_DROPOUT, _JITTER, _SIZE, _CONF, _FP_COUNT, _FP_ATTR, _DITHER = range(1, 8)

_FP_MARGIN = 12.0
_FP_AREA_RANGE = (64.0, 400.0)

BACKGROUND = 16
BLOB_PEAK = 240
DITHER_AMPLITUDE = 7


class ScenarioError(ValueError):
    """Invalid scenario specification."""


def _mix(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return z ^ (z >> 31)


def hash64(seed: int, *parts: int) -> int:
    h = _mix((seed + GOLDEN) & MASK64)
    for p in parts:
        h = _mix(((h ^ (int(p) & MASK64)) + GOLDEN) & MASK64)
    return h


def u01(seed: int, *parts: int) -> float:
    """Uniform in [0, 1), random-access by key."""
    return hash64(seed, *parts) / 2.0**64


def gauss(seed: int, *parts: int) -> float:
    """Standard normal via Box-Muller over two keyed uniforms."""
    u1 = u01(seed, *parts, 0)
    u2 = u01(seed, *parts, 1)
    return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)


def poisson(lam: float, seed: int, *parts: int) -> int:
    """Poisson count via Knuth's product method over keyed uniforms."""
    if lam <= 0.0:
        return 0
    limit = math.exp(-lam)
    k = 0
    p = 1.0
    while True:
        k += 1
        p *= u01(seed, *parts, k)
        if p <= limit:
            return k - 1


@dataclass(frozen=True)
class ObjectSpec:
    """One parametric object: linear centroid motion, linear area growth, square box."""

    class_name: str
    start: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    start_area: float = 400.0
    growth: float = 0.0              # px^2 per frame, additive
    spawn: int = 0
    despawn: int | None = None       # exclusive; None = scenario end

    def __post_init__(self):
        if not self.class_name:
            raise ScenarioError("object class name must be nonempty")
        if self.start_area <= 0:
            raise ScenarioError(f"start_area must be positive: {self.start_area}")
        if self.spawn < 0:
            raise ScenarioError(f"spawn must be >= 0: {self.spawn}")

    def alive(self, frame: int, frame_count: int) -> bool:
        end = self.despawn if self.despawn is not None else frame_count
        return self.spawn <= frame < end

    def true_box(self, frame: int) -> BBox:
        t = frame - self.spawn
        cx = self.start[0] + self.velocity[0] * t
        cy = self.start[1] + self.velocity[1] * t
        a = self.start_area + self.growth * t
        if a <= 0:
            raise ScenarioError(f"object area becomes non-positive at frame {frame}")
        half = math.sqrt(a) / 2.0
        return BBox(cx - half, cy - half, cx + half, cy + half)


@dataclass(frozen=True)
class NoiseSpec:
    center_jitter: float = 0.0        # std, px
    size_jitter: float = 0.0          # std, fraction of side length
    dropout: float = 0.0              # per-object per-frame probability
    false_positive_rate: float = 0.0  # Poisson rate per frame
    conf_range: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if min(self.center_jitter, self.size_jitter, self.false_positive_rate) < 0:
            raise ScenarioError("noise rates must be non-negative")
        if not 0.0 <= self.dropout <= 1.0:
            raise ScenarioError(f"dropout outside [0,1]: {self.dropout}")
        lo, hi = self.conf_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ScenarioError(f"bad confidence range: {self.conf_range}")


@dataclass(frozen=True)
class ScenarioSpec:
    frame_count: int
    dims: FrameDims
    objects: tuple[ObjectSpec, ...] = ()
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0

    def __post_init__(self):
        if self.frame_count < 0:
            raise ScenarioError(f"frame_count must be >= 0: {self.frame_count}")

    def class_names(self) -> list[str]:
        """Distinct classes in first-appearance order; index = class id."""
        seen: list[str] = []
        for o in self.objects:
            if o.class_name not in seen:
                seen.append(o.class_name)
        return seen


@dataclass(frozen=True)
class GroundTruthBox:
    """True state of one object in one frame."""

    frame_index: int
    object_id: int
    class_name: str
    bbox: BBox
    heading: str  # compass label of the velocity, or "none" when static


def generate(
    spec: ScenarioSpec, modality: str = "RGB"
) -> tuple[list[GroundTruthBox], list[FrameDetections]]:
    """Ground truth plus one modality's noisy observations.

    True boxes follow the parametric trajectories exactly; observations are
    the true boxes jittered, dropped with the dropout probability, and
    augmented with Poisson false positives. Draw keys include the modality
    so RGB and IR observations of one scenario are independent.
    """
    classes = spec.class_names()
    seed = spec.seed
    m = 0 if modality == "RGB" else 1
    noise = spec.noise
    lo, hi = noise.conf_range

    gt: list[GroundTruthBox] = []
    frames: list[FrameDetections] = []
    for f in range(spec.frame_count):
        records: list[DetectionRecord] = []
        for i, obj in enumerate(spec.objects):
            if not obj.alive(f, spec.frame_count):
                continue
            box = obj.true_box(f)
            if box.x1 < 0 or box.y1 < 0 or box.x2 > spec.dims.width or box.y2 > spec.dims.height:
                raise ScenarioError(
                    f"object {i} ({obj.class_name}) leaves frame bounds at frame {f}: {box}"
                )
            heading = (
                NONE_LABEL
                if obj.velocity == (0.0, 0.0)
                else compass_label(obj.velocity[0], obj.velocity[1])
            )
            gt.append(GroundTruthBox(f, i + 1, obj.class_name, box, heading))

            if u01(seed, _DROPOUT, m, f, i) < noise.dropout:
                continue
            cx = (box.x1 + box.x2) / 2.0 + noise.center_jitter * gauss(seed, _JITTER, m, f, i, 0)
            cy = (box.y1 + box.y2) / 2.0 + noise.center_jitter * gauss(seed, _JITTER, m, f, i, 1)
            hw = box.width / 2.0 * max(0.05, 1.0 + noise.size_jitter * gauss(seed, _SIZE, m, f, i, 0))
            hh = box.height / 2.0 * max(0.05, 1.0 + noise.size_jitter * gauss(seed, _SIZE, m, f, i, 1))
            conf = lo + (hi - lo) * u01(seed, _CONF, m, f, i)
            records.append(
                DetectionRecord(
                    frame_index=f,
                    modality=modality,
                    class_id=classes.index(obj.class_name),
                    class_name=obj.class_name,
                    confidence=conf,
                    bbox=BBox(cx - hw, cy - hh, cx + hw, cy + hh),
                )
            )

        if classes:
            for k in range(poisson(noise.false_positive_rate, seed, _FP_COUNT, m, f)):
                ci = int(u01(seed, _FP_ATTR, m, f, k, 0) * len(classes)) % len(classes)
                cx = _FP_MARGIN + u01(seed, _FP_ATTR, m, f, k, 1) * (spec.dims.width - 2 * _FP_MARGIN)
                cy = _FP_MARGIN + u01(seed, _FP_ATTR, m, f, k, 2) * (spec.dims.height - 2 * _FP_MARGIN)
                a = _FP_AREA_RANGE[0] + u01(seed, _FP_ATTR, m, f, k, 3) * (
                    _FP_AREA_RANGE[1] - _FP_AREA_RANGE[0]
                )
                half = math.sqrt(a) / 2.0
                conf = lo + (hi - lo) * u01(seed, _FP_ATTR, m, f, k, 4)
                records.append(
                    DetectionRecord(
                        frame_index=f,
                        modality=modality,
                        class_id=ci,
                        class_name=classes[ci],
                        confidence=conf,
                        bbox=BBox(cx - half, cy - half, cx + half, cy + half),
                    )
                )

        if records:
            rgb = tuple(records) if modality == "RGB" else None
            ir = tuple(records) if modality == "IR" else None
            frames.append(FrameDetections(f, rgb=rgb, ir=ir))
    return gt, frames


def ground_truth_rows(gt: Iterable[GroundTruthBox]) -> list[TrackRow]:
    """Ground truth in tracking-CSV row form (ids are true object ids)."""
    return [
        TrackRow(
            frame_index=g.frame_index,
            track_id=g.object_id,
            class_name=g.class_name,
            bbox=g.bbox,
            confidence=1.0,
            direction=g.heading,
            dir_conf=1.0,
        )
        for g in gt
    ]


def _mix_vec(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def dither_field(seed: int, dims: FrameDims) -> np.ndarray:
    """Static per-pixel dither in [-7, +7], keyed by (seed, pixel index)."""
    base = np.uint64(hash64(seed, _DITHER))
    idx = np.arange(1, dims.height * dims.width + 1, dtype=np.uint64)
    z = _mix_vec(base + idx * np.uint64(GOLDEN))
    amp = 2 * DITHER_AMPLITUDE + 1
    return ((z % np.uint64(amp)).astype(np.int32) - DITHER_AMPLITUDE).reshape(
        dims.height, dims.width
    )


def render_frame(
    truth: Sequence[GroundTruthBox], dims: FrameDims, seed: int
) -> np.ndarray:
    """Render one frame: background + dither + one Gaussian blob per object.

    Blob peak is 240 absolute with sigma = box width / 4, accumulated over
    a 4-sigma window; values are clamped to [0, 255] and rounded half-up.
    """
    canvas = (BACKGROUND + dither_field(seed, dims)).astype(np.float64)
    for g in truth:
        cx, cy = (g.bbox.x1 + g.bbox.x2) / 2.0, (g.bbox.y1 + g.bbox.y2) / 2.0
        sigma = g.bbox.width / 4.0
        reach = 4.0 * sigma
        x0 = max(0, int(math.floor(cx - reach)))
        x1 = min(dims.width, int(math.ceil(cx + reach)) + 1)
        y0 = max(0, int(math.floor(cy - reach)))
        y1 = min(dims.height, int(math.ceil(cy + reach)) + 1)
        if x0 >= x1 or y0 >= y1:
            continue
        xs = np.arange(x0, x1, dtype=np.float64) - cx
        ys = np.arange(y0, y1, dtype=np.float64) - cy
        r2 = ys[:, None] ** 2 + xs[None, :] ** 2
        canvas[y0:y1, x0:x1] += (BLOB_PEAK - BACKGROUND) * np.exp(-r2 / (2.0 * sigma * sigma))
    return np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8)


def render_scenario(spec: ScenarioSpec, gt: Sequence[GroundTruthBox]):
    """Yield (frame_index, image) for every frame of the scenario."""
    by_frame: dict[int, list[GroundTruthBox]] = {}
    for g in gt:
        by_frame.setdefault(g.frame_index, []).append(g)
    for f in range(spec.frame_count):
        yield f, render_frame(by_frame.get(f, ()), spec.dims, spec.seed)


def parse_scenario(stream: IO[str]) -> ScenarioSpec:
    """Parse a scenario spec file.

    Line-oriented ``key = value`` pairs, ``#`` comments. Keys: ``frames``,
    ``width``, ``height``, ``seed``, repeated ``object`` lines with value
    ``class cx cy vx vy area [growth [spawn [despawn]]]``, and
    ``noise.center_jitter``, ``noise.size_jitter``, ``noise.dropout``,
    ``noise.false_positive_rate``, ``noise.conf_lo``, ``noise.conf_hi``.
    """
    scalars: dict[str, str] = {}
    objects: list[ObjectSpec] = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "object":
            parts = value.split()
            if not 6 <= len(parts) <= 9:
                raise ScenarioError(
                    f"line {lineno}: object needs 'class cx cy vx vy area [growth [spawn [despawn]]]'"
                )
            try:
                objects.append(
                    ObjectSpec(
                        class_name=parts[0],
                        start=(float(parts[1]), float(parts[2])),
                        velocity=(float(parts[3]), float(parts[4])),
                        start_area=float(parts[5]),
                        growth=float(parts[6]) if len(parts) > 6 else 0.0,
                        spawn=int(parts[7]) if len(parts) > 7 else 0,
                        despawn=int(parts[8]) if len(parts) > 8 else None,
                    )
                )
            except (ValueError, ScenarioError) as exc:
                raise ScenarioError(f"line {lineno}: {exc}") from exc
        else:
            scalars[key] = value

    def _get(key: str, cast, default=None):
        if key not in scalars:
            if default is None:
                raise ScenarioError(f"missing required key '{key}'")
            return default
        try:
            return cast(scalars[key])
        except ValueError as exc:
            raise ScenarioError(f"bad value for '{key}': {scalars[key]!r}") from exc

    known = {"frames", "width", "height", "seed", "noise.center_jitter", "noise.size_jitter",
             "noise.dropout", "noise.false_positive_rate", "noise.conf_lo", "noise.conf_hi"}
    unknown = set(scalars) - known
    if unknown:
        raise ScenarioError(f"unknown keys: {sorted(unknown)}")

    noise = NoiseSpec(
        center_jitter=_get("noise.center_jitter", float, 0.0),
        size_jitter=_get("noise.size_jitter", float, 0.0),
        dropout=_get("noise.dropout", float, 0.0),
        false_positive_rate=_get("noise.false_positive_rate", float, 0.0),
        conf_range=(_get("noise.conf_lo", float, 1.0), _get("noise.conf_hi", float, 1.0)),
    )
    return ScenarioSpec(
        frame_count=_get("frames", int),
        dims=FrameDims(_get("width", int), _get("height", int)),
        objects=tuple(objects),
        noise=noise,
        seed=_get("seed", int, 0),
    )
