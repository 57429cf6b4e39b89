"""Box arithmetic, IoU, and native-frame <-> detector-input coordinate mapping."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in native frame pixels, corner form (x1, y1, x2, y2).

    Width and height must be strictly positive; degenerate boxes are
    rejected on construction so corrupt inputs fail fast.
    """

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not math.isfinite(v):
                raise ValueError(f"non-finite bbox coordinate: {self}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"bbox must have positive width and height: {self}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    def translate(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)


@dataclass(frozen=True)
class FrameDims:
    """Frame size in pixels."""

    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"frame dims must be positive: {self}")


@dataclass(frozen=True)
class LetterboxTransform:
    """Aspect-preserving scale-then-pad mapping from source to destination frame.

    Forward maps a source-frame point into the destination (detector input)
    frame; pads are symmetric per axis.
    """

    scale: float
    pad_x: float
    pad_y: float

    def forward(self, x: float, y: float) -> tuple[float, float]:
        return (x * self.scale + self.pad_x, y * self.scale + self.pad_y)

    def inverse(self, x: float, y: float) -> tuple[float, float]:
        return ((x - self.pad_x) / self.scale, (y - self.pad_y) / self.scale)

    def forward_box(self, box: BBox) -> BBox:
        x1, y1 = self.forward(box.x1, box.y1)
        x2, y2 = self.forward(box.x2, box.y2)
        return BBox(x1, y1, x2, y2)

    def inverse_box(self, box: BBox) -> BBox:
        x1, y1 = self.inverse(box.x1, box.y1)
        x2, y2 = self.inverse(box.x2, box.y2)
        return BBox(x1, y1, x2, y2)


def area(box: BBox) -> float:
    """Box area in square pixels."""
    return box.width * box.height


def centroid(box: BBox) -> tuple[float, float]:
    """Box center point."""
    return ((box.x1 + box.x2) / 2.0, (box.y1 + box.y2) / 2.0)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes, in [0, 1].

    Touching-but-not-overlapping boxes score 0 (open intersection).
    """
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (area(a) + area(b) - inter)


def letterbox_for(src: FrameDims, dst: FrameDims) -> LetterboxTransform:
    """Transform that fits ``src`` into ``dst`` without distorting aspect ratio."""
    scale = min(dst.width / src.width, dst.height / src.height)
    pad_x = (dst.width - src.width * scale) / 2.0
    pad_y = (dst.height - src.height * scale) / 2.0
    return LetterboxTransform(scale=scale, pad_x=pad_x, pad_y=pad_y)
