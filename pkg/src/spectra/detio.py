"""Detection-log, PGM frame, and tracking-CSV I/O.

Formats (all UTF-8, ``.`` decimal separator):

* Detection log, one record per line, ``#`` comments::

      frame_index<TAB>modality<TAB>class_id<TAB>class_name<TAB>confidence<TAB>x1<TAB>y1<TAB>x2<TAB>y2

  ``modality`` is ``RGB`` or ``IR``; coordinates are native frame pixels;
  frame indices must be non-decreasing down the file. Frames absent from
  the log mean "no detections", not errors.

* Frames: PGM (P5 binary or P2 ASCII), maxval <= 255, named
  ``<stem>_<frame_index>.pgm``.

* Tracking CSV header:
  ``frame,track_id,class,x1,y1,x2,y2,conf,direction,dir_conf``
  with numeric fields at 3-decimal fixed precision.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

from .geometry import BBox

MODALITIES = ("RGB", "IR")

CSV_HEADER = "frame,track_id,class,x1,y1,x2,y2,conf,direction,dir_conf"


class LogFormatError(ValueError):
    """Malformed detection log or tracking CSV."""


class PgmFormatError(ValueError):
    """Malformed or unsupported PGM file."""


@dataclass(frozen=True)
class DetectionRecord:
    """One detector output for one frame."""

    frame_index: int
    modality: str
    class_id: int
    class_name: str
    confidence: float
    bbox: BBox

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError(f"negative frame index: {self.frame_index}")
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality: {self.modality!r}")
        if not self.class_name:
            raise ValueError("empty class name")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence outside [0,1]: {self.confidence}")


@dataclass(frozen=True)
class FrameDetections:
    """Per-frame detections grouped by modality.

    A modality is ``None`` when it was not observed for this frame (no
    detector ran), as opposed to an empty tuple (detector ran, found
    nothing).
    """

    frame_index: int
    rgb: tuple[DetectionRecord, ...] | None = None
    ir: tuple[DetectionRecord, ...] | None = None

    def records(self) -> tuple[DetectionRecord, ...]:
        return (self.rgb or ()) + (self.ir or ())


def parse_detection_log(stream: IO[str]) -> Iterator[FrameDetections]:
    """Parse a detection log into per-frame groups.

    Frames are emitted in strictly increasing frame_index order; a
    decreasing index, a malformed line, or an invariant violation raises
    LogFormatError naming the line number.
    """
    current: list[DetectionRecord] = []
    current_frame = -1
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 9:
            raise LogFormatError(f"line {lineno}: expected 9 tab-separated fields, got {len(fields)}")
        try:
            rec = DetectionRecord(
                frame_index=int(fields[0]),
                modality=fields[1],
                class_id=int(fields[2]),
                class_name=fields[3],
                confidence=float(fields[4]),
                bbox=BBox(float(fields[5]), float(fields[6]), float(fields[7]), float(fields[8])),
            )
        except ValueError as exc:
            raise LogFormatError(f"line {lineno}: {exc}") from exc
        if rec.frame_index < current_frame:
            raise LogFormatError(
                f"line {lineno}: frame index {rec.frame_index} decreases below {current_frame}"
            )
        if rec.frame_index > current_frame:
            if current:
                yield _group_frame(current_frame, current)
                current = []
            current_frame = rec.frame_index
        current.append(rec)
    if current:
        yield _group_frame(current_frame, current)


def _group_frame(frame_index: int, records: list[DetectionRecord]) -> FrameDetections:
    rgb = tuple(r for r in records if r.modality == "RGB")
    ir = tuple(r for r in records if r.modality == "IR")
    return FrameDetections(frame_index, rgb=rgb or None, ir=ir or None)


def write_detection_log(frames: Iterable[FrameDetections], stream: IO[str]) -> None:
    """Write frames as a detection log; inverse of parse_detection_log.

    Frames with no records at all are not representable (absence means
    "no detections") and are skipped.
    """
    for frame in frames:
        for rec in frame.records():
            stream.write(
                f"{rec.frame_index}\t{rec.modality}\t{rec.class_id}\t{rec.class_name}\t"
                f"{rec.confidence!r}\t{rec.bbox.x1!r}\t{rec.bbox.y1!r}\t{rec.bbox.x2!r}\t{rec.bbox.y2!r}\n"
            )


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a P5/P2 PGM file (maxval <= 255) as a (height, width) uint8 array."""
    data = Path(path).read_bytes()
    if data[:2] == b"P5":
        binary = True
    elif data[:2] == b"P2":
        binary = False
    else:
        raise PgmFormatError(f"{path}: unsupported magic {data[:2]!r}, expected P5 or P2")

    pos = 2
    header: list[int] = []
    while len(header) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token:
            raise PgmFormatError(f"{path}: truncated header")
        try:
            header.append(int(token))
        except ValueError as exc:
            raise PgmFormatError(f"{path}: bad header token {token!r}") from exc
    width, height, maxval = header
    if width <= 0 or height <= 0:
        raise PgmFormatError(f"{path}: dimension mismatch {width}x{height}")
    if not 0 < maxval <= 255:
        raise PgmFormatError(f"{path}: maxval {maxval} outside (0, 255]")

    if binary:
        pos += 1  # single whitespace byte after maxval
        payload = data[pos : pos + width * height]
        if len(payload) < width * height:
            raise PgmFormatError(f"{path}: truncated payload ({len(payload)} of {width * height} bytes)")
        pixels = np.frombuffer(payload, dtype=np.uint8)
    else:
        tokens = data[pos:].split()
        if len(tokens) < width * height:
            raise PgmFormatError(f"{path}: truncated payload ({len(tokens)} of {width * height} values)")
        pixels = np.array([int(t) for t in tokens[: width * height]], dtype=np.int64)
        if pixels.min() < 0 or pixels.max() > maxval:
            raise PgmFormatError(f"{path}: pixel value outside [0, {maxval}]")
        pixels = pixels.astype(np.uint8)
    return pixels.reshape(height, width)


def write_pgm(img: np.ndarray, path: str | Path) -> None:
    """Write a (height, width) uint8 array as binary PGM (P5, maxval 255)."""
    gray = ensure_gray(img)
    h, w = gray.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(gray.tobytes())


def ensure_gray(img: np.ndarray) -> np.ndarray:
    """Validate and return an 8-bit grayscale image array."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"grayscale image must be 2-D, got shape {img.shape}")
    if img.dtype != np.uint8:
        raise ValueError(f"grayscale image must be uint8, got {img.dtype}")
    return img


def frame_image_path(frames_dir: str | Path, frame_index: int) -> Path | None:
    """Locate the ``<stem>_<frame_index>.pgm`` file for a frame, if any."""
    matches = sorted(Path(frames_dir).glob(f"*_{frame_index}.pgm"))
    return matches[0] if matches else None


@dataclass(frozen=True)
class TrackRow:
    """One tracking-CSV row: a track observed in one frame."""

    frame_index: int
    track_id: int
    class_name: str
    bbox: BBox
    confidence: float
    direction: str
    dir_conf: float


def write_tracking_csv(rows: Iterable[TrackRow], stream: IO[str]) -> None:
    """Write tracking output rows with the pinned header and 3-decimal numerics."""
    stream.write(CSV_HEADER + "\n")
    for r in rows:
        b = r.bbox
        stream.write(
            f"{r.frame_index},{r.track_id},{r.class_name},"
            f"{b.x1:.3f},{b.y1:.3f},{b.x2:.3f},{b.y2:.3f},"
            f"{r.confidence:.3f},{r.direction},{r.dir_conf:.3f}\n"
        )


def parse_tracking_csv(stream: IO[str]) -> list[TrackRow]:
    """Parse a tracking CSV produced by write_tracking_csv."""
    header = stream.readline().strip()
    if header != CSV_HEADER:
        raise LogFormatError(f"unexpected CSV header: {header!r}")
    rows = []
    for lineno, raw in enumerate(stream, start=2):
        line = raw.strip()
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != 10:
            raise LogFormatError(f"line {lineno}: expected 10 fields, got {len(fields)}")
        try:
            rows.append(
                TrackRow(
                    frame_index=int(fields[0]),
                    track_id=int(fields[1]),
                    class_name=fields[2],
                    bbox=BBox(float(fields[3]), float(fields[4]), float(fields[5]), float(fields[6])),
                    confidence=float(fields[7]),
                    direction=fields[8],
                    dir_conf=float(fields[9]),
                )
            )
        except ValueError as exc:
            raise LogFormatError(f"line {lineno}: {exc}") from exc
    return rows


def format_tracking_csv(rows: Iterable[TrackRow]) -> str:
    """Tracking CSV as a string (convenience for deterministic-output checks)."""
    buf = io.StringIO()
    write_tracking_csv(rows, buf)
    return buf.getvalue()
