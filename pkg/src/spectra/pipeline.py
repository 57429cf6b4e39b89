"""End-to-end pipeline: ingest logs -> decision layer -> tracker -> direction -> CSV.

Frame fusion runs in a producer thread ahead of tracking through a bounded
queue; tracking is strictly sequential (single-writer state); direction
estimators fan out per track and join in ascending track-id order before
CSV rows are emitted, so identical inputs and config produce byte-identical
CSV output. The CSV is written only after the whole run succeeds.
"""

from __future__ import annotations

import json
import logging
import math
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from . import detio, synth
from .direction import DirectionConfig, DirectionEstimator
from .fusion import FusionConfig, classify_payload_or, fuse_decision_layer
from .geometry import FrameDims
from .modality import TASKS, resolve_policy
from .tracker import IouTracker, TrackerConfig

log = logging.getLogger(__name__)

_QUEUE_SIZE = 64


class PipelineError(RuntimeError):
    """Configuration or input error that aborts a run before output is written."""


@dataclass
class PipelineConfig:
    task: str = "drone_detection"
    fusion: FusionConfig | None = None  # None: built per task with mode inferred from logs
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    direction: DirectionConfig = field(default_factory=DirectionConfig)
    rgb_log: Path | None = None
    ir_log: Path | None = None
    frames_dir: Path | None = None
    out_csv: Path | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise PipelineError(f"unknown task: {self.task!r}")


@dataclass
class StageStats:
    """Per-frame wall times of one stage, in seconds."""

    samples: list[float] = field(default_factory=list)

    def add(self, seconds: float) -> None:
        self.samples.append(seconds)

    @property
    def mean_ms(self) -> float:
        return 1000.0 * sum(self.samples) / len(self.samples) if self.samples else 0.0

    @property
    def p95_ms(self) -> float:
        if not self.samples:
            return 0.0
        ordered = sorted(self.samples)
        return 1000.0 * ordered[min(len(ordered) - 1, math.ceil(0.95 * len(ordered)) - 1)]


#: Stages timed per frame; output writing is a single shot and is amortized.
PER_FRAME_STAGES = ("fusion", "tracking", "direction")


@dataclass
class RunResult:
    frames: int
    tracks_created: int
    rows: list[detio.TrackRow]
    metadata: dict
    stages: dict[str, StageStats]
    io_seconds: float = 0.0

    @property
    def mean_frame_ms(self) -> float:
        per_frame = sum(self.stages[s].mean_ms for s in PER_FRAME_STAGES)
        return per_frame + (1000.0 * self.io_seconds / self.frames if self.frames else 0.0)


def _load_log(path: Path) -> dict[int, detio.FrameDetections]:
    with open(path, "r", encoding="utf-8") as f:
        return {fr.frame_index: fr for fr in detio.parse_detection_log(f)}


def _fused_stream(
    frame_indices: range,
    rgb_frames: dict | None,
    ir_frames: dict | None,
    fusion_cfg: FusionConfig,
    policy,
    fusion_stats: StageStats,
) -> Iterator[tuple[int, list]]:
    """Fuse frames in a producer thread, bounded queue ahead of the consumer."""
    q: queue.Queue = queue.Queue(maxsize=_QUEUE_SIZE)

    def merged(f: int) -> detio.FrameDetections:
        rgb = ir = None
        if rgb_frames is not None:
            got = rgb_frames.get(f)
            rgb = got.rgb if got is not None and got.rgb is not None else ()
        if ir_frames is not None:
            got = ir_frames.get(f)
            ir = got.ir if got is not None and got.ir is not None else ()
        return detio.FrameDetections(f, rgb=rgb, ir=ir)

    def producer():
        try:
            for f in frame_indices:
                t0 = time.perf_counter()
                fused = fuse_decision_layer(merged(f), fusion_cfg, policy)
                fusion_stats.add(time.perf_counter() - t0)
                q.put((f, fused))
            q.put(("done", None))
        except BaseException as exc:  # forwarded to the consumer
            q.put(("error", exc))

    threading.Thread(target=producer, name="fusion", daemon=True).start()
    while True:
        kind_or_frame, payload = q.get()
        if kind_or_frame == "done":
            return
        if kind_or_frame == "error":
            raise payload
        yield kind_or_frame, payload


def run_pipeline(cfg: PipelineConfig) -> RunResult:
    """Run the post-detection pipeline over the configured logs.

    Missing log files abort the run before any output is written; a missing
    frames directory only disables the flow cue (with a warning).
    """
    if cfg.rgb_log is None and cfg.ir_log is None:
        raise PipelineError("at least one of rgb_log/ir_log is required")
    for name, path in (("rgb_log", cfg.rgb_log), ("ir_log", cfg.ir_log)):
        if path is not None and not Path(path).is_file():
            raise PipelineError(f"{name} not found: {path}")
    frames_dir = cfg.frames_dir
    if frames_dir is not None and not Path(frames_dir).is_dir():
        log.warning("frames dir missing, flow cue disabled: %s", frames_dir)
        frames_dir = None

    rgb_frames = _load_log(Path(cfg.rgb_log)) if cfg.rgb_log is not None else None
    ir_frames = _load_log(Path(cfg.ir_log)) if cfg.ir_log is not None else None

    available = set()
    if rgb_frames is not None:
        available.add("RGB")
    if ir_frames is not None:
        available.add("IR")
    policy = resolve_policy(cfg.task, available)

    fusion_cfg = cfg.fusion
    if fusion_cfg is None:
        mode = "both" if len(available) == 2 else ("rgb_only" if "RGB" in available else "ir_only")
        fusion_cfg = FusionConfig.for_task(cfg.task, mode=mode)

    last = -1
    for frames in (rgb_frames, ir_frames):
        if frames:
            last = max(last, max(frames))
    frame_indices = range(last + 1)

    stages = {name: StageStats() for name in PER_FRAME_STAGES}
    tracker = IouTracker(cfg.tracker)
    estimators: dict[int, DirectionEstimator] = {}
    rows: list[detio.TrackRow] = []
    harmful_frames = 0
    prev_img = None
    prev_img_index = -1

    for f, fused in _fused_stream(
        frame_indices, rgb_frames, ir_frames, fusion_cfg, policy, stages["fusion"]
    ):
        t0 = time.perf_counter()
        snapshots = tracker.step(f, fused)
        stages["tracking"].add(time.perf_counter() - t0)

        t0 = time.perf_counter()
        cur_img = None
        if frames_dir is not None:
            img_path = detio.frame_image_path(frames_dir, f)
            if img_path is not None:
                cur_img = detio.read_pgm(img_path)
        flow_prev = prev_img if prev_img_index == f - 1 else None
        live_ids = {t.id for t in tracker.live_tracks()}
        for tid in [tid for tid in estimators if tid not in live_ids]:
            del estimators[tid]
        for snap in snapshots:  # ascending track id: deterministic join order
            est = estimators.get(snap.track_id)
            if est is None:
                est = estimators[snap.track_id] = DirectionEstimator(cfg.direction)
            smoothed = est.update(f, snap.bbox, flow_prev, cur_img)
            rows.append(
                detio.TrackRow(
                    frame_index=f,
                    track_id=snap.track_id,
                    class_name=snap.class_name,
                    bbox=snap.bbox,
                    confidence=snap.confidence,
                    direction=smoothed.planar_label,
                    dir_conf=smoothed.confidence,
                )
            )
        stages["direction"].add(time.perf_counter() - t0)
        if cur_img is not None:
            prev_img, prev_img_index = cur_img, f

        if cfg.task == "payload_identification":
            if classify_payload_or(fused, fusion_cfg.harmful_conf_threshold) == "harmful":
                harmful_frames += 1

    t0 = time.perf_counter()
    if cfg.out_csv is not None:
        with open(cfg.out_csv, "w", encoding="utf-8", newline="") as out:
            detio.write_tracking_csv(rows, out)
    io_seconds = time.perf_counter() - t0

    result = RunResult(
        frames=len(frame_indices),
        tracks_created=tracker.tracks_created,
        rows=rows,
        metadata={},
        stages=stages,
        io_seconds=io_seconds,
    )
    metadata = {
        "task": cfg.task,
        "mode": fusion_cfg.mode,
        "available_modalities": sorted(available),
        "surrogate_policy": dict(sorted(policy.actions.items())),
        "frames": len(frame_indices),
        "tracks_created": tracker.tracks_created,
        "csv_rows": len(rows),
        "mean_frame_ms": round(result.mean_frame_ms, 3),
        "stage_ms": {name: round(s.mean_ms, 3) for name, s in stages.items()},
    }
    if cfg.task == "payload_identification":
        metadata["harmful_frames"] = harmful_frames
    result.metadata = metadata
    if cfg.out_csv is not None:
        meta_path = Path(cfg.out_csv).parent / (Path(cfg.out_csv).name + ".meta.json")
        meta_path.write_text(json.dumps(metadata, indent=2) + "\n", encoding="utf-8")
    return result


def bench_scenario(objects: int, frames: int, seed: int = 11) -> synth.ScenarioSpec:
    """A renderable N-object drift scenario sized for the native 320x256 frame.

    Objects sit on a grid (columns 28 px apart, rows 56 px) and drift east
    in parallel at the same speed, so boxes never overlap and tracks never
    cross; total drift is capped at 50 px to stay in bounds.
    """
    if objects > 24:
        raise ValueError(f"bench grid holds at most 24 objects, got {objects}")
    dims = FrameDims(320, 256)
    vx = min(0.05, 50.0 / frames) if frames else 0.0
    specs = []
    for i in range(objects):
        specs.append(
            synth.ObjectSpec(
                class_name="drone",
                start=(40.0 + 28.0 * (i % 8), 48.0 + 56.0 * (i // 8)),
                velocity=(vx, 0.0),
                start_area=576.0,
            )
        )
    return synth.ScenarioSpec(frame_count=frames, dims=dims, objects=tuple(specs), seed=seed)


def run_bench(
    out_dir: Path,
    objects: int = 5,
    frames: int = 1000,
    repetitions: int = 1,
    seed: int = 11,
    with_frames: bool = True,
) -> dict:
    """Generate a scenario, run the full pipeline, and report per-stage latencies.

    Returns a report dict with per-stage mean/p95 milliseconds averaged
    over repetitions; artifacts (log, frames) are written under out_dir.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = bench_scenario(objects, frames, seed)
    gt, det_frames = synth.generate(spec, modality="RGB")
    log_path = out_dir / "bench_rgb.log"
    with open(log_path, "w", encoding="utf-8") as f:
        detio.write_detection_log(det_frames, f)
    frames_dir = None
    if with_frames:
        frames_dir = out_dir / "frames"
        frames_dir.mkdir(exist_ok=True)
        for fi, img in synth.render_scenario(spec, gt):
            detio.write_pgm(img, frames_dir / f"bench_{fi}.pgm")

    reps = []
    for rep in range(repetitions):
        cfg = PipelineConfig(
            task="drone_detection",
            rgb_log=log_path,
            frames_dir=frames_dir,
            out_csv=out_dir / f"bench_rep{rep}.csv",
        )
        reps.append(run_pipeline(cfg))

    def _agg(attr: str, stage: str) -> float:
        return sum(getattr(r.stages[stage], attr) for r in reps) / len(reps)

    report = {
        "objects": objects,
        "frames": frames,
        "repetitions": repetitions,
        "mean_frame_ms": round(sum(r.mean_frame_ms for r in reps) / len(reps), 3),
        "io_total_ms": round(1000.0 * sum(r.io_seconds for r in reps) / len(reps), 3),
        "stages": {
            name: {"mean_ms": round(_agg("mean_ms", name), 3), "p95_ms": round(_agg("p95_ms", name), 3)}
            for name in PER_FRAME_STAGES
        },
    }
    return report
