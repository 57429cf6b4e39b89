"""Command-line surface: pipeline, synth, eval, and bench subcommands.

The pipeline config file is plain ``key = value`` text (``#`` comments)
with full defaulting: an empty file (or none at all) runs every module at
its documented defaults. Recognized keys are the dotted field names of the
fusion/tracker/direction configs plus ``task`` and the input/output paths;
command-line flags override file values. ``SPECTRA_LOG_LEVEL`` controls
diagnostic verbosity (DEBUG/INFO/WARNING/ERROR).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import IO

from . import detio, evalm, synth
from .direction import DirectionConfig
from .fusion import FusionConfig
from .pipeline import PipelineConfig, PipelineError, run_bench, run_pipeline
from .tracker import TrackerConfig

log = logging.getLogger("spectra")

_TASK_ALIASES = {"drone": "drone_detection", "payload": "payload_identification"}


class ConfigError(ValueError):
    """Invalid pipeline config file."""


def parse_kv_file(stream: IO[str]) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        values[key] = value
    return values


def _cast_like(field: dataclasses.Field, raw: str, key: str):
    kind = field.type
    try:
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for '{key}': {exc}") from exc


def _build_section(cls, prefix: str, values: dict[str, str], **extra):
    kwargs = dict(extra)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key, raw in values.items():
        if not key.startswith(prefix + "."):
            continue
        name = key[len(prefix) + 1 :]
        if name not in fields:
            raise ConfigError(f"unknown config key: {key}")
        kwargs[name] = _cast_like(fields[name], raw, key)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


_PATH_KEYS = {"inputs.rgb_log", "inputs.ir_log", "inputs.frames_dir", "outputs.csv", "outputs.metrics"}


def build_pipeline_config(values: dict[str, str], args: argparse.Namespace) -> tuple[PipelineConfig, Path | None]:
    """Merge config-file values and CLI flags (flags win) into a PipelineConfig."""
    for key in values:
        if not (
            key == "task"
            or key in _PATH_KEYS
            or key.split(".", 1)[0] in ("fusion", "tracker", "direction")
        ):
            raise ConfigError(f"unknown config key: {key}")

    task = args.task or values.get("task", "drone_detection")
    task = _TASK_ALIASES.get(task, task)

    def _path(flag_value, key):
        if flag_value is not None:
            return Path(flag_value)
        return Path(values[key]) if key in values else None

    rgb_log = _path(args.rgb_log, "inputs.rgb_log")
    ir_log = _path(args.ir_log, "inputs.ir_log")
    frames_dir = _path(args.frames_dir, "inputs.frames_dir")
    out_csv = _path(args.out, "outputs.csv")
    metrics = _path(args.metrics, "outputs.metrics")

    mode = values.get("fusion.mode", "auto")
    fusion = None
    has_fusion_keys = any(k.startswith("fusion.") and k != "fusion.mode" for k in values)
    if mode != "auto" or has_fusion_keys:
        if mode == "auto":
            mode = "both" if (rgb_log and ir_log) else ("rgb_only" if rgb_log else "ir_only")
        fusion = _build_section(
            FusionConfig,
            "fusion",
            {k: v for k, v in values.items() if k != "fusion.mode"},
            mode=mode,
            **(
                {}
                if "fusion.cross_modality_nms" in values
                else {"cross_modality_nms": task == "payload_identification"}
            ),
        )

    tracker = _build_section(TrackerConfig, "tracker", values)
    direction = _build_section(DirectionConfig, "direction", values)
    cfg = PipelineConfig(
        task=task,
        fusion=fusion,
        tracker=tracker,
        direction=direction,
        rgb_log=rgb_log,
        ir_log=ir_log,
        frames_dir=frames_dir,
        out_csv=out_csv,
    )
    return cfg, metrics


def _cmd_pipeline(args: argparse.Namespace) -> int:
    values: dict[str, str] = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            values = parse_kv_file(f)
    cfg, metrics_path = build_pipeline_config(values, args)
    result = run_pipeline(cfg)
    summary = result.metadata
    summary_line = (
        f"frames={summary['frames']} tracks_created={summary['tracks_created']} "
        f"rows={summary['csv_rows']} mean_frame_ms={summary['mean_frame_ms']}"
    )
    if cfg.out_csv is None:
        sys.stdout.write(detio.format_tracking_csv(result.rows))
        print(summary_line, file=sys.stderr)
    else:
        print(summary_line)
    if metrics_path is not None:
        lines = [f"{k} = {v}" for k, v in _flatten(summary)]
        Path(metrics_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def _flatten(d: dict, prefix: str = ""):
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _flatten(v, key + ".")
        else:
            yield key, v


def _cmd_synth(args: argparse.Namespace) -> int:
    with open(args.spec, "r", encoding="utf-8") as f:
        spec = synth.parse_scenario(f)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    gt = None
    for modality, name in (("RGB", "rgb.log"), ("IR", "ir.log")):
        gt, frames = synth.generate(spec, modality=modality)
        with open(out_dir / name, "w", encoding="utf-8") as f:
            detio.write_detection_log(frames, f)
    with open(out_dir / "ground_truth.csv", "w", encoding="utf-8", newline="") as f:
        detio.write_tracking_csv(synth.ground_truth_rows(gt), f)

    n_frames = 0
    if args.frames:
        frames_dir = out_dir / "frames"
        frames_dir.mkdir(exist_ok=True)
        for fi, img in synth.render_scenario(spec, gt):
            detio.write_pgm(img, frames_dir / f"frame_{fi}.pgm")
            n_frames += 1
    print(f"scenario frames={spec.frame_count} objects={len(spec.objects)} "
          f"gt_boxes={len(gt)} pgm_frames={n_frames} out={out_dir}")
    return 0


def _load_predictions(path: Path):
    """Detection log or tracking CSV, sniffed by the first line."""
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline()
        f.seek(0)
        if first.strip() == detio.CSV_HEADER:
            rows = detio.parse_tracking_csv(f)
            return rows, True
        records = [r for fr in detio.parse_detection_log(f) for r in fr.records()]
        return records, False


def _cmd_eval(args: argparse.Namespace) -> int:
    preds, preds_have_ids = _load_predictions(Path(args.pred))
    gts, gts_have_ids = _load_predictions(Path(args.gt))

    operating = [p for p in preds if p.confidence >= args.conf]
    micro = evalm.match_counts(operating, gts, args.iou)
    p, r, f1 = evalm.precision_recall_f1(micro)
    report: list[tuple[str, object]] = [
        ("predictions", len(preds)),
        ("ground_truths", len(gts)),
        ("conf_threshold", args.conf),
        ("iou_threshold", args.iou),
        ("precision", f"{p:.6f}"),
        ("recall", f"{r:.6f}"),
        ("f1", f"{f1:.6f}"),
        ("ap@0.5", f"{evalm.average_precision(preds, gts, 0.5):.6f}"),
        ("map@0.5:0.95", f"{evalm.map_range(preds, gts):.6f}"),
    ]
    for cls, counts in evalm.per_class_counts(operating, gts, args.iou).items():
        cp, cr, cf1 = evalm.precision_recall_f1(counts)
        report.append((f"class.{cls}.precision", f"{cp:.6f}"))
        report.append((f"class.{cls}.recall", f"{cr:.6f}"))
        report.append((f"class.{cls}.f1", f"{cf1:.6f}"))
    if preds_have_ids and gts_have_ids:
        report.append(("id_switches", evalm.id_switches(preds, gts)))

    for key, value in report:
        print(f"{key} = {value}")
    if args.metrics:
        lines = ["metric,value"] + [f"{k},{v}" for k, v in report]
        Path(args.metrics).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    report = run_bench(
        Path(args.out_dir),
        objects=args.objects,
        frames=args.frames,
        repetitions=args.repetitions,
        seed=args.seed if args.seed is not None else 11,
        with_frames=not args.no_frames,
    )
    text = json.dumps(report, indent=2)
    print(text)
    if args.metrics:
        Path(args.metrics).write_text(text + "\n", encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectra",
        description="Dual-modality post-detection pipeline: fuse, track, estimate direction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", help="run ingest -> fuse -> track -> direction -> CSV")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--rgb-log", help="RGB detection log")
    p.add_argument("--ir-log", help="IR detection log")
    p.add_argument("--frames-dir", help="directory of <stem>_<frame>.pgm images (enables flow)")
    p.add_argument("--task", choices=("drone", "payload"))
    p.add_argument("--out", help="tracking CSV path (stdout if omitted)")
    p.add_argument("--metrics", help="write run summary to this path")
    p.set_defaults(func=_cmd_pipeline)

    s = sub.add_parser("synth", help="generate a synthetic scenario")
    s.add_argument("spec", help="scenario spec file")
    s.add_argument("--out-dir", required=True, help="output directory")
    s.add_argument("--frames", action="store_true", help="also render PGM frames")
    s.add_argument("--seed", type=int, help="override the spec seed")
    s.set_defaults(func=_cmd_synth)

    e = sub.add_parser("eval", help="score predictions against ground truth")
    e.add_argument("--pred", required=True, help="detection log or tracking CSV")
    e.add_argument("--gt", required=True, help="ground-truth tracking CSV (or detection log)")
    e.add_argument("--iou", type=float, default=0.5, help="matching IoU threshold")
    e.add_argument("--conf", type=float, default=0.25, help="operating-point confidence threshold")
    e.add_argument("--metrics", help="also write the report as CSV")
    e.set_defaults(func=_cmd_eval)

    b = sub.add_parser("bench", help="measure per-stage pipeline latency on a synthetic scenario")
    b.add_argument("--out-dir", required=True, help="scratch directory for scenario artifacts")
    b.add_argument("--objects", type=int, default=5)
    b.add_argument("--frames", type=int, default=1000)
    b.add_argument("--repetitions", type=int, default=1)
    b.add_argument("--seed", type=int)
    b.add_argument("--no-frames", action="store_true", help="skip rendering (disables flow)")
    b.add_argument("--metrics", help="write the report to this path")
    b.set_defaults(func=_cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("SPECTRA_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (
        ConfigError,
        PipelineError,
        synth.ScenarioError,
        detio.LogFormatError,
        detio.PgmFormatError,
        ValueError,
        OSError,
    ) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
