"""Dual-modality (RGB/IR) post-detection pipeline.

Decision-layer fusion of per-modality detections, IoU-based multi-object
tracking with bounded gap tolerance, and multi-cue direction estimation
(area trend, centroid velocity, scale variation, sparse grid flow), plus a
synthetic-scenario oracle and an evaluation harness.
"""

from .detio import DetectionRecord, FrameDetections, TrackRow
from .direction import DirectionConfig, DirectionEstimate, DirectionEstimator
from .fusion import FusedDetection, FusionConfig
from .geometry import BBox, FrameDims, LetterboxTransform
from .pipeline import PipelineConfig, RunResult, run_pipeline
from .tracker import IouTracker, TrackerConfig

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "DetectionRecord",
    "DirectionConfig",
    "DirectionEstimate",
    "DirectionEstimator",
    "FrameDetections",
    "FrameDims",
    "FusedDetection",
    "FusionConfig",
    "IouTracker",
    "LetterboxTransform",
    "PipelineConfig",
    "RunResult",
    "TrackRow",
    "TrackerConfig",
    "run_pipeline",
    "__version__",
]
