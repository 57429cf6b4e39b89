"""Surrogate-input generation and routing policy for missing modalities.

When one sensor stream is absent, the dual-backbone contract is kept by
feeding the idle backbone a synthesized stand-in: a white placeholder for
the drone-detection task, or a content-derived surrogate (grayscale of the
RGB frame, or the IR frame replicated to a pseudo-RGB triplet) for payload
identification. The core pipeline consumes detection logs, so it records
the resolved policy in run metadata; images are only generated when an
external detector adapter asks for them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detio import MODALITIES, ensure_gray
from .geometry import FrameDims

TASKS = ("drone_detection", "payload_identification")

# Surrogate actions, one per missing modality.
WHITE_PLACEHOLDER = "white_placeholder"
GRAY_SURROGATE = "gray_surrogate"
TRIPLET_REPLICATE = "triplet_replicate"

# ITU-R BT.601 luma weights, pinned for bit-exact round trips.
_LUMA_R = 0.299
_LUMA_G = 0.587
_LUMA_B = 0.114


def ensure_rgb(img: np.ndarray) -> np.ndarray:
    """Validate and return an 8-bit (height, width, 3) RGB image array."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"RGB image must have shape (h, w, 3), got {img.shape}")
    if img.dtype != np.uint8:
        raise ValueError(f"RGB image must be uint8, got {img.dtype}")
    return img


def white_placeholder(dims: FrameDims) -> np.ndarray:
    """All-white RGB image (255, 255, 255) used as a stand-in input."""
    return np.full((dims.height, dims.width, 3), 255, dtype=np.uint8)


def replicate_gray_to_triplet(gray: np.ndarray) -> np.ndarray:
    """Replicate a grayscale image across three channels (pseudo-RGB triplet)."""
    gray = ensure_gray(gray)
    return np.repeat(gray[:, :, np.newaxis], 3, axis=2)


def rgb_to_gray_surrogate(img: np.ndarray) -> np.ndarray:
    """BT.601 luma of an RGB image, rounded half-up, as a surrogate IR input."""
    img = ensure_rgb(img)
    luma = (
        _LUMA_R * img[:, :, 0].astype(np.float64)
        + _LUMA_G * img[:, :, 1].astype(np.float64)
        + _LUMA_B * img[:, :, 2].astype(np.float64)
    )
    return np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class SurrogatePolicy:
    """Resolved stand-in actions: one action per missing modality, none for present ones."""

    task: str
    available: frozenset[str]
    actions: dict[str, str]


def resolve_policy(task: str, available: frozenset[str] | set[str]) -> SurrogatePolicy:
    """Pick the stand-in action for each missing modality.

    Drone detection feeds the missing side a white placeholder. Payload
    identification derives the stand-in from the present stream: a missing
    IR input gets a grayscale version of the RGB frame, a missing RGB input
    gets the IR frame replicated into a triplet.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task: {task!r}")
    available = frozenset(available)
    if not available:
        raise ValueError("at least one modality must be available")
    unknown = available - set(MODALITIES)
    if unknown:
        raise ValueError(f"unknown modalities: {sorted(unknown)}")

    actions: dict[str, str] = {}
    for missing in MODALITIES:
        if missing in available:
            continue
        if task == "drone_detection":
            actions[missing] = WHITE_PLACEHOLDER
        elif missing == "IR":
            actions[missing] = GRAY_SURROGATE
        else:
            actions[missing] = TRIPLET_REPLICATE
    return SurrogatePolicy(task=task, available=available, actions=actions)
