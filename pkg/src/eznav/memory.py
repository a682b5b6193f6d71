"""Keyframe memory: sliding window, weighted heading fusion, re-identification.

While the target is visible the navigator stores keyframes (salient-region
stats, world direction, robot pose). During occlusion the stored directions
are fused with saliency-derived, time-decayed weights; candidate sightings
are accepted only when they match stored descriptors and clear the score rule.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import DirectionEstimate, DirectionSource, Pose
from .visibility import VisibilityParams

log = logging.getLogger(__name__)

CANCELLATION_EPS = 1e-6


class NonMonotonicTimeError(ValueError):
    """Keyframe timestamps must strictly increase."""


class EmptyWindowError(ValueError):
    """Operation requires at least one stored keyframe."""


@dataclass(frozen=True)
class Keyframe:
    timestamp: float
    step: int
    direction: np.ndarray  # unit world vector toward the target
    robot_pose: Pose
    score: float  # fused score of the anchor tile
    local_mean: float  # mean over the anchor's 2x2 child set
    local_std: float  # population std over that child set
    level_std: float  # deciding-level population std (kept for analysis)
    sparsity_ratio: float  # deciding-level ratio at record time
    salient_descriptor: np.ndarray | None = None

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("keyframe direction must be unit-norm")
        object.__setattr__(self, "direction", d)
        if self.local_std < 0 or self.sparsity_ratio < 0:
            raise ValueError("local_std and sparsity_ratio must be nonnegative")


class KeyframeWindow:
    """FIFO sliding window of at most `capacity` keyframes, oldest first."""

    def __init__(self, capacity: int = 10):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.entries: list[Keyframe] = []

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def latest(self) -> Keyframe:
        if not self.entries:
            raise EmptyWindowError("window is empty")
        return self.entries[-1]

    def record(self, kf: Keyframe) -> "KeyframeWindow":
        if self.entries and kf.timestamp <= self.entries[-1].timestamp:
            raise NonMonotonicTimeError(
                f"keyframe at t={kf.timestamp} is not after t={self.entries[-1].timestamp}"
            )
        self.entries.append(kf)
        if len(self.entries) > self.capacity:
            self.entries.pop(0)
        return self


def record_keyframe(window: KeyframeWindow, kf: Keyframe) -> KeyframeWindow:
    return window.record(kf)


def fusion_weights(window: KeyframeWindow, now: float, decay: float) -> np.ndarray:
    """Normalized weights r_j * sigma_j * decay**age_j over the window entries.

    Falls back to pure time-decay weights if every saliency product vanishes,
    so the weights always sum to one for a non-empty window.
    """
    if len(window) == 0:
        raise EmptyWindowError("cannot weight an empty window")
    if not 0.0 < decay <= 1.0:
        raise ValueError("decay must lie in (0, 1]")
    ages = np.array([now - kf.timestamp for kf in window], dtype=float)
    decays = decay ** ages
    products = np.array([kf.sparsity_ratio * kf.local_std for kf in window], dtype=float)
    w = products * decays
    total = w.sum()
    if total <= 1e-12:
        w = decays
        total = w.sum()
    return w / total


def fuse_directions(window: KeyframeWindow, now: float, decay: float) -> DirectionEstimate:
    """Weighted average of stored headings, renormalized to a unit vector.

    Near-cancelling sums (norm < 1e-6) fall back to the most recent keyframe's
    direction; confidence is always the pre-normalization norm.
    """
    weights = fusion_weights(window, now, decay)
    dirs = np.stack([kf.direction for kf in window])
    summed = weights @ dirs
    norm = float(np.linalg.norm(summed))
    if norm < CANCELLATION_EPS:
        direction = window.latest.direction
    else:
        direction = summed / norm
    return DirectionEstimate(
        direction=direction, source=DirectionSource.KEYFRAME_FUSED, confidence=norm
    )


def reid_match(
    candidate_descriptor: np.ndarray | None,
    candidate_score: float,
    window: KeyframeWindow,
    vis_params: VisibilityParams,
    tau_reid: float,
) -> bool:
    """Accept a candidate sighting as the remembered target.

    candidate_score is the deciding-level sparsity ratio of the current
    observation; it must clear the visibility ratio threshold. The descriptor
    must reach cosine >= tau_reid against at least one stored keyframe. When
    descriptors are unavailable on either side the descriptor clause is
    vacuously true (logged once per call).
    """
    if len(window) == 0:
        raise EmptyWindowError("cannot re-identify against an empty window")
    if candidate_score <= vis_params.w_r:
        return False
    stored = [kf.salient_descriptor for kf in window if kf.salient_descriptor is not None]
    if candidate_descriptor is None or not stored:
        log.warning("re-identification without descriptors: accepting on score alone")
        return True
    cand = np.asarray(candidate_descriptor, dtype=float)
    best = max(float(np.dot(cand, d)) for d in stored)
    return best >= tau_reid
