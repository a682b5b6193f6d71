"""Target-visibility verdict from per-level score statistics.

A level flags the target as visible when its sparsity ratio max/(mean+eps)
and its population standard deviation both clear their thresholds: a
prominent peak over a spatially sparse distribution. The verdict takes the
coarsest passing level, where the anchor lives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pyramid import FusedPyramid


class EmptyGridError(ValueError):
    """A score grid with no tiles has no statistics."""


@dataclass(frozen=True)
class VisibilityParams:
    w_r: float = 1.5
    w_sigma: float = 0.05
    epsilon: float = 1e-6
    # statistics are taken on fused scores (what the anchor uses); set False
    # to evaluate the raw grids instead.
    use_fused: bool = True

    def __post_init__(self):
        if not 0 < self.epsilon <= 1e-3:
            raise ValueError("epsilon must be a small positive guard (<= 1e-3)")
        if self.w_r <= 1.0:
            raise ValueError("w_r must exceed 1")
        if self.w_sigma <= 0.0:
            raise ValueError("w_sigma must be positive")


@dataclass(frozen=True)
class LevelStats:
    level: int
    mean: float
    std: float
    max: float
    ratio: float


@dataclass(frozen=True)
class VisibilityVerdict:
    visible: bool
    deciding_level: int | None
    stats: tuple[LevelStats, ...]

    def __post_init__(self):
        if self.visible != (self.deciding_level is not None):
            raise ValueError("visible verdicts must carry a deciding level")


def level_stats(grid: np.ndarray, level: int, params: VisibilityParams) -> LevelStats:
    """Population mean/std, max, and sparsity ratio of one level's scores."""
    arr = np.asarray(grid, dtype=float)
    if arr.size == 0:
        raise EmptyGridError("cannot compute statistics of an empty grid")
    mean = float(arr.mean())
    std = float(arr.std())
    mx = float(arr.max())
    denom = mean + params.epsilon
    if denom > 0.0:
        ratio = mx / denom
    else:
        ratio = math.inf if mx > 0 else 0.0
    return LevelStats(level=level, mean=mean, std=std, max=mx, ratio=ratio)


def detect_from_matrices(mats: list[np.ndarray], params: VisibilityParams) -> VisibilityVerdict:
    """Verdict over explicit score matrices, finest first."""
    stats = tuple(level_stats(m, l, params) for l, m in enumerate(mats))
    deciding = None
    for s in stats:  # last passing level wins: ties toward coarse
        if s.ratio > params.w_r and s.std > params.w_sigma:
            deciding = s.level
    return VisibilityVerdict(visible=deciding is not None, deciding_level=deciding, stats=stats)


def detect_visibility(fp: FusedPyramid, params: VisibilityParams) -> VisibilityVerdict:
    """Verdict over a fused pyramid (fused scores by default, raw via params)."""
    mats = fp.fused if params.use_fused else [g.scores for g in fp.raw]
    return detect_from_matrices(list(mats), params)
