"""Perception pipeline: score grids -> fused pyramid -> verdict -> direction.

Ablation switches select degraded variants of the same pipeline:
  multi_scale=False        score a single coarse partition, raw argmax
  hierarchical_fusion=False keep all levels but skip the residual updates
  saliency_amplification=False fuse with the variance gain pinned to 1
  visibility_detection=False report every frame as visible
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraModel, Pose, pixel_to_ray, ray_to_world
from .navigator import AnchorObservation, Perception
from .pyramid import (
    FusedPyramid,
    FusionParams,
    GridShape,
    PyramidLayout,
    ScoreGrid,
    anchor_pixel,
    child_indices,
    fuse_pyramid,
)
from .visibility import VisibilityParams, VisibilityVerdict, detect_from_matrices, level_stats


@dataclass(frozen=True)
class AblationFlags:
    multi_scale: bool = True
    saliency_amplification: bool = True
    hierarchical_fusion: bool = True
    visibility_detection: bool = True
    direction_fusion: bool = True
    active_search: bool = True

    @classmethod
    def full(cls) -> "AblationFlags":
        return cls()

    def disable(self, name: str) -> "AblationFlags":
        if not hasattr(self, name):
            raise ValueError(f"unknown ablation flag: {name}")
        kwargs = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kwargs[name] = False
        return AblationFlags(**kwargs)


def ablated_layout(layout: PyramidLayout, flags: AblationFlags) -> PyramidLayout:
    """Without the multi-scale pyramid only the coarse partition remains."""
    if flags.multi_scale:
        return layout
    return PyramidLayout(levels=(layout.levels[-1],),
                         image_width=layout.image_width,
                         image_height=layout.image_height)


def _raw_pyramid(grids: list[ScoreGrid], layout: PyramidLayout) -> FusedPyramid:
    fused = [np.array(g.scores, dtype=float) for g in grids]
    coarse = fused[-1]
    flat = int(np.argmax(coarse))
    anchor = (flat // coarse.shape[1], flat % coarse.shape[1])
    return FusedPyramid(layout=layout, raw=list(grids), fused=fused, anchor=anchor)


def _anchor_observation(fp: FusedPyramid, verdict: VisibilityVerdict,
                        params: VisibilityParams) -> AnchorObservation:
    n_levels = fp.layout.num_levels
    deciding = verdict.deciding_level if verdict.deciding_level is not None else n_levels - 1
    stats = verdict.stats[deciding]
    anchor_score = float(fp.fused[-1][fp.anchor])
    if n_levels >= 2:
        kids = child_indices(fp.layout, n_levels - 1, fp.anchor)
        local = np.array([fp.fused[n_levels - 2][r, c] for r, c in kids])
        local_mean = float(local.mean())
        local_std = float(local.std())
    else:
        local_mean = stats.mean
        local_std = stats.std
    return AnchorObservation(
        score=anchor_score,
        local_mean=local_mean,
        local_std=local_std,
        level_std=stats.std,
        ratio=stats.ratio,
        descriptor=fp.anchor_descriptor(),
    )


def perceive_grids(
    grids: list[ScoreGrid],
    layout: PyramidLayout,
    fusion_params: FusionParams,
    vis_params: VisibilityParams,
    cam: CameraModel,
    cam_pose: Pose,
    flags: AblationFlags = AblationFlags(),
    refine_anchor: bool = False,
) -> tuple[Perception, FusedPyramid]:
    """Run fusion, visibility, and direction estimation on rendered grids.

    `grids` must match `ablated_layout(layout, flags)`. Returns the Perception
    consumed by the navigator plus the fused pyramid for logging.
    """
    eff_layout = ablated_layout(layout, flags)
    if not flags.multi_scale or not flags.hierarchical_fusion:
        fp = _raw_pyramid(grids, eff_layout)
    else:
        params = fusion_params if flags.saliency_amplification else FusionParams(
            base=fusion_params.base,
            sigma_clip_lo=fusion_params.sigma_clip_lo,
            sigma_clip_hi=fusion_params.sigma_clip_hi,
            top_k_per_step=fusion_params.top_k_per_step,
            sigma_from_fused=fusion_params.sigma_from_fused,
            amplify=False,
        )
        fp = fuse_pyramid(grids, eff_layout, params)

    mats = fp.fused if vis_params.use_fused else [g.scores for g in fp.raw]
    verdict = detect_from_matrices(list(mats), vis_params)
    if not flags.visibility_detection:
        forced = len(mats) - 1
        verdict = VisibilityVerdict(visible=True, deciding_level=forced, stats=verdict.stats)

    u, v = anchor_pixel(fp, refine=refine_anchor)
    u = min(max(u, 0.0), cam.width - 1e-6)
    v = min(max(v, 0.0), cam.height - 1e-6)
    ray = pixel_to_ray(cam, (u, v))
    stats = verdict.stats[verdict.deciding_level] if verdict.deciding_level is not None else None
    live_dir = ray_to_world(cam_pose, ray, confidence=stats.ratio if stats else 0.0)
    anchor_obs = _anchor_observation(fp, verdict, vis_params)
    return Perception(verdict=verdict, live_dir=live_dir, anchor=anchor_obs), fp
