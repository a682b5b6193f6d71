"""Deterministic 2.5-D outdoor world: occluder boxes, ray casting, tile scorer.

The world is a bounded rectangle with axis-aligned occluder boxes of given
height and one target with horizontal/vertical extent. A synthetic scorer
draws background similarity noise per tile and adds target signal scaled by
geometric visibility, distance attenuation, and the covered fraction of each
tile, reproducing the regime where distant targets shrink to tiny projections
that only stand out at fine tile granularity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import CameraModel, Pose, camera_frame_point
from .mapping import RangeScan
from .pyramid import GridShape, PyramidLayout, ScoreGrid


@dataclass(frozen=True)
class Box:
    """Axis-aligned occluder: lower-left (x, y), footprint (w, h), height in meters."""

    x: float
    y: float
    w: float
    h: float
    height_m: float

    def contains(self, px: float, py: float) -> bool:
        return self.x <= px <= self.x + self.w and self.y <= py <= self.y + self.h


@dataclass(frozen=True)
class TargetSpec:
    position: np.ndarray  # world (x, y)
    extent: tuple[float, float]  # (width_m, height_m)

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))


@dataclass(frozen=True)
class WorldSpec:
    width: float
    height: float
    occluders: tuple[Box, ...]
    target: TargetSpec
    start_pose: tuple[float, float, float]  # (x, y, heading)

    def validate(self, min_start_distance: float = 0.0) -> None:
        sx, sy, _ = self.start_pose
        tx, ty = self.target.position
        if not (0 <= sx <= self.width and 0 <= sy <= self.height):
            raise ValueError("start pose outside world bounds")
        if not (0 <= tx <= self.width and 0 <= ty <= self.height):
            raise ValueError("target outside world bounds")
        for box in self.occluders:
            if box.contains(sx, sy):
                raise ValueError("start pose lies inside an occluder")
        if math.hypot(tx - sx, ty - sy) < min_start_distance:
            raise ValueError(
                f"start-target distance below the required {min_start_distance} m"
            )


@dataclass(frozen=True)
class ScorerParams:
    noise_mean: float = 0.2
    noise_std: float = 0.03
    signal_gain: float = 0.9
    distance_ref: float = 25.0
    descriptor_dim: int = 16
    rng_seed: int = 0

    def __post_init__(self):
        if self.noise_std < 0 or self.signal_gain < 0:
            raise ValueError("noise_std and signal_gain must be nonnegative")


class OcclusionKind(Enum):
    SHORT = "short"
    LONG = "long"


@dataclass(frozen=True)
class OcclusionEvent:
    t_start: float
    duration: float
    kind: OcclusionKind

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration


@dataclass(frozen=True)
class OcclusionScript:
    events: tuple[OcclusionEvent, ...] = ()
    # seconds of gradual signal decay before each cut: the target fades the
    # way a real one slips behind cover instead of vanishing between frames
    ramp_s: float = 2.0

    def __post_init__(self):
        ordered = tuple(sorted(self.events, key=lambda e: e.t_start))
        for a, b in zip(ordered, ordered[1:]):
            if b.t_start < a.t_end:
                raise ValueError("occlusion events must not overlap")
        object.__setattr__(self, "events", ordered)

    def active(self, t: float) -> bool:
        return any(e.t_start <= t < e.t_end for e in self.events)

    def weight(self, t: float) -> float:
        """Signal multiplier at time t: 0 inside an event, ramping down before it."""
        w = 1.0
        for e in self.events:
            if e.t_start <= t < e.t_end:
                return 0.0
            if self.ramp_s > 0 and e.t_start - self.ramp_s <= t < e.t_start:
                # quadratic ease-out: the target lingers faint before the cut,
                # so anchors and stored directions degrade before the verdict
                frac = (e.t_start - t) / self.ramp_s
                w = min(w, frac * frac)
        return w

    @property
    def label(self) -> str:
        kinds = {e.kind for e in self.events}
        if kinds == {OcclusionKind.SHORT}:
            return "short"
        if kinds == {OcclusionKind.LONG}:
            return "long"
        return "mixed" if kinds else "none"


def _ray_box_hits(ox: np.ndarray, oy: np.ndarray, dx: np.ndarray, dy: np.ndarray,
                  box: Box) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized slab test. Returns (t_enter, hit) for unit-length parameterization."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_dx = np.where(dx != 0.0, 1.0 / dx, np.inf)
        inv_dy = np.where(dy != 0.0, 1.0 / dy, np.inf)
        tx1 = (box.x - ox) * inv_dx
        tx2 = (box.x + box.w - ox) * inv_dx
        ty1 = (box.y - oy) * inv_dy
        ty2 = (box.y + box.h - oy) * inv_dy
    # degenerate axes: ray parallel to a slab only passes when origin is inside it
    para_x = dx == 0.0
    tx_lo = np.where(para_x, np.where((ox >= box.x) & (ox <= box.x + box.w), -np.inf, np.inf), np.minimum(tx1, tx2))
    tx_hi = np.where(para_x, np.where((ox >= box.x) & (ox <= box.x + box.w), np.inf, -np.inf), np.maximum(tx1, tx2))
    para_y = dy == 0.0
    ty_lo = np.where(para_y, np.where((oy >= box.y) & (oy <= box.y + box.h), -np.inf, np.inf), np.minimum(ty1, ty2))
    ty_hi = np.where(para_y, np.where((oy >= box.y) & (oy <= box.y + box.h), np.inf, -np.inf), np.maximum(ty1, ty2))
    t_enter = np.maximum(tx_lo, ty_lo)
    t_exit = np.minimum(tx_hi, ty_hi)
    hit = (t_enter <= t_exit) & (t_exit >= 0.0)
    return np.maximum(t_enter, 0.0), hit


def visibility_fraction(world: WorldSpec, camera_pos: tuple[float, float],
                        camera_height: float = 0.8, n_samples: int = 16) -> float:
    """Fraction of sample rays across the target's horizontal extent left unblocked.

    The target is modeled as a segment of length extent_w centered on its
    position, perpendicular to the line of sight. A box blocks a sample ray
    when it crosses the 2-D segment and its height reaches the interpolated
    sightline height (camera height up to the target's mid-height).
    """
    cx, cy = camera_pos
    tx, ty = world.target.position
    ext_w, ext_h = world.target.extent
    to_target = np.array([tx - cx, ty - cy])
    dist = np.linalg.norm(to_target)
    if dist < 1e-9:
        return 1.0
    u = to_target / dist
    perp = np.array([-u[1], u[0]])
    offsets = np.linspace(-0.5, 0.5, n_samples) * ext_w
    sx = tx + perp[0] * offsets
    sy = ty + perp[1] * offsets
    dx = sx - cx
    dy = sy - cy
    target_mid_h = ext_h / 2.0
    blocked = np.zeros(n_samples, dtype=bool)
    for box in world.occluders:
        t_enter, hit = _ray_box_hits(np.full(n_samples, cx), np.full(n_samples, cy), dx, dy, box)
        hit &= t_enter <= 1.0  # must cross before reaching the target sample
        sight_h = camera_height + t_enter * (target_mid_h - camera_height)
        blocked |= hit & (box.height_m >= sight_h)
    return float(np.count_nonzero(~blocked)) / n_samples


def range_scan(world: WorldSpec, robot: tuple[float, float, float], n_beams: int = 72,
               fov: float = 2.0 * math.pi, max_range: float = 20.0) -> RangeScan:
    """2-D ray casting against occluder boxes and the world boundary."""
    rx, ry, heading = robot
    bearings = -fov / 2.0 + fov * np.arange(n_beams) / n_beams
    angles = heading + bearings
    dx = np.cos(angles)
    dy = np.sin(angles)
    dist = np.full(n_beams, np.inf)
    for box in world.occluders:
        t_enter, hit = _ray_box_hits(np.full(n_beams, rx), np.full(n_beams, ry), dx, dy, box)
        dist = np.where(hit, np.minimum(dist, t_enter), dist)
    # world boundary walls
    bounds = Box(0.0, 0.0, world.width, world.height, height_m=math.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = np.where(dx > 0, (bounds.w - rx) / dx, np.where(dx < 0, -rx / dx, np.inf))
        ty = np.where(dy > 0, (bounds.h - ry) / dy, np.where(dy < 0, -ry / dy, np.inf))
    dist = np.minimum(dist, np.minimum(tx, ty))
    hit = dist <= max_range
    distances = np.where(hit, dist, max_range)
    return RangeScan(bearings=bearings, distances=distances, hit=hit, max_range=max_range)


TARGET_DESCRIPTOR_SEED = 1234567


def target_descriptor(dim: int) -> np.ndarray:
    """Fixed unit descriptor identifying the target across the whole run."""
    rng = np.random.default_rng(TARGET_DESCRIPTOR_SEED)
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def _tile_edges(n: int, total: float) -> np.ndarray:
    return np.linspace(0.0, total, n + 1)


def render_score_grid(
    world: WorldSpec,
    cam: CameraModel,
    pose: Pose,
    layout: PyramidLayout,
    params: ScorerParams,
    script_active: bool,
    rng: np.random.Generator,
    with_descriptors: bool = True,
    camera_height: float = 0.8,
    visibility_weight: float = 1.0,
) -> list[ScoreGrid]:
    """Synthetic per-tile similarity grids for the current viewpoint.

    Every tile draws background noise clipped to [0, 1]. When no scripted
    occlusion is active and the target is geometrically visible in front of
    the camera, its projected footprint adds signal_gain * visibility *
    min(1, distance_ref/distance) to each tile scaled by the fraction of that
    tile the footprint covers: fully covered tiles gain the full signal while
    a tiny projection in a large tile is diluted away. Projection-center tiles
    carry the target descriptor blended with noise by the visibility weight.
    visibility_weight multiplies the geometric visibility (scripted fade-outs).
    """
    grids: list[ScoreGrid] = []
    dim = params.descriptor_dim
    tdesc = target_descriptor(dim)

    # per-level noise draws happen first and in level order: the rng stream
    # only depends on the layout, never on visibility branching
    noise = []
    descs = []
    for shape in layout.levels:
        noise.append(np.clip(
            rng.normal(params.noise_mean, params.noise_std, size=(shape.rows, shape.cols)),
            0.0, 1.0,
        ))
        if with_descriptors:
            d = rng.normal(size=(shape.rows, shape.cols, dim))
            d /= np.linalg.norm(d, axis=-1, keepdims=True)
            descs.append(d)
        else:
            descs.append(None)

    rect = None
    signal = 0.0
    vis = 0.0
    if not script_active and params.signal_gain > 0.0 and visibility_weight > 0.0:
        vis = visibility_fraction(world, (pose.position[0], pose.position[1]),
                                  camera_height=camera_height) * visibility_weight
        if vis > 0.0:
            tx, ty = world.target.position
            ext_w, ext_h = world.target.extent
            center = np.array([tx, ty, ext_h / 2.0])
            pc = camera_frame_point(pose, center)
            if pc[2] > 0.5:
                depth = float(pc[2])
                u = cam.fx * pc[0] / depth + cam.cx
                v = cam.fy * pc[1] / depth + cam.cy
                half_w = cam.fx * (ext_w / 2.0) / depth
                half_h = cam.fy * (ext_h / 2.0) / depth
                u0, u1 = max(0.0, u - half_w), min(float(cam.width), u + half_w)
                v0, v1 = max(0.0, v - half_h), min(float(cam.height), v + half_h)
                if u1 > u0 and v1 > v0:
                    rect = (u0, v0, u1, v1, u, v)
                    distance = float(np.linalg.norm(center - pose.position))
                    signal = params.signal_gain * vis * min(1.0, params.distance_ref / distance)

    for li, shape in enumerate(layout.levels):
        scores = noise[li]
        desc = descs[li]
        if rect is not None and signal > 0.0:
            u0, v0, u1, v1, uc, vc = rect
            xe = _tile_edges(shape.cols, layout.image_width)
            ye = _tile_edges(shape.rows, layout.image_height)
            ow = np.clip(np.minimum(u1, xe[1:]) - np.maximum(u0, xe[:-1]), 0.0, None)
            oh = np.clip(np.minimum(v1, ye[1:]) - np.maximum(v0, ye[:-1]), 0.0, None)
            overlap = oh[:, None] * ow[None, :]
            tile_area = (layout.image_width / shape.cols) * (layout.image_height / shape.rows)
            scores = scores + signal * overlap / tile_area
            if desc is not None:
                tc = min(shape.cols - 1, max(0, int((u0 + u1) / 2.0 // (layout.image_width / shape.cols))))
                tr = min(shape.rows - 1, max(0, int((v0 + v1) / 2.0 // (layout.image_height / shape.rows))))
                blended = vis * tdesc + (1.0 - vis) * desc[tr, tc]
                desc = desc.copy()
                desc[tr, tc] = blended / np.linalg.norm(blended)
        grids.append(ScoreGrid(shape=shape, scores=scores, descriptors=desc))
    return grids
