"""Aligned multi-scale tile grids and bottom-up saliency fusion.

A pyramid partitions one single-resolution image into equal tiles at several
granularities (no rescaling). Adjacent levels are dyadically aligned: every
parent tile covers exactly a 2x2 block of children, so attribution from fine
to coarse is unique. Fusion propagates localized score contrast upward via a
variance-gated residual update and selects a coarse anchor tile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class LayoutError(ValueError):
    """Base class for tile-layout validation failures."""


class NonDyadicError(LayoutError):
    """Adjacent levels are not related by an exact factor of two."""


class IndivisibleError(LayoutError):
    """Image dimensions are not divisible by the finest grid."""


class ShapeMismatchError(ValueError):
    """Score matrices do not match the expected parent/child shapes."""


@dataclass(frozen=True)
class GridShape:
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"grid shape must be positive, got {self.rows}x{self.cols}")

    @property
    def ntiles(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class PyramidLayout:
    """Level dimensions (finest first) plus the pixel size they partition."""

    levels: tuple[GridShape, ...]
    image_width: int
    image_height: int

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(
            lv if isinstance(lv, GridShape) else GridShape(*lv) for lv in self.levels
        ))

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    def tile_size(self, level: int) -> tuple[float, float]:
        """Pixel (width, height) of one tile at `level`."""
        shape = self.levels[level]
        return self.image_width / shape.cols, self.image_height / shape.rows

    def tile_center(self, level: int, row: int, col: int) -> tuple[float, float]:
        """Pixel coordinates of a tile's center."""
        tw, th = self.tile_size(level)
        return (col + 0.5) * tw, (row + 0.5) * th


DEFAULT_LAYOUT_LEVELS = ((8, 12), (4, 6), (2, 3))


def default_layout(image_width: int = 960, image_height: int = 480) -> PyramidLayout:
    return PyramidLayout(
        levels=tuple(GridShape(*lv) for lv in DEFAULT_LAYOUT_LEVELS),
        image_width=image_width,
        image_height=image_height,
    )


def validate_layout(layout: PyramidLayout) -> None:
    """Raise NonDyadicError / IndivisibleError unless the layout is well formed."""
    if layout.num_levels < 2:
        raise LayoutError("a pyramid needs at least two levels")
    for l in range(layout.num_levels - 1):
        fine, coarse = layout.levels[l], layout.levels[l + 1]
        if fine.rows != 2 * coarse.rows or fine.cols != 2 * coarse.cols:
            raise NonDyadicError(
                f"level {l} is {fine.rows}x{fine.cols} but level {l + 1} is "
                f"{coarse.rows}x{coarse.cols}; expected an exact 2x relation"
            )
    finest = layout.levels[0]
    if layout.image_width % finest.cols or layout.image_height % finest.rows:
        raise IndivisibleError(
            f"image {layout.image_width}x{layout.image_height} is not divisible "
            f"by the finest grid {finest.rows}x{finest.cols}"
        )
    if layout.image_width <= 0 or layout.image_height <= 0:
        raise LayoutError("image dimensions must be positive")


@dataclass
class ScoreGrid:
    """Per-tile scores for one level, with optional unit-norm tile descriptors."""

    shape: GridShape
    scores: np.ndarray
    descriptors: np.ndarray | None = None

    def validate(self) -> None:
        if self.scores.shape != (self.shape.rows, self.shape.cols):
            raise ShapeMismatchError(
                f"scores shape {self.scores.shape} != {(self.shape.rows, self.shape.cols)}"
            )
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must all be finite")
        if self.descriptors is not None:
            if self.descriptors.shape[:2] != (self.shape.rows, self.shape.cols):
                raise ShapeMismatchError("one descriptor per tile required")
            norms = np.linalg.norm(self.descriptors, axis=-1)
            if not np.allclose(norms, 1.0, atol=1e-6):
                raise ValueError("descriptors must be unit-norm within 1e-6")


@dataclass(frozen=True)
class FusionParams:
    """Residual-update parameters for the bottom-up fusion steps.

    base > 1 is the amplification base; the per-parent gain is
    base ** clip(sigma, sigma_clip_lo, sigma_clip_hi) where sigma is the
    population standard deviation of the 2x2 child set. top_k_per_step lists,
    finest step first, how many of the four children each step sums.
    """

    base: float = 1.5
    sigma_clip_lo: float = 0.0
    sigma_clip_hi: float = 1.0
    top_k_per_step: tuple[int, ...] = (2, 1)
    # sigma for later steps is taken from the already-fused child matrix; set
    # False to measure spread on the raw child scores instead.
    sigma_from_fused: bool = True
    # False forces the gain to 1 everywhere (keeps the residual structure but
    # removes variance-driven amplification).
    amplify: bool = True

    def __post_init__(self):
        if self.base <= 1.0:
            raise ValueError("base must be > 1")
        if self.sigma_clip_lo >= self.sigma_clip_hi:
            raise ValueError("sigma_clip_lo must be < sigma_clip_hi")
        for k in self.top_k_per_step:
            if not 1 <= k <= 4:
                raise ValueError("top-k must be within [1, 4] (child sets are 2x2)")


@dataclass
class FusedPyramid:
    """Raw grids plus per-level fused score matrices and the coarse anchor."""

    layout: PyramidLayout
    raw: list[ScoreGrid]
    fused: list[np.ndarray]
    anchor: tuple[int, int]

    def anchor_trail(self) -> list[tuple[int, int]]:
        """Tile indices from the coarse anchor down to the finest level.

        Each descent picks the fused-argmax among the current tile's 2x2
        children (row-major first on ties).
        """
        trail = [self.anchor]
        for level in range(self.layout.num_levels - 1, 0, -1):
            kids = child_indices(self.layout, level, trail[-1])
            vals = [self.fused[level - 1][r, c] for r, c in kids]
            trail.append(kids[int(np.argmax(vals))])
        return trail

    def anchor_descriptor(self) -> np.ndarray | None:
        """Descriptor of the finest tile under the anchor, if descriptors exist."""
        if self.raw[0].descriptors is None:
            return None
        r, c = self.anchor_trail()[-1]
        return self.raw[0].descriptors[r, c]


def child_indices(layout: PyramidLayout, level: int, tile: tuple[int, int]) -> list[tuple[int, int]]:
    """Row-major indices of the 2x2 block at level-1 covered by `tile` at `level`."""
    if not 1 <= level < layout.num_levels:
        raise IndexError(f"level {level} has no children or does not exist")
    r, c = tile
    shape = layout.levels[level]
    if not (0 <= r < shape.rows and 0 <= c < shape.cols):
        raise IndexError(f"tile {tile} out of range for level {level} ({shape.rows}x{shape.cols})")
    return [(2 * r, 2 * c), (2 * r, 2 * c + 1), (2 * r + 1, 2 * c), (2 * r + 1, 2 * c + 1)]


def _child_blocks(child_scores: np.ndarray, parent_shape: tuple[int, int]) -> np.ndarray:
    """View child matrix as (rows, cols, 4) per-parent blocks in row-major order."""
    rows, cols = parent_shape
    return (
        child_scores.reshape(rows, 2, cols, 2)
        .transpose(0, 2, 1, 3)
        .reshape(rows, cols, 4)
    )


def fuse_step(
    parent_scores: np.ndarray,
    child_scores: np.ndarray,
    params: FusionParams,
    k: int,
    sigma_scores: np.ndarray | None = None,
) -> np.ndarray:
    """One residual update: parent + base**sigma_hat * (sum of k best children).

    sigma is the population standard deviation of each parent's 2x2 child set,
    taken from `sigma_scores` when given (defaults to `child_scores`). The
    result is order-free: permuting children leaves every parent unchanged.
    """
    if not 1 <= k <= 4:
        raise ValueError("k must be within [1, 4]")
    rows, cols = parent_scores.shape
    if child_scores.shape != (2 * rows, 2 * cols):
        raise ShapeMismatchError(
            f"child shape {child_scores.shape} is not 2x the parent shape {parent_scores.shape}"
        )
    blocks = _child_blocks(np.asarray(child_scores, dtype=float), (rows, cols))
    sig_src = blocks if sigma_scores is None else _child_blocks(
        np.asarray(sigma_scores, dtype=float), (rows, cols)
    )
    sigma = sig_src.std(axis=2)
    sigma_hat = np.clip(sigma, params.sigma_clip_lo, params.sigma_clip_hi)
    beta = params.base ** sigma_hat if params.amplify else np.ones_like(sigma_hat)
    top_sum = np.sort(blocks, axis=2)[:, :, 4 - k:].sum(axis=2)
    return np.asarray(parent_scores, dtype=float) + beta * top_sum


def fuse_pyramid(raw: list[ScoreGrid], layout: PyramidLayout, params: FusionParams) -> FusedPyramid:
    """Bottom-up fusion across all levels; anchor = coarse fused argmax."""
    validate_layout(layout)
    if len(raw) != layout.num_levels:
        raise ShapeMismatchError(f"need {layout.num_levels} score grids, got {len(raw)}")
    for grid, shape in zip(raw, layout.levels):
        if grid.scores.shape != (shape.rows, shape.cols):
            raise ShapeMismatchError(
                f"grid shape {grid.scores.shape} does not match layout level {shape.rows}x{shape.cols}"
            )
    steps = layout.num_levels - 1
    top_k = params.top_k_per_step
    if len(top_k) < steps:
        # repeat the last k for deeper pyramids than the default three levels
        top_k = top_k + (top_k[-1],) * (steps - len(top_k))

    fused: list[np.ndarray] = [np.array(raw[0].scores, dtype=float)]
    for step in range(steps):
        child_fused = fused[step]
        sigma_src = None if params.sigma_from_fused else np.asarray(raw[step].scores, dtype=float)
        fused.append(
            fuse_step(raw[step + 1].scores, child_fused, params, top_k[step], sigma_scores=sigma_src)
        )
    coarse = fused[-1]
    flat = int(np.argmax(coarse))  # first-in-row-major on ties
    anchor = (flat // coarse.shape[1], flat % coarse.shape[1])
    return FusedPyramid(layout=layout, raw=list(raw), fused=fused, anchor=anchor)


def anchor_pixel(fp: FusedPyramid, refine: bool = False) -> tuple[float, float]:
    """Center pixel of the anchor tile.

    refine=False returns the coarse anchor's center. refine=True descends the
    fused-argmax trail to the finest level and returns that tile's center,
    trading the coarse sector quantization for finest-tile resolution.
    """
    if refine:
        r, c = fp.anchor_trail()[-1]
        return fp.layout.tile_center(0, r, c)
    r, c = fp.anchor
    return fp.layout.tile_center(fp.layout.num_levels - 1, r, c)
