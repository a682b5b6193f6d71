"""Occupancy grid mapping, frontier detection, and grid path planning."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import DirectionEstimate

UNKNOWN = 0
FREE = 1
OCCUPIED = 2

_SQRT2 = math.sqrt(2.0)
_EIGHT_CONN = np.ones((3, 3), dtype=bool)


class UnreachableError(ValueError):
    """No grid path exists between the requested cells."""


class NoFrontiersError(ValueError):
    """Frontier selection called with an empty candidate list."""


@dataclass
class RangeScan:
    """Beam bearings relative to the robot heading; distances capped at max_range."""

    bearings: np.ndarray
    distances: np.ndarray
    hit: np.ndarray  # True where the beam ended on an obstacle
    max_range: float


@dataclass
class OccupancyGrid:
    resolution: float
    origin: np.ndarray  # world (x, y) of the grid's lower-left corner
    cells: np.ndarray  # (rows, cols) uint8, rows indexed by y

    @classmethod
    def create(cls, width_m: float, height_m: float, resolution: float,
               origin: tuple[float, float] = (0.0, 0.0)) -> "OccupancyGrid":
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        rows = int(math.ceil(height_m / resolution))
        cols = int(math.ceil(width_m / resolution))
        return cls(
            resolution=resolution,
            origin=np.asarray(origin, dtype=float),
            cells=np.zeros((rows, cols), dtype=np.uint8),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        col = int(math.floor((x - self.origin[0]) / self.resolution))
        row = int(math.floor((y - self.origin[1]) / self.resolution))
        return row, col

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (
            self.origin[0] + (col + 0.5) * self.resolution,
            self.origin[1] + (row + 0.5) * self.resolution,
        )

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.cells.shape[0] and 0 <= col < self.cells.shape[1]


def update_occupancy(grid: OccupancyGrid, robot: tuple[float, float, float],
                     scan: RangeScan) -> None:
    """Ray-trace a scan into the grid.

    Cells before each hit become Free and the hit cell Occupied. Within one
    call Occupied wins over Free (all Free marks are applied first), so beam
    order never matters; across calls cells are freely rewritable.
    """
    rx, ry, heading = robot
    step = grid.resolution * 0.5
    angles = heading + scan.bearings
    n_steps = int(math.ceil(scan.max_range / step)) + 1
    ts = np.arange(n_steps + 1) * step  # (S,)
    cos_a = np.cos(angles)[:, None]
    sin_a = np.sin(angles)[:, None]
    xs = rx + cos_a * ts[None, :]
    ys = ry + sin_a * ts[None, :]
    free_mask = ts[None, :] < scan.distances[:, None]

    cols = np.floor((xs - grid.origin[0]) / grid.resolution).astype(np.int64)
    rows = np.floor((ys - grid.origin[1]) / grid.resolution).astype(np.int64)
    inside = (
        (rows >= 0) & (rows < grid.cells.shape[0]) & (cols >= 0) & (cols < grid.cells.shape[1])
    )
    keep = free_mask & inside
    grid.cells[rows[keep], cols[keep]] = FREE

    if scan.hit.any():
        # nudge past the surface so the sample lands inside the occupied cell
        d_hit = scan.distances[scan.hit] + 0.4 * grid.resolution
        hx = rx + np.cos(angles[scan.hit]) * d_hit
        hy = ry + np.sin(angles[scan.hit]) * d_hit
        hc = np.floor((hx - grid.origin[0]) / grid.resolution).astype(np.int64)
        hr = np.floor((hy - grid.origin[1]) / grid.resolution).astype(np.int64)
        ok = (hr >= 0) & (hr < grid.cells.shape[0]) & (hc >= 0) & (hc < grid.cells.shape[1])
        grid.cells[hr[ok], hc[ok]] = OCCUPIED


@dataclass
class Frontier:
    cells: list[tuple[int, int]]
    centroid: np.ndarray  # world (x, y)
    bearing_from_robot: float


def detect_frontiers(grid: OccupancyGrid, robot_xy: tuple[float, float],
                     min_frontier_cells: int = 3) -> list[Frontier]:
    """Free cells 4-adjacent to Unknown, clustered by 8-connectivity.

    Clusters smaller than min_frontier_cells are dropped. The result is
    sorted by centroid (y, then x) so downstream tie-breaks are stable.
    """
    free = grid.cells == FREE
    unknown = grid.cells == UNKNOWN
    near_unknown = np.zeros_like(unknown)
    near_unknown[1:, :] |= unknown[:-1, :]
    near_unknown[:-1, :] |= unknown[1:, :]
    near_unknown[:, 1:] |= unknown[:, :-1]
    near_unknown[:, :-1] |= unknown[:, 1:]
    mask = free & near_unknown
    if not mask.any():
        return []
    labels, count = ndimage.label(mask, structure=_EIGHT_CONN)
    rx, ry = robot_xy
    frontiers = []
    objects = ndimage.find_objects(labels)
    for idx, sl in enumerate(objects, start=1):
        rr, cc = np.nonzero(labels[sl] == idx)
        if rr.size < min_frontier_cells:
            continue
        rr = rr + sl[0].start
        cc = cc + sl[1].start
        cx = grid.origin[0] + (cc.mean() + 0.5) * grid.resolution
        cy = grid.origin[1] + (rr.mean() + 0.5) * grid.resolution
        frontiers.append(Frontier(
            cells=list(zip(rr.tolist(), cc.tolist())),
            centroid=np.array([cx, cy]),
            bearing_from_robot=math.atan2(cy - ry, cx - rx),
        ))
    frontiers.sort(key=lambda f: (f.centroid[1], f.centroid[0]))
    return frontiers


def score_frontiers(frontiers: list[Frontier], robot_xy: tuple[float, float],
                    target_dir: DirectionEstimate, alpha: float,
                    dist_weight: float) -> Frontier:
    """Pick argmax of alpha*cos(bearing error) - dist_weight*distance.

    Ties keep the first candidate, and the input is already centroid-sorted.
    """
    if not frontiers:
        raise NoFrontiersError("no frontiers to score")
    target_bearing = target_dir.bearing
    best = None
    best_u = -math.inf
    rx, ry = robot_xy
    for f in frontiers:
        dist = math.hypot(f.centroid[0] - rx, f.centroid[1] - ry)
        u = alpha * math.cos(f.bearing_from_robot - target_bearing) - dist_weight * dist
        if u > best_u:
            best, best_u = f, u
    return best


def inflate_obstacles(grid: OccupancyGrid, radius_cells: int) -> np.ndarray:
    """Boolean blocked mask: Occupied cells dilated by a Chebyshev radius."""
    occ = grid.cells == OCCUPIED
    if radius_cells <= 0 or not occ.any():
        return occ
    return ndimage.binary_dilation(occ, structure=_EIGHT_CONN, iterations=radius_cells)


_MOVES = (
    (-1, 0, 1.0), (1, 0, 1.0), (0, -1, 1.0), (0, 1, 1.0),
    (-1, -1, _SQRT2), (-1, 1, _SQRT2), (1, -1, _SQRT2), (1, 1, _SQRT2),
)


def _octile(a: tuple[int, int], b: tuple[int, int]) -> float:
    dr = abs(a[0] - b[0])
    dc = abs(a[1] - b[1])
    return max(dr, dc) + (_SQRT2 - 1.0) * min(dr, dc)


def plan_path(grid: OccupancyGrid, start: tuple[int, int], goal: tuple[int, int],
              inflation_radius: int = 1,
              blocked: np.ndarray | None = None) -> list[tuple[int, int]]:
    """Shortest 8-connected path over Free+Unknown cells, avoiding inflated obstacles.

    Step costs are 1 and sqrt(2); the start cell is exempt from inflation so a
    robot standing next to a wall can still move away. Raises UnreachableError.
    """
    if not grid.in_bounds(*start) or not grid.in_bounds(*goal):
        raise UnreachableError("endpoint outside the grid")
    if grid.cells[start] != FREE:
        raise UnreachableError("start cell is not free")
    if blocked is None:
        blocked = inflate_obstacles(grid, inflation_radius)
    if blocked[goal]:
        raise UnreachableError("goal cell is blocked")
    if start == goal:
        return [start]

    rows, cols = grid.cells.shape
    g_cost = {start: 0.0}
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    counter = 0
    heap = [(_octile(start, goal), counter, start)]
    closed = set()
    while heap:
        _, _, cur = heapq.heappop(heap)
        if cur == goal:
            path = [cur]
            while cur in parent:
                cur = parent[cur]
                path.append(cur)
            path.reverse()
            return path
        if cur in closed:
            continue
        closed.add(cur)
        cg = g_cost[cur]
        for dr, dc, cost in _MOVES:
            nr, nc = cur[0] + dr, cur[1] + dc
            if not (0 <= nr < rows and 0 <= nc < cols):
                continue
            nxt = (nr, nc)
            if blocked[nr, nc] or nxt in closed:
                continue
            ng = cg + cost
            if ng < g_cost.get(nxt, math.inf):
                g_cost[nxt] = ng
                parent[nxt] = cur
                counter += 1
                heapq.heappush(heap, (ng + _octile(nxt, goal), counter, nxt))
    raise UnreachableError(f"no path from {start} to {goal}")


def segment_clear(grid: OccupancyGrid, blocked: np.ndarray,
                  a: tuple[float, float], b: tuple[float, float]) -> bool:
    """True when the straight segment a->b crosses no blocked cell."""
    ax, ay = a
    bx, by = b
    dist = math.hypot(bx - ax, by - ay)
    n = max(2, int(dist / (0.5 * grid.resolution)) + 1)
    ts = np.linspace(0.0, 1.0, n)
    xs = ax + (bx - ax) * ts
    ys = ay + (by - ay) * ts
    cols = np.floor((xs - grid.origin[0]) / grid.resolution).astype(np.int64)
    rows = np.floor((ys - grid.origin[1]) / grid.resolution).astype(np.int64)
    inside = (
        (rows >= 0) & (rows < grid.cells.shape[0]) & (cols >= 0) & (cols < grid.cells.shape[1])
    )
    if not inside.all():
        return False
    return not blocked[rows, cols].any()
