"""Closed-loop decision layer: frontier exploration steered by the target
direction while visible; fused-heading pursuit, bounded active search, and a
keyframe fallback sweep while occluded.

navigation_tick is the single mutator of NavState, the keyframe window, and
(indirectly, via the episode loop) the occupancy grid; one call advances the
robot by one control period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import DirectionEstimate, DirectionSource, Pose, wrap_angle
from .mapping import (
    FREE,
    OCCUPIED,
    Frontier,
    OccupancyGrid,
    UnreachableError,
    detect_frontiers,
    inflate_obstacles,
    plan_path,
    score_frontiers,
    segment_clear,
)
from .memory import Keyframe, KeyframeWindow, fuse_directions, reid_match
from .visibility import VisibilityParams, VisibilityVerdict


class Mode(Enum):
    TRACK_VISIBLE = "track_visible"
    OCCLUDED_FUSED = "occluded_fused"
    ACTIVE_SEARCH = "active_search"
    FALLBACK = "fallback"
    DONE = "done"
    FAILED = "failed"


# every legal (mode -> successor) edge; the fuzz harness checks against this
ALLOWED_TRANSITIONS: dict[Mode, frozenset[Mode]] = {
    Mode.TRACK_VISIBLE: frozenset({Mode.TRACK_VISIBLE, Mode.OCCLUDED_FUSED, Mode.DONE}),
    Mode.OCCLUDED_FUSED: frozenset({
        Mode.OCCLUDED_FUSED, Mode.TRACK_VISIBLE, Mode.ACTIVE_SEARCH, Mode.FALLBACK, Mode.DONE,
    }),
    Mode.ACTIVE_SEARCH: frozenset({
        Mode.ACTIVE_SEARCH, Mode.TRACK_VISIBLE, Mode.OCCLUDED_FUSED, Mode.FALLBACK, Mode.DONE,
    }),
    Mode.FALLBACK: frozenset({Mode.FALLBACK, Mode.TRACK_VISIBLE, Mode.FAILED, Mode.DONE}),
    Mode.DONE: frozenset({Mode.DONE}),
    Mode.FAILED: frozenset({Mode.FAILED}),
}


@dataclass(frozen=True)
class ControlCommand:
    linear_velocity: float
    angular_velocity: float


def clamped_command(v: float, w: float, cfg: "NavConfig") -> ControlCommand:
    return ControlCommand(
        linear_velocity=min(max(v, 0.0), cfg.v_max),
        angular_velocity=min(max(w, -cfg.omega_max), cfg.omega_max),
    )


@dataclass(frozen=True)
class AnchorObservation:
    """Salient-region summary of one perception pass, recorded into keyframes."""

    score: float
    local_mean: float
    local_std: float
    level_std: float
    ratio: float
    descriptor: np.ndarray | None = None


@dataclass(frozen=True)
class Perception:
    verdict: VisibilityVerdict
    live_dir: DirectionEstimate | None
    anchor: AnchorObservation | None
    # ground-truth arrival signal judged by the simulator (goal-check stand-in)
    target_in_reach: bool = False


@dataclass(frozen=True)
class Event:
    t: float
    step: int
    name: str
    data: dict = field(default_factory=dict)


@dataclass
class NavConfig:
    alpha: float = 1.0
    dist_weight: float = 0.02
    keyframe_interval: int = 5
    success_radius: float = 5.0
    scan_step: float = math.radians(10.0)
    scan_range: float = math.radians(30.0)
    fallback_step: float = math.radians(30.0)
    max_failed_searches: int = 3
    min_frontier_cells: int = 3
    inflation_radius: int = 1
    v_max: float = 1.5
    omega_max: float = 1.0
    dt: float = 0.2
    decay: float = 0.9
    tau_reid: float = 0.8
    window_capacity: int = 10
    replan_interval: int = 5
    lookahead: float = 1.0
    heading_gain: float = 2.5
    align_tol: float = math.radians(4.0)
    # consecutive not-visible ticks before a tracked target counts as lost
    loss_confirm_ticks: int = 4
    arrival_factor: float = 2.0  # arrival radius in grid resolutions
    searched_exclusion: float = 3.0  # meters around already-searched frontiers
    blind_goal_distance: float = 8.0  # fallback goal when no frontier exists
    # frontiers deviating more than this from the target bearing do not serve
    # the direction: walk the bearing itself instead
    frontier_align_gate: float = math.radians(45.0)
    # while occluded, ignore frontiers closer than this so scan stops are
    # spaced out instead of firing back-to-back at the robot's feet
    min_occluded_goal_distance: float = 4.0
    policy: str = "full"  # "full" | "fixed_heading"
    direction_fusion: bool = True
    active_search: bool = True
    vis_params: VisibilityParams = field(default_factory=VisibilityParams)


@dataclass
class NavState:
    mode: Mode
    robot: np.ndarray  # (x, y, heading)
    failed_search_count: int = 0
    scan_plan: list[float] | None = None
    scan_index: int = 0
    scan_entry_heading: float | None = None
    step: int = 0
    t: float = 0.0
    ticks_since_keyframe: int = 10**9
    goal_xy: np.ndarray | None = None
    goal_kind: str | None = None  # "frontier" | "bearing" | "keyframe"
    path_xy: list[np.ndarray] | None = None
    last_live_dir: DirectionEstimate | None = None
    searched_goals: list[np.ndarray] = field(default_factory=list)
    ticks_since_replan: int = 10**9
    invisible_streak: int = 0
    progress_xy: np.ndarray | None = None
    progress_step: int = 0
    gate_off_until: int = 0

    @classmethod
    def initial(cls, x: float, y: float, heading: float) -> "NavState":
        return cls(mode=Mode.TRACK_VISIBLE, robot=np.array([x, y, heading], dtype=float))

    def heading_direction(self) -> DirectionEstimate:
        th = float(self.robot[2])
        return DirectionEstimate(
            direction=np.array([math.cos(th), math.sin(th), 0.0]),
            source=DirectionSource.KEYFRAME_FUSED,
            confidence=0.0,
        )


def _zero(cfg: NavConfig) -> ControlCommand:
    return clamped_command(0.0, 0.0, cfg)


def _transition(state: NavState, new_mode: Mode, events: list[Event], **data) -> None:
    if new_mode is not state.mode:
        events.append(Event(state.t, state.step, "mode_change",
                            {"from": state.mode.value, "to": new_mode.value, **data}))
        state.mode = new_mode


def _candidate_ratio(perception: Perception) -> float:
    if perception.anchor is not None:
        return perception.anchor.ratio
    v = perception.verdict
    if v.deciding_level is not None:
        return v.stats[v.deciding_level].ratio
    return 0.0


def _reid_ok(perception: Perception, window: KeyframeWindow, cfg: NavConfig) -> bool:
    if len(window) == 0:
        return True  # nothing remembered to contradict the sighting
    desc = perception.anchor.descriptor if perception.anchor is not None else None
    return reid_match(desc, _candidate_ratio(perception), window, cfg.vis_params, cfg.tau_reid)


def _recover(state: NavState, events: list[Event]) -> None:
    events.append(Event(state.t, state.step, "recovered", {}))
    _transition(state, Mode.TRACK_VISIBLE, events)
    state.invisible_streak = 0
    state.failed_search_count = 0
    state.scan_plan = None
    state.scan_index = 0
    state.scan_entry_heading = None
    state.searched_goals.clear()
    state.goal_xy = None
    state.path_xy = None


def _maybe_record_keyframe(state: NavState, perception: Perception,
                           window: KeyframeWindow, cfg: NavConfig,
                           events: list[Event]) -> None:
    if perception.live_dir is None or perception.anchor is None:
        return
    if state.ticks_since_keyframe < cfg.keyframe_interval:
        return
    if len(window) and window.latest.timestamp >= state.t:
        return
    a = perception.anchor
    kf = Keyframe(
        timestamp=state.t,
        step=state.step,
        direction=perception.live_dir.direction,
        robot_pose=Pose.from_yaw(float(state.robot[0]), float(state.robot[1]), 0.0,
                                 float(state.robot[2])),
        score=a.score,
        local_mean=a.local_mean,
        local_std=a.local_std,
        level_std=a.level_std,
        sparsity_ratio=a.ratio,
        salient_descriptor=a.descriptor,
    )
    window.record(kf)
    state.ticks_since_keyframe = 0
    events.append(Event(state.t, state.step, "keyframe", {"score": a.score, "ratio": a.ratio}))


def _select_goal(state: NavState, grid: OccupancyGrid, dir_est: DirectionEstimate,
                 cfg: NavConfig, events: list[Event], exclude_searched: bool,
                 min_goal_distance: float = 0.0) -> None:
    rx, ry = float(state.robot[0]), float(state.robot[1])
    frontiers = detect_frontiers(grid, (rx, ry), cfg.min_frontier_cells)
    if min_goal_distance > 0.0:
        far = [f for f in frontiers
               if math.hypot(f.centroid[0] - rx, f.centroid[1] - ry) >= min_goal_distance]
        if far:
            frontiers = far
    if exclude_searched and state.searched_goals:
        kept = [
            f for f in frontiers
            if all(float(np.linalg.norm(f.centroid - g)) > cfg.searched_exclusion
                   for g in state.searched_goals)
        ]
        if kept:
            frontiers = kept
    best = None
    if frontiers:
        best = score_frontiers(frontiers, (rx, ry), dir_est, cfg.alpha, cfg.dist_weight)
        gate_active = state.step >= state.gate_off_until
        if gate_active and abs(
            wrap_angle(best.bearing_from_robot - dir_est.bearing)
        ) > cfg.frontier_align_gate:
            best = None  # no frontier serves the direction: make forward progress
    if best is not None:
        # aim at the cluster cell nearest the centroid: always a mapped free cell
        cells = np.array(best.cells, dtype=float)
        centers_x = grid.origin[0] + (cells[:, 1] + 0.5) * grid.resolution
        centers_y = grid.origin[1] + (cells[:, 0] + 0.5) * grid.resolution
        d2 = (centers_x - best.centroid[0]) ** 2 + (centers_y - best.centroid[1]) ** 2
        i = int(np.argmin(d2))
        state.goal_xy = np.array([centers_x[i], centers_y[i]])
        state.goal_kind = "frontier"
    else:
        bearing = dir_est.bearing
        gx = rx + cfg.blind_goal_distance * math.cos(bearing)
        gy = ry + cfg.blind_goal_distance * math.sin(bearing)
        lo_x, lo_y = grid.origin
        hi_x = grid.origin[0] + grid.cells.shape[1] * grid.resolution
        hi_y = grid.origin[1] + grid.cells.shape[0] * grid.resolution
        margin = 2.0 * grid.resolution
        state.goal_xy = np.array([
            min(max(gx, lo_x + margin), hi_x - margin),
            min(max(gy, lo_y + margin), hi_y - margin),
        ])
        state.goal_kind = "bearing"


def _snap_to_unblocked(grid: OccupancyGrid, blocked: np.ndarray,
                       cell: tuple[int, int], radius: int = 6) -> tuple[int, int]:
    """Nearest unblocked cell within a window (row-major tie-break)."""
    if grid.in_bounds(*cell) and not blocked[cell]:
        return cell
    rows, cols = grid.cells.shape
    r0, c0 = cell
    best = None
    best_d2 = None
    for r in range(max(0, r0 - radius), min(rows, r0 + radius + 1)):
        for c in range(max(0, c0 - radius), min(cols, c0 + radius + 1)):
            if blocked[r, c]:
                continue
            d2 = (r - r0) ** 2 + (c - c0) ** 2
            if best_d2 is None or d2 < best_d2:
                best, best_d2 = (r, c), d2
    return best if best is not None else cell


def _compute_path(state: NavState, grid: OccupancyGrid, cfg: NavConfig) -> None:
    rx, ry = float(state.robot[0]), float(state.robot[1])
    goal = state.goal_xy
    blocked = inflate_obstacles(grid, cfg.inflation_radius)
    if segment_clear(grid, blocked, (rx, ry), (float(goal[0]), float(goal[1]))):
        state.path_xy = [np.array([float(goal[0]), float(goal[1])])]
        return
    start_cell = grid.world_to_cell(rx, ry)
    goal_cell = grid.world_to_cell(float(goal[0]), float(goal[1]))
    snapped = _snap_to_unblocked(grid, blocked, goal_cell)
    if snapped != goal_cell:
        goal_cell = snapped
        state.goal_xy = np.array(grid.cell_center(*goal_cell))
    if grid.cells[start_cell] != FREE:
        free_mask = grid.cells != FREE
        start_cell = _snap_to_unblocked(grid, free_mask, start_cell, radius=3)
    try:
        cells = plan_path(grid, start_cell, goal_cell,
                          inflation_radius=cfg.inflation_radius, blocked=blocked)
        state.path_xy = [np.array(grid.cell_center(r, c)) for r, c in cells[1:]] or [
            np.array(grid.cell_center(*goal_cell))
        ]
    except UnreachableError:
        # head straight and let the next replan (and collision guard) sort it out
        state.path_xy = [np.array([float(goal[0]), float(goal[1])])]


def _follow_path(state: NavState, cfg: NavConfig) -> ControlCommand:
    if not state.path_xy:
        return _zero(cfg)
    rx, ry, th = state.robot
    while len(state.path_xy) > 1 and np.hypot(*(state.path_xy[0] - state.robot[:2])) < 0.5 * cfg.lookahead:
        state.path_xy.pop(0)
    target = state.path_xy[0]
    for wp in state.path_xy:
        target = wp
        if np.hypot(*(wp - state.robot[:2])) >= cfg.lookahead:
            break
    bearing = math.atan2(float(target[1]) - ry, float(target[0]) - rx)
    err = wrap_angle(bearing - th)
    w = cfg.heading_gain * err
    v = cfg.v_max * max(0.0, math.cos(err))
    return clamped_command(v, w, cfg)


def _steer(state: NavState, grid: OccupancyGrid, dir_est: DirectionEstimate,
           cfg: NavConfig, events: list[Event], exclude_searched: bool,
           commit_goal: bool = False, min_goal_distance: float = 0.0) -> ControlCommand:
    """Frontier-steered motion. With commit_goal the selected frontier is kept
    until arrival, so occluded pursuit cannot chase a receding frontier line."""
    state.ticks_since_replan += 1
    stale = state.goal_xy is None or state.path_xy is None \
        or state.ticks_since_replan >= cfg.replan_interval
    if stale:
        state.ticks_since_replan = 0
        if state.goal_xy is None or not commit_goal:
            _select_goal(state, grid, dir_est, cfg, events, exclude_searched,
                         min_goal_distance=min_goal_distance)
        _compute_path(state, grid, cfg)
    return _follow_path(state, cfg)


def _steer_to_point(state: NavState, grid: OccupancyGrid, point: np.ndarray,
                    cfg: NavConfig) -> ControlCommand:
    state.ticks_since_replan += 1
    if (
        state.goal_xy is None
        or state.goal_kind != "keyframe"
        or state.path_xy is None
        or state.ticks_since_replan >= cfg.replan_interval
    ):
        state.ticks_since_replan = 0
        state.goal_xy = np.asarray(point, dtype=float).copy()
        state.goal_kind = "keyframe"
        _compute_path(state, grid, cfg)
    return _follow_path(state, cfg)


def _rotate_toward(state: NavState, heading: float, cfg: NavConfig) -> ControlCommand:
    err = wrap_angle(heading - float(state.robot[2]))
    w = cfg.heading_gain * err
    if abs(w) < 0.3 and abs(err) > cfg.align_tol:
        w = math.copysign(0.3, err)
    return clamped_command(0.0, w, cfg)


def _build_scan_plan(entry_heading: float, cfg: NavConfig) -> list[float]:
    n = int(round(2.0 * cfg.scan_range / cfg.scan_step))
    return [wrap_angle(entry_heading - cfg.scan_range + i * cfg.scan_step) for i in range(n + 1)]


def _build_lookaround_plan(entry_heading: float, cfg: NavConfig) -> list[float]:
    n = max(1, int(round(2.0 * math.pi / cfg.fallback_step)))
    return [wrap_angle(entry_heading + (i + 1) * cfg.fallback_step) for i in range(n)]


def _occluded_direction(state: NavState, window: KeyframeWindow, cfg: NavConfig) -> DirectionEstimate:
    if cfg.policy == "fixed_heading":
        return state.last_live_dir or state.heading_direction()
    if len(window) == 0:
        return state.last_live_dir or state.heading_direction()
    if cfg.direction_fusion:
        return fuse_directions(window, state.t, cfg.decay)
    latest = window.latest
    return DirectionEstimate(direction=latest.direction,
                             source=DirectionSource.KEYFRAME_FUSED,
                             confidence=latest.sparsity_ratio * latest.local_std)


def _arrived(state: NavState, grid: OccupancyGrid, cfg: NavConfig) -> bool:
    if state.goal_xy is None:
        return False
    return float(np.hypot(*(state.goal_xy - state.robot[:2]))) <= cfg.arrival_factor * grid.resolution


def _stalled(state: NavState, cfg: NavConfig) -> bool:
    """True when the distance to the goal stops shrinking for ~8 seconds.

    Catches both hard pinning and orbit-style limit cycles around an
    unreachable goal (which keep the robot moving without progress).
    """
    if state.goal_xy is None:
        return False
    dist = float(np.hypot(*(state.goal_xy - state.robot[:2])))
    if state.progress_xy is None \
            or not np.array_equal(state.progress_xy[:2], state.goal_xy) \
            or dist <= float(state.progress_xy[2]) - 0.8:
        state.progress_xy = np.array([state.goal_xy[0], state.goal_xy[1], dist])
        state.progress_step = state.step
        return False
    return (state.step - state.progress_step) * cfg.dt >= 8.0


def _enter_fallback(state: NavState, window: KeyframeWindow, cfg: NavConfig,
                    events: list[Event]) -> None:
    _transition(state, Mode.FALLBACK, events)
    events.append(Event(state.t, state.step, "fallback_started",
                        {"failed_searches": state.failed_search_count}))
    state.scan_plan = None
    state.scan_index = 0
    state.goal_xy = None
    state.path_xy = None
    state.searched_goals.clear()


def _handle_search_exhausted(state: NavState, window: KeyframeWindow, cfg: NavConfig,
                             events: list[Event]) -> None:
    state.failed_search_count += 1
    events.append(Event(state.t, state.step, "search_exhausted",
                        {"count": state.failed_search_count}))
    state.scan_plan = None
    state.scan_index = 0
    state.scan_entry_heading = None
    if state.failed_search_count >= cfg.max_failed_searches:
        _enter_fallback(state, window, cfg, events)
    else:
        _transition(state, Mode.OCCLUDED_FUSED, events)
        state.goal_xy = None
        state.path_xy = None


def _visible_tick(state: NavState, perception: Perception, grid: OccupancyGrid,
                  window: KeyframeWindow, cfg: NavConfig,
                  events: list[Event]) -> ControlCommand:
    state.last_live_dir = perception.live_dir or state.last_live_dir
    _maybe_record_keyframe(state, perception, window, cfg, events)
    dir_est = perception.live_dir or state.last_live_dir or state.heading_direction()
    if _stalled(state, cfg):
        # pinned while tracking: detour through any frontier for a while
        state.goal_xy = None
        state.path_xy = None
        state.gate_off_until = state.step + 50
        state.progress_xy = None
    return _steer(state, grid, dir_est, cfg, events, exclude_searched=False)


def _occluded_tick(state: NavState, perception: Perception, grid: OccupancyGrid,
                   window: KeyframeWindow, cfg: NavConfig,
                   events: list[Event]) -> ControlCommand:
    dir_est = _occluded_direction(state, window, cfg)
    if cfg.policy != "full":
        # baseline: hold the remembered bearing and drive, nothing else; the
        # collision stop is the only concession to the world
        err = wrap_angle(dir_est.bearing - float(state.robot[2]))
        return clamped_command(cfg.v_max * max(0.0, math.cos(err)),
                               cfg.heading_gain * err, cfg)
    cmd = _steer(state, grid, dir_est, cfg, events, exclude_searched=True,
                 commit_goal=True, min_goal_distance=cfg.min_occluded_goal_distance)
    if _arrived(state, grid, cfg) or _stalled(state, cfg):
        if state.goal_xy is not None:
            state.searched_goals.append(state.goal_xy.copy())
            if len(state.searched_goals) > 3:
                state.searched_goals.pop(0)
        state.progress_xy = None
        if cfg.active_search:
            _transition(state, Mode.ACTIVE_SEARCH, events)
            state.scan_entry_heading = float(state.robot[2])
            state.scan_plan = _build_scan_plan(state.scan_entry_heading, cfg)
            state.scan_index = 0
            events.append(Event(state.t, state.step, "search_started",
                                {"entry_heading": state.scan_entry_heading}))
            return _zero(cfg)
        _handle_search_exhausted(state, window, cfg, events)
        return _zero(cfg)
    return cmd


def _search_tick(state: NavState, grid: OccupancyGrid, window: KeyframeWindow,
                 cfg: NavConfig, events: list[Event]) -> ControlCommand:
    if not state.scan_plan:
        _handle_search_exhausted(state, window, cfg, events)
        return _zero(cfg)
    target_heading = state.scan_plan[state.scan_index]
    err = wrap_angle(target_heading - float(state.robot[2]))
    if abs(err) <= cfg.align_tol:
        state.scan_index += 1
        if state.scan_index >= len(state.scan_plan):
            _handle_search_exhausted(state, window, cfg, events)
        return _zero(cfg)
    return _rotate_toward(state, target_heading, cfg)


def _fallback_tick(state: NavState, grid: OccupancyGrid, window: KeyframeWindow,
                   cfg: NavConfig, events: list[Event]) -> ControlCommand:
    if len(window) == 0:
        _transition(state, Mode.FAILED, events)
        events.append(Event(state.t, state.step, "failed", {"reason": "no_keyframes"}))
        return _zero(cfg)
    if state.scan_plan is None:
        anchor_pos = window.latest.robot_pose.position[:2]
        reached = float(np.hypot(*(anchor_pos - state.robot[:2]))) \
            <= cfg.arrival_factor * grid.resolution
        if reached or _stalled(state, cfg):
            state.progress_xy = None
            state.scan_entry_heading = float(state.robot[2])
            state.scan_plan = _build_lookaround_plan(state.scan_entry_heading, cfg)
            state.scan_index = 0
            events.append(Event(state.t, state.step, "lookaround_started", {}))
            return _zero(cfg)
        return _steer_to_point(state, grid, anchor_pos, cfg)
    target_heading = state.scan_plan[state.scan_index]
    err = wrap_angle(target_heading - float(state.robot[2]))
    if abs(err) <= cfg.align_tol:
        state.scan_index += 1
        if state.scan_index >= len(state.scan_plan):
            _transition(state, Mode.FAILED, events)
            events.append(Event(state.t, state.step, "failed", {"reason": "lookaround_exhausted"}))
        return _zero(cfg)
    return _rotate_toward(state, target_heading, cfg)


def navigation_tick(
    state: NavState,
    perception: Perception,
    grid: OccupancyGrid,
    window: KeyframeWindow,
    cfg: NavConfig,
) -> tuple[NavState, ControlCommand, list[Event]]:
    """Advance the mode machine one control period and integrate the robot pose."""
    events: list[Event] = []
    if state.mode in (Mode.DONE, Mode.FAILED):
        return state, _zero(cfg), events

    state.ticks_since_keyframe += 1

    if perception.target_in_reach:
        _transition(state, Mode.DONE, events)
        events.append(Event(state.t, state.step, "done", {}))
        cmd = _zero(cfg)
    else:
        visible = perception.verdict.visible
        if state.mode is Mode.TRACK_VISIBLE:
            if visible:
                state.invisible_streak = 0
                cmd = _visible_tick(state, perception, grid, window, cfg, events)
            else:
                state.invisible_streak += 1
                if state.invisible_streak >= cfg.loss_confirm_ticks:
                    state.invisible_streak = 0
                    events.append(Event(state.t, state.step, "lost", {}))
                    _transition(state, Mode.OCCLUDED_FUSED, events)
                    state.goal_xy = None
                    state.path_xy = None
                    cmd = _occluded_tick(state, perception, grid, window, cfg, events)
                else:
                    # unconfirmed blip: hold course on the last live direction
                    dir_est = state.last_live_dir or state.heading_direction()
                    cmd = _steer(state, grid, dir_est, cfg, events, exclude_searched=False)
        elif state.mode is Mode.OCCLUDED_FUSED:
            if visible and _reid_ok(perception, window, cfg):
                _recover(state, events)
                cmd = _visible_tick(state, perception, grid, window, cfg, events)
            else:
                cmd = _occluded_tick(state, perception, grid, window, cfg, events)
        elif state.mode is Mode.ACTIVE_SEARCH:
            if visible and _reid_ok(perception, window, cfg):
                _recover(state, events)
                cmd = _visible_tick(state, perception, grid, window, cfg, events)
            else:
                cmd = _search_tick(state, grid, window, cfg, events)
        elif state.mode is Mode.FALLBACK:
            if visible and _reid_ok(perception, window, cfg):
                _recover(state, events)
                cmd = _visible_tick(state, perception, grid, window, cfg, events)
            else:
                cmd = _fallback_tick(state, grid, window, cfg, events)
        else:  # pragma: no cover - absorbing modes handled above
            cmd = _zero(cfg)

    # unicycle integration with a hard stop against mapped obstacles; movement
    # within the current cell stays allowed so a robot whose own cell gets
    # marked (it stands in the free part of a box-edge cell) can slide out
    x, y, th = state.robot
    nx = x + cmd.linear_velocity * math.cos(th) * cfg.dt
    ny = y + cmd.linear_velocity * math.sin(th) * cfg.dt
    r, c = grid.world_to_cell(nx, ny)
    if grid.in_bounds(r, c) and (
        grid.cells[r, c] != OCCUPIED or (r, c) == grid.world_to_cell(x, y)
    ):
        state.robot[0] = nx
        state.robot[1] = ny
    state.robot[2] = wrap_angle(th + cmd.angular_velocity * cfg.dt)

    state.step += 1
    state.t = state.step * cfg.dt
    return state, cmd, events
