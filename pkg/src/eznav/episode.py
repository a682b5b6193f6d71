"""Episode loop: render -> perceive -> map -> decide, with trajectory logging.

An episode terminates on Done (within the success radius of the true target),
Failed (fallback exhausted), or the step budget. Invisibility intervals are
derived from the verdict-driven lost/recovered event stream and feed the
recovery metrics.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import EpisodeConfig
from .geometry import Pose
from .mapping import OccupancyGrid, update_occupancy
from .memory import KeyframeWindow
from .navigator import Event, Mode, NavConfig, NavState, navigation_tick
from .pipeline import ablated_layout, perceive_grids
from .world import range_scan, render_score_grid


@dataclass
class InvisibilityInterval:
    t_lost: float
    t_recovered: float | None
    path_during: float
    # True when the episode succeeded while this interval was still open:
    # the run ended, it did not fail to recover
    censored: bool = False

    @property
    def recovered(self) -> bool:
        return self.t_recovered is not None


@dataclass
class EpisodeResult:
    success: bool
    steps: int
    path_length: float
    invisibility_intervals: list[InvisibilityInterval]
    trajectory: list[dict]
    events: list[Event]
    final_mode: Mode
    seed: int
    collisions: int = 0

    def summary_dict(self) -> dict:
        return {
            "success": self.success,
            "steps": self.steps,
            "path_length": self.path_length,
            "final_mode": self.final_mode.value,
            "seed": self.seed,
            "collisions": self.collisions,
            "invisibility_intervals": [
                {"t_lost": iv.t_lost, "t_recovered": iv.t_recovered,
                 "path_during": iv.path_during, "censored": iv.censored}
                for iv in self.invisibility_intervals
            ],
        }


def effective_nav_config(cfg: EpisodeConfig) -> NavConfig:
    """Navigator config with the episode's ablation flags folded in."""
    return dataclasses.replace(
        cfg.nav,
        direction_fusion=cfg.nav.direction_fusion and cfg.flags.direction_fusion,
        active_search=cfg.nav.active_search and cfg.flags.active_search,
        vis_params=cfg.visibility,
    )


def run_episode(cfg: EpisodeConfig) -> EpisodeResult:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    world = cfg.world
    nav_cfg = effective_nav_config(cfg)
    grid = OccupancyGrid.create(world.width, world.height, cfg.grid_resolution)
    sx, sy, sth = world.start_pose
    state = NavState.initial(sx, sy, sth)
    window = KeyframeWindow(nav_cfg.window_capacity)
    eff_layout = ablated_layout(cfg.layout, cfg.flags)
    target_xy = world.target.position

    trajectory: list[dict] = []
    all_events: list[Event] = []
    intervals: list[InvisibilityInterval] = []
    open_start: tuple[float, float] | None = None  # (t_lost, path_at_loss)
    path_length = 0.0
    collisions = 0

    for step in range(cfg.step_budget):
        t = step * nav_cfg.dt
        rx, ry, rth = (float(v) for v in state.robot)
        # scripted events model distant occluders; they stop applying at close
        # range where only real geometry can hide the target
        in_script_range = math.hypot(target_xy[0] - rx, target_xy[1] - ry) \
            > cfg.script_min_distance
        script_active = cfg.script.active(t) and in_script_range
        script_weight = cfg.script.weight(t) if in_script_range else 1.0
        cam_pose = Pose.level_camera(rx, ry, cfg.camera_height, rth)

        grids = render_score_grid(
            world, cfg.camera, cam_pose, eff_layout, cfg.scorer, script_active, rng,
            camera_height=cfg.camera_height, visibility_weight=script_weight,
        )
        perception, fp = perceive_grids(
            grids, cfg.layout, cfg.fusion, cfg.visibility, cfg.camera, cam_pose,
            flags=cfg.flags, refine_anchor=cfg.refine_anchor,
        )
        dist_target = math.hypot(target_xy[0] - rx, target_xy[1] - ry)
        perception = dataclasses.replace(
            perception, target_in_reach=dist_target <= nav_cfg.success_radius
        )

        scan = range_scan(world, (rx, ry, rth), n_beams=cfg.sensor.n_beams,
                          fov=cfg.sensor.fov, max_range=cfg.sensor.max_range)
        update_occupancy(grid, (rx, ry, rth), scan)

        prev = state.robot[:2].copy()
        state, cmd, events = navigation_tick(state, perception, grid, window, nav_cfg)
        path_length += float(np.hypot(*(state.robot[:2] - prev)))

        if any(b.contains(float(state.robot[0]), float(state.robot[1]))
               for b in world.occluders):
            collisions += 1

        for ev in events:
            if ev.name == "lost" and open_start is None:
                open_start = (ev.t, path_length)
            elif ev.name == "recovered" and open_start is not None:
                intervals.append(InvisibilityInterval(
                    t_lost=open_start[0], t_recovered=ev.t,
                    path_during=path_length - open_start[1],
                ))
                open_start = None
        all_events.extend(events)

        trajectory.append({
            "step": step,
            "t": t,
            "pose": [float(state.robot[0]), float(state.robot[1]), float(state.robot[2])],
            "mode": state.mode.value,
            "visible": perception.verdict.visible,
            "deciding_level": perception.verdict.deciding_level,
            "anchor": [int(fp.anchor[0]), int(fp.anchor[1])],
            "live_dir": [float(x) for x in perception.live_dir.direction]
            if perception.live_dir is not None else None,
            "cmd": [cmd.linear_velocity, cmd.angular_velocity],
            "path_length": path_length,
            "script_active": script_active,
            "events": [ev.name for ev in events],
        })
        if state.mode in (Mode.DONE, Mode.FAILED):
            break

    if open_start is not None:
        intervals.append(InvisibilityInterval(
            t_lost=open_start[0], t_recovered=None,
            path_during=path_length - open_start[1],
            censored=state.mode is Mode.DONE,
        ))

    return EpisodeResult(
        success=state.mode is Mode.DONE,
        steps=len(trajectory),
        path_length=path_length,
        invisibility_intervals=intervals,
        trajectory=trajectory,
        events=all_events,
        final_mode=state.mode,
        seed=cfg.seed,
        collisions=collisions,
    )


def write_trajectory_jsonl(result: EpisodeResult, path: str | Path) -> None:
    with open(path, "w") as fh:
        for record in result.trajectory:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def write_events_jsonl(result: EpisodeResult, path: str | Path) -> None:
    with open(path, "w") as fh:
        for ev in result.events:
            fh.write(json.dumps(
                {"t": ev.t, "step": ev.step, "name": ev.name, "data": ev.data},
                sort_keys=True) + "\n")


def write_summary_json(result: EpisodeResult, path: str | Path) -> None:
    Path(path).write_text(json.dumps(result.summary_dict(), indent=2, sort_keys=True) + "\n")
