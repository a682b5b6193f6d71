"""Metrics and benchmark drivers.

Metrics: penalized angular error (pi for every missed detection), recovery
success rate / recovery path length over invisibility intervals, and overall
success rate. Benchmarks: a static perception sweep over target distances and
an occlusion-suite navigation comparison (full policy vs fixed-heading),
both seeded and reproducible.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .config import EpisodeConfig, SensorConfig
from .episode import EpisodeResult, run_episode
from .geometry import Pose, camera_from_hfov, wrap_angle
from .navigator import NavConfig
from .pipeline import AblationFlags, ablated_layout, perceive_grids
from .pyramid import FusionParams, GridShape, PyramidLayout
from .visibility import VisibilityParams
from .world import (
    Box,
    OcclusionEvent,
    OcclusionKind,
    OcclusionScript,
    ScorerParams,
    TargetSpec,
    WorldSpec,
    render_score_grid,
    visibility_fraction,
)

NOT_DETECTED = None


class EmptyTrialsError(ValueError):
    """Angular error is undefined over zero trials."""


@dataclass(frozen=True)
class PerceptionTrial:
    distance_m: float
    predicted_theta: float | None  # None encodes a missed detection
    truth_theta: float


def penalized_angular_error(trials: list[PerceptionTrial]) -> float:
    """Mean |wrapped heading error|, charging pi for each missed detection."""
    if not trials:
        raise EmptyTrialsError("no trials")
    total = 0.0
    for tr in trials:
        if tr.predicted_theta is None:
            total += math.pi
        else:
            total += abs(wrap_angle(tr.predicted_theta - tr.truth_theta))
    return total / len(trials)


def compute_rsr_rpl(results: list[EpisodeResult]) -> tuple[float | None, float | None]:
    """Recovery success rate (%) and mean recovery path length (m).

    The denominator is the number of invisibility intervals; episodes without
    intervals contribute to neither metric, and intervals censored by reaching
    the goal (the run succeeded while still occluded) are excluded rather than
    counted as failed recoveries. Returns (None, None) when no interval exists
    anywhere (not-applicable, never zero).
    """
    intervals = [iv for r in results for iv in r.invisibility_intervals if not iv.censored]
    if not intervals:
        return None, None
    recovered = [iv for iv in intervals if iv.recovered]
    rsr = 100.0 * len(recovered) / len(intervals)
    rpl = float(np.mean([iv.path_during for iv in recovered])) if recovered else None
    return rsr, rpl


def compute_sr(results: list[EpisodeResult]) -> float:
    if not results:
        return 0.0
    return 100.0 * sum(1 for r in results if r.success) / len(results)


@dataclass
class OcclusionSuiteResult:
    suite: str
    policy: str
    rsr_percent: float | None
    rpl_meters: float | None
    sr_percent: float
    n_episodes: int
    n_intervals: int


# ---------------------------------------------------------------------------
# perception benchmark: static scenes at fixed target distances


BENCH_DISTANCES = (10.0, 25.0, 50.0, 100.0, 150.0)


def _bench_scene(distance: float, bearing: float,
                 extent: tuple[float, float] = (10.0, 10.0)) -> WorldSpec:
    margin = 30.0
    half_span = distance * math.sin(0.7) + margin
    cam_xy = (10.0, half_span)
    target = (cam_xy[0] + distance * math.cos(bearing),
              cam_xy[1] + distance * math.sin(bearing))
    return WorldSpec(
        width=cam_xy[0] + distance + margin,
        height=2 * half_span,
        occluders=(),
        target=TargetSpec(position=np.array(target), extent=extent),
        start_pose=(cam_xy[0], cam_xy[1], 0.0),
    )


@dataclass
class PerceptionBenchRow:
    distance_m: float
    e_avg_rad: float
    e_avg_deg: float
    detection_rate: float
    n_trials: int


def run_perception_bench(
    distances: list[float] | tuple[float, ...] = BENCH_DISTANCES,
    trials_per_distance: int = 40,
    flags: AblationFlags = AblationFlags(),
    seed: int = 0,
    scorer: ScorerParams | None = None,
    layout: PyramidLayout | None = None,
    fusion: FusionParams | None = None,
    vis: VisibilityParams | None = None,
    max_bearing: float = 0.6,
) -> list[PerceptionBenchRow]:
    """Render static scenes per distance, perceive, and score angular error.

    The target sits at a seeded random bearing within the camera's view; a
    trial counts as missed when the visibility verdict is negative.
    """
    cam = camera_from_hfov(960, 480, math.radians(90.0))
    layout = layout or PyramidLayout(
        levels=(GridShape(8, 12), GridShape(4, 6), GridShape(2, 3)),
        image_width=cam.width, image_height=cam.height,
    )
    scorer = scorer or ScorerParams()
    fusion = fusion or FusionParams()
    vis = vis or VisibilityParams()
    rows = []
    for di, distance in enumerate(distances):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE2, di]))
        trials: list[PerceptionTrial] = []
        detected = 0
        for _ in range(trials_per_distance):
            bearing = float(rng.uniform(-max_bearing, max_bearing))
            world = _bench_scene(distance, bearing)
            sx, sy, sth = world.start_pose
            pose = Pose.level_camera(sx, sy, 0.8, sth)
            grids = render_score_grid(
                world, cam, pose, ablated_layout(layout, flags), scorer,
                script_active=False, rng=rng, with_descriptors=False,
            )
            perception, _ = perceive_grids(
                grids, layout, fusion, vis, cam, pose, flags=flags,
            )
            if perception.verdict.visible and perception.live_dir is not None:
                predicted = perception.live_dir.bearing
                detected += 1
            else:
                predicted = NOT_DETECTED
            trials.append(PerceptionTrial(
                distance_m=distance, predicted_theta=predicted, truth_theta=bearing,
            ))
        e_avg = penalized_angular_error(trials)
        rows.append(PerceptionBenchRow(
            distance_m=distance,
            e_avg_rad=e_avg,
            e_avg_deg=math.degrees(e_avg),
            detection_rate=detected / trials_per_distance,
            n_trials=trials_per_distance,
        ))
    return rows


# ---------------------------------------------------------------------------
# occlusion benchmark: seeded worlds and scripted visibility loss


OCCLUSION_SUITES = ("short", "long", "mixed")


@dataclass
class SuiteGenParams:
    world_width: float = 60.0
    world_height: float = 50.0
    n_boxes: int = 7
    box_w: tuple[float, float] = (4.0, 12.0)
    box_h: tuple[float, float] = (3.0, 9.0)
    box_height_m: tuple[float, float] = (2.0, 6.0)
    target_extent: tuple[float, float] = (8.0, 8.0)
    min_start_distance: float = 40.0
    step_budget: int = 750
    script_ramp_s: float = 3.0


def _overlaps(bx, by, w, h, boxes, margin=2.0) -> bool:
    cx, cy = bx + w / 2.0, by + h / 2.0
    return any(
        abs(cx - (b.x + b.w / 2)) < (w + b.w) / 2 + margin
        and abs(cy - (b.y + b.h / 2)) < (h + b.h) / 2 + margin
        for b in boxes
    )


def _sample_occlusion_world(rng: np.random.Generator, gen: SuiteGenParams) -> WorldSpec:
    """Diagonal route with low walls straddling it and tall wings flanking it.

    Low walls (below the sightline from afar, above it up close) keep the
    target visible from the start pose yet force detours and create
    viewpoint-dependent occlusion on approach; tall wings east shadow pockets
    that catch laterally drifting blind runs.
    """
    for _ in range(300):
        flip = bool(rng.integers(0, 2))
        sy = float(rng.uniform(6.0, 14.0))
        ty = float(rng.uniform(gen.world_height - 14.0, gen.world_height - 6.0))
        if flip:
            sy, ty = ty, sy
        sx = float(rng.uniform(4.0, 8.0))
        tx = float(rng.uniform(gen.world_width - 12.0, gen.world_width - 6.0))
        heading = math.atan2(ty - sy, tx - sx)
        route = np.array([tx - sx, ty - sy])
        route_len = float(np.linalg.norm(route))
        route_u = route / route_len
        perp = np.array([-route_u[1], route_u[0]])
        boxes: list[Box] = []

        # low walls across the route: drive-around, see-over (from far enough)
        n_low = 2
        tries = 0
        while sum(1 for b in boxes if b.height_m < 2.0) < n_low and tries < 200:
            tries += 1
            w = float(rng.uniform(9.0, 15.0))
            h = float(rng.uniform(2.5, 4.5))
            along = float(rng.uniform(0.35, 0.75)) * route_len
            lateral = float(rng.uniform(-3.0, 3.0))
            cx = sx + route_u[0] * along + perp[0] * lateral
            cyc = sy + route_u[1] * along + perp[1] * lateral
            bx = min(max(cx - w / 2.0, 2.0), gen.world_width - 2.0 - w)
            by = min(max(cyc - h / 2.0, 2.0), gen.world_height - 2.0 - h)
            if _overlaps(bx, by, w, h, boxes, margin=3.0):
                continue
            if math.hypot(bx + w / 2 - sx, by + h / 2 - sy) < 8.0:
                continue
            if math.hypot(bx + w / 2 - tx, by + h / 2 - ty) < 9.0:
                continue
            boxes.append(Box(bx, by, w, h, height_m=float(rng.uniform(1.3, 1.8))))

        # tall wings flanking the corridor
        tries = 0
        while len(boxes) < gen.n_boxes and tries < 300:
            tries += 1
            w = float(rng.uniform(*gen.box_w))
            h = float(rng.uniform(*gen.box_h))
            along = float(rng.uniform(0.2, 0.88)) * route_len
            lateral = float(rng.choice([-1.0, 1.0])) * float(rng.uniform(5.0, 13.0))
            cx = sx + route_u[0] * along + perp[0] * lateral
            cyc = sy + route_u[1] * along + perp[1] * lateral
            bx = min(max(cx - w / 2.0, 2.0), gen.world_width - 2.0 - w)
            by = min(max(cyc - h / 2.0, 2.0), gen.world_height - 2.0 - h)
            if _overlaps(bx, by, w, h, boxes):
                continue
            if math.hypot(bx + w / 2 - sx, by + h / 2 - sy) < 7.0:
                continue
            if math.hypot(bx + w / 2 - tx, by + h / 2 - ty) < 9.0:
                continue
            corners = np.array([
                [bx, by], [bx + w, by], [bx, by + h], [bx + w, by + h]
            ]) - np.array([sx, sy])
            lats = corners @ perp
            if not (np.all(lats > 2.0) or np.all(lats < -2.0)):
                continue
            boxes.append(Box(bx, by, w, h,
                             height_m=float(rng.uniform(*gen.box_height_m))))

        world = WorldSpec(
            width=gen.world_width, height=gen.world_height, occluders=tuple(boxes),
            target=TargetSpec(position=np.array([tx, ty]), extent=gen.target_extent),
            start_pose=(sx, sy, heading),
        )
        if math.hypot(tx - sx, ty - sy) < gen.min_start_distance:
            continue
        if sum(1 for b in boxes if b.height_m < 2.0) < n_low:
            continue
        if len(boxes) < gen.n_boxes - 2:
            continue
        if visibility_fraction(world, (sx, sy)) < 0.8:
            continue
        return world
    raise RuntimeError("could not sample a valid occlusion world")


def _suite_script(suite: str, rng: np.random.Generator, ramp_s: float) -> OcclusionScript:
    t0 = 6.0 + float(rng.uniform(0.0, 3.0))
    if suite == "short":
        starts = [t0, t0 + 9.0, t0 + 18.0, t0 + 27.0, t0 + 36.0, t0 + 45.0]
        events = [OcclusionEvent(t, 3.0, OcclusionKind.SHORT) for t in starts]
    elif suite == "long":
        starts = [t0, t0 + 12.0, t0 + 24.0, t0 + 36.0, t0 + 48.0]
        events = [OcclusionEvent(t, 8.0, OcclusionKind.LONG) for t in starts]
    elif suite == "mixed":
        events = [
            OcclusionEvent(t0, 3.0, OcclusionKind.SHORT),
            OcclusionEvent(t0 + 8.0, 8.0, OcclusionKind.LONG),
            OcclusionEvent(t0 + 21.0, 3.0, OcclusionKind.SHORT),
            OcclusionEvent(t0 + 29.0, 8.0, OcclusionKind.LONG),
            OcclusionEvent(t0 + 42.0, 3.0, OcclusionKind.SHORT),
        ]
    else:
        raise ValueError(f"unknown suite: {suite}")
    return OcclusionScript(events=tuple(events), ramp_s=ramp_s)


def make_suite_episode_config(
    suite: str,
    index: int,
    seed: int,
    flags: AblationFlags = AblationFlags(),
    policy: str = "full",
    gen: SuiteGenParams | None = None,
) -> EpisodeConfig:
    """Deterministic episode config for (suite, index); worlds and scripts are
    shared across policies and flag sets so comparisons are paired."""
    gen = gen or SuiteGenParams()
    suite_id = OCCLUSION_SUITES.index(suite)
    rng = np.random.default_rng(np.random.SeedSequence([seed, suite_id, index]))
    world = _sample_occlusion_world(rng, gen)
    script = _suite_script(suite, rng, gen.script_ramp_s)
    cam = camera_from_hfov(960, 480, math.radians(90.0))
    layout = PyramidLayout(levels=(GridShape(8, 12), GridShape(4, 6), GridShape(2, 3)),
                           image_width=cam.width, image_height=cam.height)
    episode_seed = int(rng.integers(0, 2**31 - 1))
    # many near-corridor wings: give the search cycle room before the terminal
    # fallback sweep so it lands after the scripted blindness horizon
    nav = NavConfig(policy=policy, max_failed_searches=5)
    return EpisodeConfig(
        world=world,
        camera=cam,
        camera_height=0.8,
        scorer=ScorerParams(),
        layout=layout,
        fusion=FusionParams(),
        visibility=VisibilityParams(),
        nav=nav,
        sensor=SensorConfig(),
        script=script,
        flags=flags,
        grid_resolution=0.5,
        seed=episode_seed,
        step_budget=gen.step_budget,
        min_start_distance=gen.min_start_distance,
    )


def run_occlusion_suite(
    suite: str,
    episodes: int,
    flags: AblationFlags = AblationFlags(),
    policy: str = "full",
    seed: int = 0,
    gen: SuiteGenParams | None = None,
) -> tuple[OcclusionSuiteResult, list[EpisodeResult]]:
    results = []
    for index in range(episodes):
        cfg = make_suite_episode_config(suite, index, seed, flags=flags, policy=policy, gen=gen)
        results.append(run_episode(cfg))
    rsr, rpl = compute_rsr_rpl(results)
    summary = OcclusionSuiteResult(
        suite=suite,
        policy=policy,
        rsr_percent=rsr,
        rpl_meters=rpl,
        sr_percent=compute_sr(results),
        n_episodes=episodes,
        n_intervals=sum(len(r.invisibility_intervals) for r in results),
    )
    return summary, results


def run_occlusion_bench(
    suites: tuple[str, ...] = OCCLUSION_SUITES,
    episodes_per_suite: int = 20,
    flags: AblationFlags = AblationFlags(),
    policy: str = "full",
    seed: int = 0,
    gen: SuiteGenParams | None = None,
) -> list[OcclusionSuiteResult]:
    return [
        run_occlusion_suite(s, episodes_per_suite, flags=flags, policy=policy,
                            seed=seed, gen=gen)[0]
        for s in suites
    ]
