"""Episode configuration: one YAML document drives every command.

The schema is versioned via `config_version`. Unknown keys are rejected so
typos fail loudly instead of silently running defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .geometry import CameraModel, camera_from_hfov
from .navigator import NavConfig
from .pipeline import AblationFlags
from .pyramid import FusionParams, GridShape, PyramidLayout, validate_layout
from .visibility import VisibilityParams
from .world import (
    Box,
    OcclusionEvent,
    OcclusionKind,
    OcclusionScript,
    ScorerParams,
    TargetSpec,
    WorldSpec,
)

CONFIG_VERSION = 1


class InvalidConfigError(ValueError):
    """The episode configuration failed validation."""


@dataclass
class SensorConfig:
    n_beams: int = 72
    fov: float = 2.0 * math.pi
    max_range: float = 20.0


@dataclass
class EpisodeConfig:
    world: WorldSpec
    camera: CameraModel
    camera_height: float
    scorer: ScorerParams
    layout: PyramidLayout
    fusion: FusionParams
    visibility: VisibilityParams
    nav: NavConfig
    sensor: SensorConfig
    script: OcclusionScript
    flags: AblationFlags
    grid_resolution: float = 0.5
    seed: int = 0
    step_budget: int = 900
    min_start_distance: float = 25.0
    refine_anchor: bool = False
    # scripted occlusion only applies beyond this distance to the target
    script_min_distance: float = 10.0

    def validate(self) -> None:
        try:
            self.world.validate(self.min_start_distance)
            validate_layout(self.layout)
        except ValueError as exc:
            raise InvalidConfigError(str(exc)) from exc
        if self.script.active(0.0):
            raise InvalidConfigError("an occlusion must not cover the initial observation")
        from .world import visibility_fraction

        sx, sy, _ = self.world.start_pose
        if visibility_fraction(self.world, (sx, sy), camera_height=self.camera_height) \
                < 0.75:
            raise InvalidConfigError(
                "the target must be clearly visible from the start pose")
        if self.step_budget < 1:
            raise InvalidConfigError("step_budget must be positive")


def _require_keys(section: dict, allowed: set[str], where: str) -> None:
    extra = set(section) - allowed
    if extra:
        raise InvalidConfigError(f"unknown keys in {where}: {sorted(extra)}")


def _parse_camera(d: dict) -> CameraModel:
    _require_keys(d, {"width", "height", "hfov_deg", "fx", "fy", "cx", "cy", "height_m"}, "camera")
    width = int(d.get("width", 960))
    height = int(d.get("height", 480))
    if "fx" in d:
        return CameraModel(fx=float(d["fx"]), fy=float(d.get("fy", d["fx"])),
                           cx=float(d.get("cx", width / 2.0)), cy=float(d.get("cy", height / 2.0)),
                           width=width, height=height)
    hfov = math.radians(float(d.get("hfov_deg", 90.0)))
    return camera_from_hfov(width, height, hfov)


def _parse_world(d: dict) -> WorldSpec:
    _require_keys(d, {"width", "height", "occluders", "target", "start_pose"}, "world")
    occluders = tuple(
        Box(x=float(o["x"]), y=float(o["y"]), w=float(o["w"]), h=float(o["h"]),
            height_m=float(o["height_m"]))
        for o in d.get("occluders", [])
    )
    t = d["target"]
    target = TargetSpec(position=np.array([float(t["position"][0]), float(t["position"][1])]),
                        extent=(float(t["extent"][0]), float(t["extent"][1])))
    sp = d["start_pose"]
    return WorldSpec(width=float(d["width"]), height=float(d["height"]),
                     occluders=occluders, target=target,
                     start_pose=(float(sp[0]), float(sp[1]), float(sp[2])))


def _parse_script(entries: list) -> OcclusionScript:
    events = []
    for e in entries or []:
        kind = OcclusionKind(e.get("kind", "short"))
        events.append(OcclusionEvent(t_start=float(e["t_start"]),
                                     duration=float(e["duration"]), kind=kind))
    return OcclusionScript(events=tuple(events))


_TOP_KEYS = {
    "config_version", "seed", "step_budget", "min_start_distance", "grid_resolution",
    "refine_anchor", "world", "camera", "scorer", "pyramid", "visibility", "navigator",
    "sensor", "occlusion_script", "flags",
}


def config_from_dict(doc: dict) -> EpisodeConfig:
    if not isinstance(doc, dict):
        raise InvalidConfigError("config document must be a mapping")
    _require_keys(doc, _TOP_KEYS, "config")
    version = doc.get("config_version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise InvalidConfigError(f"unsupported config_version {version}")
    if "world" not in doc:
        raise InvalidConfigError("config requires a world section")

    try:
        world = _parse_world(doc["world"])
        cam_doc = dict(doc.get("camera", {}))
        camera_height = float(cam_doc.pop("height_m", 0.8))
        camera = _parse_camera(cam_doc)

        sc = doc.get("scorer", {})
        _require_keys(sc, {"noise_mean", "noise_std", "signal_gain", "distance_ref",
                           "descriptor_dim", "rng_seed"}, "scorer")
        scorer = ScorerParams(**{k: v for k, v in sc.items()})

        py = doc.get("pyramid", {})
        _require_keys(py, {"levels", "base", "top_k", "sigma_clip", "sigma_from_fused"}, "pyramid")
        levels = tuple(GridShape(int(r), int(c)) for r, c in py.get("levels", ((8, 12), (4, 6), (2, 3))))
        layout = PyramidLayout(levels=levels, image_width=camera.width, image_height=camera.height)
        clip = py.get("sigma_clip", (0.0, 1.0))
        fusion = FusionParams(
            base=float(py.get("base", 1.5)),
            sigma_clip_lo=float(clip[0]),
            sigma_clip_hi=float(clip[1]),
            top_k_per_step=tuple(int(k) for k in py.get("top_k", (2, 1))),
            sigma_from_fused=bool(py.get("sigma_from_fused", True)),
        )

        vd = doc.get("visibility", {})
        _require_keys(vd, {"w_r", "w_sigma", "epsilon", "use_fused"}, "visibility")
        vis = VisibilityParams(**{k: float(v) if k != "use_fused" else bool(v)
                                  for k, v in vd.items()})

        nd = dict(doc.get("navigator", {}))
        for deg_key, rad_key in (("scan_step_deg", "scan_step"), ("scan_range_deg", "scan_range"),
                                 ("fallback_step_deg", "fallback_step")):
            if deg_key in nd:
                nd[rad_key] = math.radians(float(nd.pop(deg_key)))
        allowed_nav = set(NavConfig.__dataclass_fields__) - {"vis_params"}
        _require_keys(nd, allowed_nav, "navigator")
        nav = NavConfig(**nd, vis_params=vis)

        sd = doc.get("sensor", {})
        _require_keys(sd, {"n_beams", "fov_deg", "max_range"}, "sensor")
        sensor = SensorConfig(
            n_beams=int(sd.get("n_beams", 72)),
            fov=math.radians(float(sd.get("fov_deg", 360.0))),
            max_range=float(sd.get("max_range", 20.0)),
        )

        fd = doc.get("flags", {})
        _require_keys(fd, set(AblationFlags.__dataclass_fields__), "flags")
        flags = AblationFlags(**fd)

        cfg = EpisodeConfig(
            world=world,
            camera=camera,
            camera_height=camera_height,
            scorer=scorer,
            layout=layout,
            fusion=fusion,
            visibility=vis,
            nav=nav,
            sensor=sensor,
            script=_parse_script(doc.get("occlusion_script", [])),
            flags=flags,
            grid_resolution=float(doc.get("grid_resolution", 0.5)),
            seed=int(doc.get("seed", 0)),
            step_budget=int(doc.get("step_budget", 900)),
            min_start_distance=float(doc.get("min_start_distance", 25.0)),
            refine_anchor=bool(doc.get("refine_anchor", False)),
        )
    except InvalidConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidConfigError(f"malformed config: {exc}") from exc
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> EpisodeConfig:
    p = Path(path)
    if not p.exists():
        raise InvalidConfigError(f"config file not found: {p}")
    try:
        doc = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise InvalidConfigError(f"config is not valid YAML: {exc}") from exc
    return config_from_dict(doc)


def config_to_dict(cfg: EpisodeConfig) -> dict:
    """Round-trippable plain-dict form (used by manifests and world generators)."""
    return {
        "config_version": CONFIG_VERSION,
        "seed": cfg.seed,
        "step_budget": cfg.step_budget,
        "min_start_distance": cfg.min_start_distance,
        "grid_resolution": cfg.grid_resolution,
        "refine_anchor": cfg.refine_anchor,
        "world": {
            "width": cfg.world.width,
            "height": cfg.world.height,
            "occluders": [
                {"x": b.x, "y": b.y, "w": b.w, "h": b.h, "height_m": b.height_m}
                for b in cfg.world.occluders
            ],
            "target": {
                "position": [float(cfg.world.target.position[0]),
                             float(cfg.world.target.position[1])],
                "extent": [cfg.world.target.extent[0], cfg.world.target.extent[1]],
            },
            "start_pose": list(cfg.world.start_pose),
        },
        "camera": {
            "width": cfg.camera.width, "height": cfg.camera.height,
            "fx": cfg.camera.fx, "fy": cfg.camera.fy,
            "cx": cfg.camera.cx, "cy": cfg.camera.cy,
            "height_m": cfg.camera_height,
        },
        "scorer": {
            "noise_mean": cfg.scorer.noise_mean, "noise_std": cfg.scorer.noise_std,
            "signal_gain": cfg.scorer.signal_gain, "distance_ref": cfg.scorer.distance_ref,
            "descriptor_dim": cfg.scorer.descriptor_dim, "rng_seed": cfg.scorer.rng_seed,
        },
        "pyramid": {
            "levels": [[s.rows, s.cols] for s in cfg.layout.levels],
            "base": cfg.fusion.base,
            "top_k": list(cfg.fusion.top_k_per_step),
            "sigma_clip": [cfg.fusion.sigma_clip_lo, cfg.fusion.sigma_clip_hi],
            "sigma_from_fused": cfg.fusion.sigma_from_fused,
        },
        "visibility": {
            "w_r": cfg.visibility.w_r, "w_sigma": cfg.visibility.w_sigma,
            "epsilon": cfg.visibility.epsilon, "use_fused": cfg.visibility.use_fused,
        },
        "navigator": {
            k: getattr(cfg.nav, k)
            for k in NavConfig.__dataclass_fields__ if k != "vis_params"
        },
        "sensor": {
            "n_beams": cfg.sensor.n_beams,
            "fov_deg": math.degrees(cfg.sensor.fov),
            "max_range": cfg.sensor.max_range,
        },
        "occlusion_script": [
            {"t_start": e.t_start, "duration": e.duration, "kind": e.kind.value}
            for e in cfg.script.events
        ],
        "flags": {k: getattr(cfg.flags, k) for k in AblationFlags.__dataclass_fields__},
    }
