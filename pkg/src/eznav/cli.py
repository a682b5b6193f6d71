"""Operator entry point.

Subcommands:
  perceive  run fusion + visibility on a score-grid file (exit 0 visible,
            3 not visible, 1 malformed file, 2 layout mismatch)
  episode   run one episode from a config (exit 0 success, 4 not reached,
            1 invalid config)
  bench     perception / occlusion benchmarks with ablation sweeps
            (exit 0, 1 invalid config)

Every command that writes results puts a manifest.json into the output
directory before any result file, so a run can be reproduced from the
manifest alone. EZNAV_LOG sets the log level.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .config import InvalidConfigError, config_to_dict, load_config
from .episode import (
    run_episode,
    write_events_jsonl,
    write_summary_json,
    write_trajectory_jsonl,
)
from .evaluation import (
    BENCH_DISTANCES,
    OCCLUSION_SUITES,
    SuiteGenParams,
    run_occlusion_suite,
    run_perception_bench,
)
from .geometry import CameraModel, Pose, pixel_to_ray, ray_to_world
from .pipeline import AblationFlags
from .pyramid import FusionParams, LayoutError, anchor_pixel, fuse_pyramid
from .scoregrid_io import MalformedScoreGridError, load_scoregrid_file
from .visibility import VisibilityParams, detect_from_matrices

log = logging.getLogger("eznav")

EXIT_OK = 0
EXIT_MALFORMED = 1
EXIT_LAYOUT = 2
EXIT_NOT_VISIBLE = 3
EXIT_NOT_REACHED = 4


def _setup_logging() -> None:
    level = os.environ.get("EZNAV_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _write_manifest(out_dir: Path, command: str, config_path: str | None,
                    seed: int | None, flags: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config_path": config_path,
        "seed": seed,
        "flags": flags,
        "output_dir": str(out_dir),
        "tool_version": __version__,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _parse_flag_list(spec: str | None) -> list[str]:
    if not spec:
        return []
    names = [s.strip() for s in spec.split(",") if s.strip()]
    valid = set(AblationFlags.__dataclass_fields__)
    for n in names:
        if n not in valid:
            raise InvalidConfigError(f"unknown ablation flag '{n}' (choose from {sorted(valid)})")
    return names


# ---------------------------------------------------------------------------
# perceive


def _load_perceive_params(path: str | None):
    fusion = FusionParams()
    vis = VisibilityParams()
    camera = None
    camera_height = 0.8
    if path:
        doc = yaml.safe_load(Path(path).read_text()) or {}
        py = doc.get("pyramid", {})
        if py:
            clip = py.get("sigma_clip", (0.0, 1.0))
            fusion = FusionParams(
                base=float(py.get("base", 1.5)),
                sigma_clip_lo=float(clip[0]), sigma_clip_hi=float(clip[1]),
                top_k_per_step=tuple(int(k) for k in py.get("top_k", (2, 1))),
                sigma_from_fused=bool(py.get("sigma_from_fused", True)),
            )
        vd = doc.get("visibility", {})
        if vd:
            vis = VisibilityParams(
                w_r=float(vd.get("w_r", 1.5)), w_sigma=float(vd.get("w_sigma", 0.05)),
                epsilon=float(vd.get("epsilon", 1e-6)),
                use_fused=bool(vd.get("use_fused", True)),
            )
        cd = dict(doc.get("camera", {}))
        if cd:
            camera_height = float(cd.pop("height_m", 0.8))
            camera = CameraModel(
                fx=float(cd["fx"]), fy=float(cd.get("fy", cd["fx"])),
                cx=float(cd.get("cx", float(cd.get("width", 960)) / 2)),
                cy=float(cd.get("cy", float(cd.get("height", 480)) / 2)),
                width=int(cd.get("width", 960)), height=int(cd.get("height", 480)),
            )
    return fusion, vis, camera, camera_height


def cmd_perceive(args) -> int:
    try:
        layout, grids, prompt = load_scoregrid_file(args.scoregrid)
    except MalformedScoreGridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except LayoutError as exc:
        print(f"layout error: {exc}", file=sys.stderr)
        return EXIT_LAYOUT

    fusion, vis, camera, camera_height = _load_perceive_params(args.params)
    fp = fuse_pyramid(grids, layout, fusion)
    mats = fp.fused if vis.use_fused else [g.scores for g in fp.raw]
    verdict = detect_from_matrices(list(mats), vis)
    u, v = anchor_pixel(fp, refine=args.refine_anchor)

    report = {
        "prompt": prompt,
        "image_size": [layout.image_width, layout.image_height],
        "levels": [[s.rows, s.cols] for s in layout.levels],
        "visible": verdict.visible,
        "deciding_level": verdict.deciding_level,
        "anchor_tile": [fp.anchor[0], fp.anchor[1]],
        "anchor_pixel": [u, v],
        "level_stats": [
            {"level": s.level, "mean": s.mean, "std": s.std, "max": s.max, "ratio": s.ratio}
            for s in verdict.stats
        ],
    }
    if camera is not None:
        pose = Pose.level_camera(0.0, 0.0, camera_height, 0.0)
        uu = min(max(u, 0.0), camera.width - 1e-6)
        vv = min(max(v, 0.0), camera.height - 1e-6)
        est = ray_to_world(pose, pixel_to_ray(camera, (uu, vv)))
        report["direction_world"] = [float(x) for x in est.direction]
        report["bearing_rad"] = est.bearing

    if args.out:
        out_dir = Path(args.out)
        _write_manifest(out_dir, "perceive", args.scoregrid, None,
                        {"params": args.params, "refine_anchor": args.refine_anchor})
        (out_dir / "perception.json").write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK if verdict.visible else EXIT_NOT_VISIBLE


# ---------------------------------------------------------------------------
# episode


def cmd_episode(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.refine_anchor:
            cfg.refine_anchor = True
        cfg.validate()
    except InvalidConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_MALFORMED

    out_dir = Path(args.out)
    _write_manifest(out_dir, "episode", str(args.config), cfg.seed,
                    {"refine_anchor": cfg.refine_anchor})
    result = run_episode(cfg)
    write_trajectory_jsonl(result, out_dir / "trajectory.jsonl")
    write_events_jsonl(result, out_dir / "events.jsonl")
    write_summary_json(result, out_dir / "summary.json")
    (out_dir / "config.resolved.json").write_text(
        json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")
    from .plots import episode_figure

    episode_figure(result, cfg.world, out_dir / "trajectory.png")
    print(json.dumps(result.summary_dict(), indent=2, sort_keys=True))
    return EXIT_OK if result.success else EXIT_NOT_REACHED


# ---------------------------------------------------------------------------
# bench


def _load_bench_config(path: str | None) -> dict:
    if not path:
        return {}
    doc = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(doc, dict):
        raise InvalidConfigError("bench config must be a mapping")
    allowed = {"episodes_per_suite", "trials_per_distance", "seed", "gen"}
    extra = set(doc) - allowed
    if extra:
        raise InvalidConfigError(f"unknown keys in bench config: {sorted(extra)}")
    return doc


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _bench_perception(args, out_dir: Path, bench_cfg: dict) -> int:
    distances = tuple(float(d) for d in args.distances.split(",")) if args.distances \
        else BENCH_DISTANCES
    trials = int(bench_cfg.get("trials_per_distance", 40))
    seed = args.seed if args.seed is not None else int(bench_cfg.get("seed", 0))
    variants: dict[str, AblationFlags] = {"full": AblationFlags()}
    for name in _parse_flag_list(args.ablate):
        variants[f"no_{name}"] = AblationFlags().disable(name)

    rows_by_variant = {}
    csv_rows = []
    for label, flags in variants.items():
        rows = run_perception_bench(distances, trials, flags=flags, seed=seed)
        rows_by_variant[label] = rows
        for r in rows:
            csv_rows.append([label, r.distance_m, f"{r.e_avg_rad:.6f}",
                             f"{r.e_avg_deg:.3f}", f"{r.detection_rate:.4f}", r.n_trials])
    _write_csv(out_dir / "perception_results.csv",
               ["variant", "distance_m", "e_avg_rad", "e_avg_deg", "detection_rate", "n_trials"],
               csv_rows)
    from .plots import perception_figure

    perception_figure(rows_by_variant, out_dir / "perception_error.png")
    print(f"wrote {out_dir / 'perception_results.csv'}")
    for row in csv_rows:
        print("  " + " ".join(str(v) for v in row))
    return EXIT_OK


def _bench_occlusion(args, out_dir: Path, bench_cfg: dict) -> int:
    suites = OCCLUSION_SUITES if args.suite in (None, "all") else (args.suite,)
    episodes = int(bench_cfg.get("episodes_per_suite", 20))
    seed = args.seed if args.seed is not None else int(bench_cfg.get("seed", 0))
    gen = SuiteGenParams(**bench_cfg.get("gen", {}))

    policies = ["full", "fixed_heading"] if args.policy == "both" else [
        args.policy.replace("-", "_")
    ]
    runs: list[tuple[str, AblationFlags, str]] = []
    for pol in policies:
        runs.append((pol, AblationFlags(), pol))
    for name in _parse_flag_list(args.ablate):
        runs.append(("full", AblationFlags().disable(name), f"no_{name}"))

    results = []
    csv_rows = []
    for policy, flags, label in runs:
        for suite in suites:
            summary, _ = run_occlusion_suite(suite, episodes, flags=flags,
                                             policy=policy, seed=seed, gen=gen)
            summary.policy = label
            results.append(summary)
            csv_rows.append([
                label, suite,
                "n/a" if summary.rsr_percent is None else f"{summary.rsr_percent:.2f}",
                "n/a" if summary.rpl_meters is None else f"{summary.rpl_meters:.2f}",
                f"{summary.sr_percent:.2f}",
                summary.n_episodes, summary.n_intervals,
            ])
    _write_csv(out_dir / "occlusion_results.csv",
               ["run", "suite", "rsr_percent", "rpl_m", "sr_percent",
                "n_episodes", "n_intervals"],
               csv_rows)
    from .plots import occlusion_figure

    occlusion_figure(results, out_dir / "occlusion_bars.png")
    print(f"wrote {out_dir / 'occlusion_results.csv'}")
    for row in csv_rows:
        print("  " + " ".join(str(v) for v in row))
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        bench_cfg = _load_bench_config(args.config)
        out_dir = Path(args.out)
        seed = args.seed if args.seed is not None else int(bench_cfg.get("seed", 0))
        _write_manifest(out_dir, f"bench {args.kind}", args.config, seed, {
            "suite": args.suite, "policy": args.policy, "distances": args.distances,
            "ablate": args.ablate,
        })
        if args.kind == "perception":
            return _bench_perception(args, out_dir, bench_cfg)
        return _bench_occlusion(args, out_dir, bench_cfg)
    except InvalidConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_MALFORMED


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eznav", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("perceive", help="fuse + judge a score-grid file")
    p.add_argument("scoregrid", help="path to a score-grid JSON file")
    p.add_argument("--params", default=None, help="YAML with pyramid/visibility/camera params")
    p.add_argument("--refine-anchor", action="store_true",
                   help="descend to the finest tile for the anchor pixel")
    p.add_argument("--out", default=None, help="optional output directory")
    p.set_defaults(func=cmd_perceive)

    p = sub.add_parser("episode", help="run a single episode")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--refine-anchor", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_episode)

    p = sub.add_parser("bench", help="run a benchmark")
    p.add_argument("kind", choices=["perception", "occlusion"])
    p.add_argument("--config", default=None, help="bench config YAML (optional)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--suite", default=None, choices=[*OCCLUSION_SUITES, "all"],
                   help="occlusion suite (default all)")
    p.add_argument("--policy", default="full", choices=["full", "fixed-heading", "both"])
    p.add_argument("--distances", default=None,
                   help="comma list of target distances for perception")
    p.add_argument("--ablate", default=None, help="comma list of flags to disable")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
