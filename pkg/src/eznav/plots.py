"""Figure rendering for episode and benchmark reports.

All figures are written to files (Agg backend); nothing opens a window. PNG
metadata is pinned so re-runs produce byte-identical images.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.patches import Circle, Rectangle

_MODE_COLORS = {
    "track_visible": "#2a9d2a",
    "occluded_fused": "#e6a400",
    "active_search": "#d95f02",
    "fallback": "#c02020",
    "done": "#1f6fd0",
    "failed": "#555555",
}

_PNG_META = {"Software": "eznav"}


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)


def episode_figure(result, world, path: str | Path) -> None:
    """Top-down view: occluders, target, start, and the mode-colored path."""
    fig, ax = plt.subplots(figsize=(7.5, 6.0))
    for box in world.occluders:
        ax.add_patch(Rectangle((box.x, box.y), box.w, box.h,
                               facecolor="#9a9a9a", edgecolor="#4c4c4c"))
    tx, ty = world.target.position
    ax.add_patch(Circle((tx, ty), 1.2, facecolor="#d03030", edgecolor="none", zorder=5))
    ax.annotate("target", (tx, ty), textcoords="offset points", xytext=(6, 6), fontsize=8)
    sx, sy, _ = world.start_pose
    ax.plot(sx, sy, marker="^", color="k", markersize=8, zorder=5)

    seen = set()
    for rec in result.trajectory:
        x, y, _ = rec["pose"]
        mode = rec["mode"]
        label = mode if mode not in seen else None
        seen.add(mode)
        ax.plot(x, y, ".", color=_MODE_COLORS.get(mode, "k"), markersize=2.5, label=label)
    ax.set_xlim(0, world.width)
    ax.set_ylim(0, world.height)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    status = "success" if result.success else f"{result.final_mode.value}"
    ax.set_title(f"episode: {status}, {result.steps} steps, {result.path_length:.1f} m")
    ax.legend(loc="upper left", fontsize=7, markerscale=3)
    _save(fig, path)


def perception_figure(rows_by_variant: dict[str, list], path: str | Path) -> None:
    """Penalized angular error vs target distance, one curve per variant."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for name, rows in rows_by_variant.items():
        ax.plot([r.distance_m for r in rows], [r.e_avg_rad for r in rows],
                marker="o", label=name)
    ax.axhline(math.pi, color="#999999", linestyle=":", linewidth=1)
    ax.text(0.02, 0.97, "pi = all missed", transform=ax.transAxes,
            fontsize=7, va="top", color="#777777")
    ax.set_xlabel("target distance [m]")
    ax.set_ylabel("penalized angular error [rad]")
    ax.set_ylim(0, math.pi * 1.08)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    _save(fig, path)


def occlusion_figure(suite_results: list, path: str | Path) -> None:
    """Grouped bars of RSR / RPL / SR per suite, one group color per run label."""
    labels = []
    for r in suite_results:
        lbl = f"{r.policy}"
        if lbl not in labels:
            labels.append(lbl)
    suites = []
    for r in suite_results:
        if r.suite not in suites:
            suites.append(r.suite)

    fig, axes = plt.subplots(1, 3, figsize=(11, 3.6))
    metrics = [("RSR [%]", "rsr_percent"), ("RPL [m]", "rpl_meters"), ("SR [%]", "sr_percent")]
    width = 0.8 / max(1, len(labels))
    for ax, (title, attr) in zip(axes, metrics):
        for li, lbl in enumerate(labels):
            xs, ys = [], []
            for si, suite in enumerate(suites):
                match = [r for r in suite_results if r.suite == suite and r.policy == lbl]
                if not match:
                    continue
                val = getattr(match[0], attr)
                xs.append(si + li * width)
                ys.append(0.0 if val is None else val)
            ax.bar(xs, ys, width=width, label=lbl)
        ax.set_xticks([i + width * (len(labels) - 1) / 2 for i in range(len(suites))])
        ax.set_xticklabels(suites, fontsize=8)
        ax.set_title(title, fontsize=9)
        ax.grid(axis="y", alpha=0.3)
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)
