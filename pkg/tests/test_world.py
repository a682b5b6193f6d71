"""World geometry, ray casting, and the synthetic tile scorer."""

import math

import numpy as np
import pytest
from scipy import stats as scipy_stats

from eznav.geometry import Pose, camera_from_hfov
from eznav.pyramid import GridShape, PyramidLayout
from eznav.world import (
    Box,
    OcclusionEvent,
    OcclusionKind,
    OcclusionScript,
    ScorerParams,
    TargetSpec,
    WorldSpec,
    range_scan,
    render_score_grid,
    target_descriptor,
    visibility_fraction,
)


def open_world(width=200.0, height=100.0, target=(150.0, 50.0), extent=(10.0, 10.0),
               occluders=()):
    return WorldSpec(
        width=width, height=height, occluders=tuple(occluders),
        target=TargetSpec(position=np.array(target), extent=extent),
        start_pose=(5.0, 50.0, 0.0),
    )


def default_layout():
    return PyramidLayout(levels=(GridShape(8, 12), GridShape(4, 6), GridShape(2, 3)),
                         image_width=960, image_height=480)


CAM = camera_from_hfov(960, 480, math.radians(90.0))


class TestVisibilityFraction:
    def test_open_space(self):
        assert visibility_fraction(open_world(), (5.0, 50.0)) == 1.0

    def test_total_block(self):
        wall = Box(70.0, 20.0, 4.0, 60.0, height_m=10.0)
        w = open_world(occluders=[wall])
        assert visibility_fraction(w, (5.0, 50.0)) == 0.0

    def test_half_block(self):
        # wall covering exactly the lower half of the target's extent corridor
        wall = Box(100.0, 20.0, 4.0, 30.0, height_m=10.0)
        w = open_world(target=(150.0, 50.0), extent=(10.0, 10.0), occluders=[wall])
        v = visibility_fraction(w, (5.0, 50.0), n_samples=16)
        # brute force over the same sample rays
        assert 0.5 - 1.0 / 16 <= v <= 0.5 + 1.0 / 16

    def test_low_box_does_not_block_high_sightline(self):
        low = Box(70.0, 40.0, 6.0, 20.0, height_m=1.0)
        w = open_world(occluders=[low])
        assert visibility_fraction(w, (5.0, 50.0), camera_height=0.8) == 1.0

    def test_low_box_blocks_when_close(self):
        # sight height over a box 2 m ahead is barely above camera height
        low = Box(7.0, 40.0, 2.0, 20.0, height_m=1.5)
        w = open_world(occluders=[low])
        assert visibility_fraction(w, (5.0, 50.0), camera_height=0.8) == 0.0

    def test_monotone_in_occluder_width(self):
        prev = 1.1
        for width in (2.0, 6.0, 10.0, 14.0, 18.0):
            wall = Box(100.0, 50.0 - width / 2, 4.0, width, height_m=10.0)
            v = visibility_fraction(open_world(occluders=[wall]), (5.0, 50.0))
            assert v <= prev + 1e-9
            prev = v


class TestRangeScan:
    def test_open_space_all_max(self):
        w = open_world()
        scan = range_scan(w, (100.0, 50.0, 0.0), n_beams=36, max_range=20.0)
        assert not scan.hit.any()
        assert np.all(scan.distances == 20.0)

    def test_wall_ahead(self):
        wall = Box(105.0, 40.0, 4.0, 20.0, height_m=5.0)
        w = open_world(occluders=[wall])
        scan = range_scan(w, (100.0, 50.0, 0.0), n_beams=72, max_range=20.0)
        forward = np.argmin(np.abs(scan.bearings))
        assert scan.hit[forward]
        assert scan.distances[forward] == pytest.approx(5.0, abs=1e-9)

    def test_world_boundary_hits(self):
        w = open_world(width=30.0, height=30.0, target=(25.0, 25.0))
        scan = range_scan(w, (15.0, 15.0, 0.0), n_beams=8, max_range=100.0)
        assert scan.hit.all()
        forward = np.argmin(np.abs(scan.bearings))
        assert scan.distances[forward] == pytest.approx(15.0, abs=1e-9)

    def test_matches_bruteforce_segment_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            boxes = [Box(float(rng.uniform(10, 80)), float(rng.uniform(10, 80)),
                         float(rng.uniform(2, 10)), float(rng.uniform(2, 10)),
                         height_m=5.0) for _ in range(4)]
            w = open_world(width=100.0, height=100.0, target=(90.0, 90.0),
                           occluders=boxes)
            rx, ry = float(rng.uniform(20, 70)), float(rng.uniform(20, 70))
            if any(b.contains(rx, ry) for b in boxes):
                continue
            scan = range_scan(w, (rx, ry, 0.0), n_beams=16, max_range=25.0)
            for bearing, dist, hit in zip(scan.bearings, scan.distances, scan.hit):
                # sample densely along the beam: first blocked sample bounds the hit
                ts = np.linspace(0.0, 25.0, 2501)
                xs = rx + np.cos(bearing) * ts
                ys = ry + np.sin(bearing) * ts
                inside = np.zeros_like(ts, dtype=bool)
                for b in boxes:
                    inside |= ((xs >= b.x) & (xs <= b.x + b.w)
                               & (ys >= b.y) & (ys <= b.y + b.h))
                outside_world = (xs < 0) | (xs > 100.0) | (ys < 0) | (ys > 100.0)
                blocked = inside | outside_world
                if blocked.any():
                    first = ts[int(np.argmax(blocked))]
                    if first <= 25.0 - 0.02:
                        assert hit
                        assert dist == pytest.approx(first, abs=0.02)
                        continue
                assert not hit or dist >= 25.0 - 0.02


class TestRenderScoreGrid:
    def test_far_target_boosts_single_fine_tile(self):
        w = open_world(width=220.0, target=(155.0, 50.0), extent=(10.0, 10.0))
        pose = Pose.level_camera(5.0, 50.0, 0.8, 0.0)
        params = ScorerParams(noise_std=0.0, signal_gain=0.9)
        rng_a, rng_b = np.random.default_rng(1), np.random.default_rng(1)
        with_sig = render_score_grid(w, CAM, pose, default_layout(), params, False, rng_a)
        no_sig = render_score_grid(
            w, CAM, pose, default_layout(),
            ScorerParams(noise_std=0.0, signal_gain=0.0), False, rng_b,
        )
        diff = with_sig[0].scores - no_sig[0].scores
        assert np.count_nonzero(diff > 1e-9) == 1
        # angular width ~3.8 degrees within a 7.5-degree tile
        assert (CAM.fx * 10.0 / 150.0) < 960 / 12

    def test_zero_gain_identical_to_noise(self):
        w = open_world()
        pose = Pose.level_camera(5.0, 50.0, 0.8, 0.0)
        a = render_score_grid(w, CAM, pose, default_layout(),
                              ScorerParams(signal_gain=0.0), False,
                              np.random.default_rng(7))
        b = render_score_grid(w, CAM, pose, default_layout(),
                              ScorerParams(signal_gain=0.9), True,
                              np.random.default_rng(7))
        for ga, gb in zip(a, b):
            assert np.array_equal(ga.scores, gb.scores)

    def test_script_active_indistinguishable_from_noise(self):
        w = open_world(target=(30.0, 50.0))
        pose = Pose.level_camera(5.0, 50.0, 0.8, 0.0)
        scripted = []
        noise_only = []
        rng_a = np.random.default_rng(11)
        rng_b = np.random.default_rng(12)
        for _ in range(200):
            g = render_score_grid(w, CAM, pose, default_layout(),
                                  ScorerParams(), True, rng_a)
            scripted.extend(g[0].scores.reshape(-1).tolist())
            g = render_score_grid(w, CAM, pose, default_layout(),
                                  ScorerParams(signal_gain=0.0), False, rng_b)
            noise_only.extend(g[0].scores.reshape(-1).tolist())
        ks = scipy_stats.ks_2samp(scripted, noise_only)
        assert ks.pvalue > 0.01

    def test_boosted_tile_count_shrinks_with_distance(self):
        pose = Pose.level_camera(5.0, 50.0, 0.8, 0.0)
        params = ScorerParams(noise_std=0.0, signal_gain=0.9)
        counts = []
        for dist in (15.0, 40.0, 150.0):
            w = open_world(width=220.0, target=(5.0 + dist, 50.0), extent=(10.0, 10.0))
            grids = render_score_grid(w, CAM, pose, default_layout(), params, False,
                                      np.random.default_rng(0))
            counts.append(int(np.count_nonzero(grids[0].scores > 1e-9)))
        assert counts[0] > counts[1] > counts[2] >= 1

    def test_descriptor_blend_marks_target_tile(self):
        w = open_world(width=220.0, target=(60.0, 50.0), extent=(10.0, 10.0))
        pose = Pose.level_camera(5.0, 50.0, 0.8, 0.0)
        grids = render_score_grid(w, CAM, pose, default_layout(), ScorerParams(),
                                  False, np.random.default_rng(3))
        finest = grids[0]
        tile = np.unravel_index(int(np.argmax(finest.scores)), finest.scores.shape)
        cos = float(np.dot(finest.descriptors[tile], target_descriptor(16)))
        assert cos > 0.99  # fully visible: descriptor is the target signature

    def test_determinism(self):
        w = open_world()
        pose = Pose.level_camera(5.0, 50.0, 0.8, 0.1)
        a = render_score_grid(w, CAM, pose, default_layout(), ScorerParams(), False,
                              np.random.default_rng(5))
        b = render_score_grid(w, CAM, pose, default_layout(), ScorerParams(), False,
                              np.random.default_rng(5))
        for ga, gb in zip(a, b):
            assert np.array_equal(ga.scores, gb.scores)
            assert np.array_equal(ga.descriptors, gb.descriptors)


class TestOcclusionScript:
    def test_active_windows(self):
        script = OcclusionScript(events=(
            OcclusionEvent(5.0, 3.0, OcclusionKind.SHORT),
            OcclusionEvent(12.0, 8.0, OcclusionKind.LONG),
        ))
        assert not script.active(4.9)
        assert script.active(5.0) and script.active(7.9)
        assert not script.active(8.0)
        assert script.label == "mixed"

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            OcclusionScript(events=(
                OcclusionEvent(5.0, 3.0, OcclusionKind.SHORT),
                OcclusionEvent(6.0, 3.0, OcclusionKind.SHORT),
            ))

    def test_ramp_weight(self):
        script = OcclusionScript(events=(OcclusionEvent(10.0, 3.0, OcclusionKind.SHORT),),
                                 ramp_s=2.0)
        assert script.weight(7.9) == 1.0
        assert script.weight(10.5) == 0.0
        assert 0.0 < script.weight(9.0) < 1.0
        assert script.weight(9.0) == pytest.approx(0.25, abs=1e-12)  # quadratic

    def test_world_validation(self):
        w = open_world()
        w.validate(min_start_distance=10.0)
        with pytest.raises(ValueError):
            open_world(target=(6.0, 50.0)).validate(min_start_distance=10.0)
