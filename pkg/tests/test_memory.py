"""Keyframe window, weighted direction fusion, re-identification."""

import math

import numpy as np
import pytest

from eznav.geometry import DirectionSource, Pose
from eznav.memory import (
    EmptyWindowError,
    Keyframe,
    KeyframeWindow,
    NonMonotonicTimeError,
    fuse_directions,
    fusion_weights,
    record_keyframe,
    reid_match,
)
from eznav.visibility import VisibilityParams


def kf(t, direction, ratio=2.0, local_std=0.1, descriptor=None, step=None):
    d = np.asarray(direction, float)
    d = d / np.linalg.norm(d)
    return Keyframe(
        timestamp=t,
        step=int(t * 5) if step is None else step,
        direction=d,
        robot_pose=Pose.from_yaw(0.0, 0.0, 0.0, 0.0),
        score=1.0,
        local_mean=0.3,
        local_std=local_std,
        level_std=0.08,
        sparsity_ratio=ratio,
        salient_descriptor=descriptor,
    )


def unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


class TestWindow:
    def test_append_and_capacity(self):
        w = KeyframeWindow(capacity=10)
        record_keyframe(w, kf(1.0, [1, 0, 0]))
        assert len(w) == 1
        for i in range(2, 13):
            record_keyframe(w, kf(float(i), [1, 0, 0]))
        assert len(w) == 10
        assert w.entries[0].timestamp == 3.0  # strictly FIFO eviction

    def test_non_monotonic_rejected(self):
        w = KeyframeWindow(capacity=3)
        record_keyframe(w, kf(2.0, [1, 0, 0]))
        with pytest.raises(NonMonotonicTimeError):
            record_keyframe(w, kf(2.0, [0, 1, 0]))
        with pytest.raises(NonMonotonicTimeError):
            record_keyframe(w, kf(1.0, [0, 1, 0]))


class TestFuseDirections:
    def test_single_keyframe_identity(self):
        w = KeyframeWindow()
        record_keyframe(w, kf(1.0, [0, 1, 0]))
        est = fuse_directions(w, now=5.0, decay=0.9)
        assert np.allclose(est.direction, [0, 1, 0], atol=1e-12)
        assert est.source is DirectionSource.KEYFRAME_FUSED

    def test_equal_weights_average(self):
        w = KeyframeWindow()
        record_keyframe(w, kf(1.0, [1, 0, 0]))
        record_keyframe(w, kf(1.0 + 1e-9, [0, 1, 0]))  # same age for practical purposes
        est = fuse_directions(w, now=10.0, decay=0.9)
        assert np.allclose(est.direction, [0.7071068, 0.7071068, 0.0], atol=1e-6)

    def test_antipodal_cancellation_falls_back_to_latest(self):
        w = KeyframeWindow()
        record_keyframe(w, kf(1.0, [1, 0, 0]))
        record_keyframe(w, kf(1.0 + 1e-12, [-1, 0, 0]))
        est = fuse_directions(w, now=2.0, decay=1.0)
        assert np.allclose(est.direction, [-1, 0, 0], atol=1e-12)
        assert est.confidence < 1e-6

    def test_weights_normalized_and_monotone_in_age(self):
        w = KeyframeWindow()
        for t in (1.0, 2.0, 3.0, 4.0):
            record_keyframe(w, kf(t, [1, 0, 0]))  # equal saliency products
        weights = fusion_weights(w, now=5.0, decay=0.9)
        assert weights.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(np.diff(weights) > 0)  # newer entries weigh more

    def test_weight_scale_invariance(self):
        a = KeyframeWindow()
        b = KeyframeWindow()
        for t, r in ((1.0, 1.5), (2.0, 3.0), (3.0, 2.2)):
            record_keyframe(a, kf(t, [1, 0, 0], ratio=r))
            record_keyframe(b, kf(t, [1, 0, 0], ratio=10 * r))
        wa = fusion_weights(a, now=4.0, decay=0.9)
        wb = fusion_weights(b, now=4.0, decay=0.9)
        assert np.allclose(wa, wb, atol=1e-12)

    def test_zero_saliency_products_fall_back_to_decay(self):
        w = KeyframeWindow()
        record_keyframe(w, kf(1.0, [1, 0, 0], local_std=0.0))
        record_keyframe(w, kf(2.0, [0, 1, 0], local_std=0.0))
        weights = fusion_weights(w, now=3.0, decay=0.5)
        assert weights.sum() == pytest.approx(1.0, abs=1e-9)
        assert weights[1] > weights[0]

    def test_empty_window_rejected(self):
        with pytest.raises(EmptyWindowError):
            fuse_directions(KeyframeWindow(), now=0.0, decay=0.9)

    def test_output_unit_norm(self):
        rng = np.random.default_rng(0)
        w = KeyframeWindow()
        for i in range(8):
            record_keyframe(w, kf(float(i), rng.normal(size=3),
                                  ratio=float(rng.uniform(0.5, 3.0)),
                                  local_std=float(rng.uniform(0.01, 0.2))))
        est = fuse_directions(w, now=10.0, decay=0.9)
        assert np.linalg.norm(est.direction) == pytest.approx(1.0, abs=1e-9)


class TestReidMatch:
    def test_identical_descriptor_passing_score(self):
        d = unit(np.arange(1, 17))
        w = KeyframeWindow()
        record_keyframe(w, kf(1.0, [1, 0, 0], descriptor=d))
        assert reid_match(d, 3.0, w, VisibilityParams(), tau_reid=0.8)

    def test_orthogonal_descriptor_fails(self):
        a = np.zeros(16)
        a[0] = 1.0
        b = np.zeros(16)
        b[1] = 1.0
        w = KeyframeWindow()
        record_keyframe(w, kf(1.0, [1, 0, 0], descriptor=a))
        assert not reid_match(b, 99.0, w, VisibilityParams(), tau_reid=0.8)

    def test_cosine_just_above_threshold(self):
        a = np.zeros(4)
        a[0] = 1.0
        c = math.cos(math.acos(0.85))
        cand = np.array([c, math.sin(math.acos(0.85)), 0.0, 0.0])
        w = KeyframeWindow()
        record_keyframe(w, kf(1.0, [1, 0, 0], descriptor=a))
        assert reid_match(cand, 3.0, w, VisibilityParams(), tau_reid=0.8)

    def test_score_below_ratio_threshold_fails(self):
        d = unit(np.ones(8))
        w = KeyframeWindow()
        record_keyframe(w, kf(1.0, [1, 0, 0], descriptor=d))
        assert not reid_match(d, 1.2, w, VisibilityParams(w_r=1.5), tau_reid=0.8)

    def test_max_over_window(self):
        a = np.zeros(4)
        a[0] = 1.0
        b = np.zeros(4)
        b[1] = 1.0
        w = KeyframeWindow()
        record_keyframe(w, kf(1.0, [1, 0, 0], descriptor=a))
        record_keyframe(w, kf(2.0, [1, 0, 0], descriptor=b))
        assert reid_match(a, 3.0, w, VisibilityParams(), tau_reid=0.99)

    def test_descriptorless_window_vacuous(self, caplog):
        w = KeyframeWindow()
        record_keyframe(w, kf(1.0, [1, 0, 0]))
        with caplog.at_level("WARNING"):
            assert reid_match(unit(np.ones(8)), 3.0, w, VisibilityParams(), tau_reid=0.8)
        assert any("descriptor" in r.message for r in caplog.records)

    def test_empty_window_rejected(self):
        with pytest.raises(EmptyWindowError):
            reid_match(unit(np.ones(4)), 3.0, KeyframeWindow(), VisibilityParams(), 0.8)
