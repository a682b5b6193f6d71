"""Tile layout validation and bottom-up fusion."""

import math

import numpy as np
import pytest

from eznav.pyramid import (
    FusionParams,
    GridShape,
    IndivisibleError,
    NonDyadicError,
    PyramidLayout,
    ScoreGrid,
    ShapeMismatchError,
    anchor_pixel,
    child_indices,
    default_layout,
    fuse_pyramid,
    fuse_step,
    validate_layout,
)


def scalar_fuse_oracle(parent, children, base, k, lo=0.0, hi=1.0):
    """Brute-force single-parent reference in plain Python arithmetic."""
    mean = sum(children) / len(children)
    var = sum((c - mean) ** 2 for c in children) / len(children)
    sigma = math.sqrt(var)
    sigma_hat = min(max(sigma, lo), hi)
    beta = base ** sigma_hat
    return parent + beta * sum(sorted(children)[-k:])


def make_layout(levels=((8, 12), (4, 6), (2, 3)), w=960, h=480):
    return PyramidLayout(levels=tuple(GridShape(*lv) for lv in levels),
                         image_width=w, image_height=h)


def grids_from_matrices(mats):
    return [ScoreGrid(shape=GridShape(*m.shape), scores=np.asarray(m, float)) for m in mats]


class TestLayout:
    def test_default_layout_valid(self):
        validate_layout(make_layout())

    def test_non_dyadic_rejected(self):
        with pytest.raises(NonDyadicError):
            validate_layout(make_layout(levels=((8, 12), (4, 6), (3, 3))))

    def test_indivisible_rejected(self):
        with pytest.raises(IndivisibleError):
            validate_layout(make_layout(w=950))

    def test_single_level_rejected(self):
        with pytest.raises(Exception):
            validate_layout(make_layout(levels=((8, 12),)))


class TestChildIndices:
    def test_top_left_quadrant(self):
        layout = make_layout(levels=((4, 6), (2, 3)), w=960, h=480)
        assert child_indices(layout, 1, (0, 0)) == [(0, 0), (0, 1), (1, 0), (1, 1)]

    def test_bottom_right_quadrant(self):
        layout = make_layout(levels=((4, 6), (2, 3)), w=960, h=480)
        assert child_indices(layout, 1, (1, 2)) == [(2, 4), (2, 5), (3, 4), (3, 5)]

    def test_children_partition_fine_level(self):
        layout = make_layout(levels=((4, 6), (2, 3)), w=960, h=480)
        seen = set()
        for r in range(2):
            for c in range(3):
                kids = child_indices(layout, 1, (r, c))
                assert len(kids) == 4
                assert not seen & set(kids)
                seen.update(kids)
        assert seen == {(r, c) for r in range(4) for c in range(6)}

    def test_out_of_range(self):
        layout = make_layout(levels=((4, 6), (2, 3)), w=960, h=480)
        with pytest.raises(IndexError):
            child_indices(layout, 1, (2, 0))
        with pytest.raises(IndexError):
            child_indices(layout, 0, (0, 0))


class TestFuseStep:
    def test_matches_scalar_oracle_hand_case(self):
        parent = np.array([[0.3]])
        child = np.array([[0.2, 0.2], [0.2, 0.8]])
        fused = fuse_step(parent, child, FusionParams(base=1.5), k=2)
        expected = scalar_fuse_oracle(0.3, [0.2, 0.2, 0.2, 0.8], 1.5, 2)
        assert fused[0, 0] == pytest.approx(expected, abs=1e-12)
        # frozen from the scalar oracle (population std of the child set)
        assert fused[0, 0] == pytest.approx(1.4110915663198305, abs=1e-9)

    def test_zero_children_zero_residual(self):
        fused = fuse_step(np.zeros((1, 1)), np.zeros((2, 2)), FusionParams(), k=3)
        assert fused[0, 0] == 0.0

    def test_sigma_zero_forces_unit_gain(self):
        parent = np.array([[0.3]])
        child = np.full((2, 2), 0.5)
        fused = fuse_step(parent, child, FusionParams(base=1.5), k=1)
        assert fused[0, 0] == pytest.approx(0.8, abs=1e-12)

    def test_matches_oracle_on_random_grids(self):
        rng = np.random.default_rng(7)
        params = FusionParams(base=1.7, sigma_clip_lo=0.0, sigma_clip_hi=0.8)
        for _ in range(50):
            parent = rng.normal(0.4, 0.2, size=(3, 4))
            child = rng.normal(0.4, 0.3, size=(6, 8))
            k = int(rng.integers(1, 5))
            fused = fuse_step(parent, child, params, k)
            for r in range(3):
                for c in range(4):
                    kids = [child[2 * r + dr, 2 * c + dc] for dr in (0, 1) for dc in (0, 1)]
                    want = scalar_fuse_oracle(parent[r, c], kids, 1.7, k, hi=0.8)
                    assert fused[r, c] == pytest.approx(want, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            fuse_step(np.zeros((2, 2)), np.zeros((5, 4)), FusionParams(), k=1)

    def test_permutation_covariance(self):
        rng = np.random.default_rng(3)
        parent = rng.random((2, 2))
        child = rng.random((4, 4))
        base = fuse_step(parent, child, FusionParams(), k=2)
        # permute the four children of parent (1, 1)
        shuffled = child.copy()
        block = shuffled[2:4, 2:4].reshape(-1)
        shuffled[2:4, 2:4] = block[[3, 0, 2, 1]].reshape(2, 2)
        again = fuse_step(parent, shuffled, FusionParams(), k=2)
        assert again[1, 1] == pytest.approx(base[1, 1], abs=1e-12)

    def test_monotone_residual_nonnegative_children(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            parent = rng.random((4, 6))
            child = rng.random((8, 12))
            fused = fuse_step(parent, child, FusionParams(), k=2)
            assert np.all(fused >= parent - 1e-12)

    def test_amplification_monotone_in_sigma(self):
        # same top-2 sum, increasing spread in the non-top children
        params = FusionParams(base=1.5)
        low = fuse_step(np.array([[0.0]]), np.array([[0.5, 0.5], [0.4, 0.4]]), params, k=2)
        high = fuse_step(np.array([[0.0]]), np.array([[0.5, 0.5], [0.1, 0.1]]), params, k=2)
        assert high[0, 0] > low[0, 0]

    def test_gain_stays_within_clip_band(self):
        rng = np.random.default_rng(5)
        params = FusionParams(base=1.5)
        parent = np.zeros((4, 6))
        child = rng.normal(0.0, 5.0, size=(8, 12))  # huge spread, sigma >> 1
        fused = fuse_step(parent, child, params, k=1)
        blocks = child.reshape(4, 2, 6, 2).transpose(0, 2, 1, 3).reshape(4, 6, 4)
        top1 = np.sort(blocks, axis=2)[:, :, 3]
        # sigma is clipped to [0, 1], so the implied gain lies in [1, base]
        beta = fused / top1
        assert np.all(beta >= 1.0 - 1e-9)
        assert np.all(beta <= params.base + 1e-9)


class TestFusePyramid:
    def test_all_zero_anchor_tie_rule(self):
        layout = make_layout()
        mats = [np.zeros((8, 12)), np.zeros((4, 6)), np.zeros((2, 3))]
        fp = fuse_pyramid(grids_from_matrices(mats), layout, FusionParams())
        assert fp.anchor == (0, 0)
        assert all(np.all(f == 0.0) for f in fp.fused)

    def test_matches_two_manual_steps(self):
        rng = np.random.default_rng(21)
        layout = make_layout()
        mats = [rng.random((8, 12)), rng.random((4, 6)), rng.random((2, 3))]
        params = FusionParams(base=1.5, top_k_per_step=(2, 1))
        fp = fuse_pyramid(grids_from_matrices(mats), layout, params)
        step1 = fuse_step(mats[1], mats[0], params, 2)
        step2 = fuse_step(mats[2], step1, params, 1)
        assert np.allclose(fp.fused[1], step1, atol=1e-12)
        assert np.allclose(fp.fused[2], step2, atol=1e-12)

    def test_boosted_fine_tile_drives_anchor(self):
        rng = np.random.default_rng(42)
        layout = make_layout()
        hits = 0
        for _ in range(50):
            mats = [np.clip(rng.normal(0.2, 0.03, s), 0, 1)
                    for s in ((8, 12), (4, 6), (2, 3))]
            r, c = int(rng.integers(0, 8)), int(rng.integers(0, 12))
            mats[0][r, c] += 0.5
            fp = fuse_pyramid(grids_from_matrices(mats), layout, FusionParams())
            if fp.anchor == (r // 4, c // 4):
                hits += 1
        assert hits == 50  # +0.5 over sigma=0.03 noise dominates every time

    def test_determinism(self):
        rng = np.random.default_rng(9)
        layout = make_layout()
        mats = [rng.random((8, 12)), rng.random((4, 6)), rng.random((2, 3))]
        a = fuse_pyramid(grids_from_matrices(mats), layout, FusionParams())
        b = fuse_pyramid(grids_from_matrices(mats), layout, FusionParams())
        assert a.anchor == b.anchor
        for fa, fb in zip(a.fused, b.fused):
            assert np.array_equal(fa, fb)

    def test_sigma_source_switch_changes_result(self):
        rng = np.random.default_rng(13)
        layout = make_layout()
        mats = [rng.random((8, 12)), rng.random((4, 6)), rng.random((2, 3))]
        grids = grids_from_matrices(mats)
        fused_sigma = fuse_pyramid(grids, layout, FusionParams(sigma_from_fused=True))
        raw_sigma = fuse_pyramid(grids, layout, FusionParams(sigma_from_fused=False))
        assert np.allclose(fused_sigma.fused[1], raw_sigma.fused[1])  # first step equal
        assert not np.allclose(fused_sigma.fused[2], raw_sigma.fused[2])


class TestAnchorPixel:
    def test_coarse_center_default(self):
        layout = make_layout()
        mats = [np.zeros((8, 12)), np.zeros((4, 6)), np.zeros((2, 3))]
        fp = fuse_pyramid(grids_from_matrices(mats), layout, FusionParams())
        fp.anchor = (0, 2)
        assert anchor_pixel(fp, refine=False) == (800.0, 120.0)
        fp.anchor = (0, 0)
        assert anchor_pixel(fp, refine=False) == (160.0, 120.0)

    def test_refined_descent_follows_boost(self):
        rng = np.random.default_rng(4)
        layout = make_layout()
        mats = [np.clip(rng.normal(0.2, 0.03, s), 0, 1) for s in ((8, 12), (4, 6), (2, 3))]
        mats[0][5, 9] += 0.5
        fp = fuse_pyramid(grids_from_matrices(mats), layout, FusionParams())
        u, v = anchor_pixel(fp, refine=True)
        assert (u, v) == layout.tile_center(0, 5, 9)


class TestScoreGridValidation:
    def test_descriptor_norm_enforced(self):
        g = ScoreGrid(shape=GridShape(2, 2), scores=np.zeros((2, 2)),
                      descriptors=np.full((2, 2, 4), 0.5))
        g.validate()  # norm = 1.0
        bad = ScoreGrid(shape=GridShape(2, 2), scores=np.zeros((2, 2)),
                        descriptors=np.full((2, 2, 4), 0.6))
        with pytest.raises(ValueError):
            bad.validate()

    def test_non_finite_rejected(self):
        g = ScoreGrid(shape=GridShape(1, 2), scores=np.array([[1.0, np.inf]]))
        with pytest.raises(ValueError):
            g.validate()
