import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.ndimage import binary_dilation

from mvsfuse.errors import DimensionMismatch, NoSources
from mvsfuse.fusion import dynamic_mask, fuse, warping_confidence
from mvsfuse.geometry import Pose, relative_pose
from mvsfuse.scene_synth import render_frame, suite_spec


def ones(shape=(3, 4), v=1.0):
    return np.full(shape, v)


@pytest.fixture(scope="module")
def wall_candidate():
    # a central patch of wall kept clear of the poster's occlusion edges
    _, _, hit = render_frame(suite_spec("textured_translate"), 4)
    cand = np.zeros(hit.shape, bool)
    cand[60:180, 40:280] = True
    return cand & ~binary_dilation(hit == 1, iterations=8)


def window(seq, r):
    f = seq.frames
    poses = [relative_pose(f[r].cam_to_world, f[j].cam_to_world) for j in (r - 1, r + 1)]
    return f[r].image, [f[r - 1].image, f[r + 1].image], poses


class TestWarpingConfidence:
    def test_self_is_one(self, k_small, rng):
        ref = rng.random(k_small.shape)
        depth = rng.uniform(1, 10, k_small.shape)
        m_w = warping_confidence(ref, [ref], depth, [Pose.identity()], k_small)
        np.testing.assert_allclose(m_w[3:-3, 3:-3], 1.0, atol=1e-12)

    def test_gt_depth_is_consistent(self, textured):
        ref, srcs, poses = window(textured, 4)
        m_w = warping_confidence(ref, srcs, textured.frames[4].gt_depth, poses, textured.intrinsics)
        assert np.nanmean(m_w[16:-16, 16:-16]) >= 0.9

    def test_wrong_depth_is_penalised(self, textured):
        ref, srcs, poses = window(textured, 4)
        gt = textured.frames[4].gt_depth.astype(np.float64)
        good = warping_confidence(ref, srcs, gt, poses, textured.intrinsics)
        bad = warping_confidence(ref, srcs, 2 * gt, poses, textured.intrinsics)
        assert np.nanmean(good[16:-16, 16:-16]) - np.nanmean(bad[16:-16, 16:-16]) >= 0.2

    def test_min_reduce_is_no_higher(self, textured):
        ref, srcs, poses = window(textured, 4)
        d = 1.2 * textured.frames[4].gt_depth
        mean = warping_confidence(ref, srcs, d, poses, textured.intrinsics, reduce="mean")
        low = warping_confidence(ref, srcs, d, poses, textured.intrinsics, reduce="min")
        ok = np.isfinite(mean)
        assert np.all(low[ok] <= mean[ok] + 1e-15)

    def test_no_valid_warp_is_invalid(self, k_small, rng):
        ref = rng.random(k_small.shape)
        m_w = warping_confidence(ref, [ref], np.full(k_small.shape, 1.0), [Pose(np.eye(3), [0, 0, -5.0])], k_small)
        assert np.isnan(m_w).all()

    def test_no_sources(self, k_small):
        with pytest.raises(NoSources):
            warping_confidence(np.zeros(k_small.shape), [], np.ones(k_small.shape), [], k_small)


class TestFuse:
    def test_full_trust(self):
        r = fuse(ones(v=2.0), ones(v=4.0), ones(v=0.2), ones(), ones())
        np.testing.assert_array_equal(r.d_fuse, 4.0)
        np.testing.assert_array_equal(r.weight, 1.0)

    def test_zero_warp_confidence_vetoes(self):
        m_w = ones()
        m_w[1, 2] = 0.0
        r = fuse(ones(v=2.0), ones(v=4.0), ones(v=0.1), ones(), m_w)
        assert r.d_fuse[1, 2] == 2.0 and r.weight[1, 2] == 0.0

    def test_half_blend(self):
        c = ones(v=2**-0.5)
        r = fuse(ones(v=2.0), ones(v=4.0), ones(v=0.0), c, c)
        np.testing.assert_allclose(r.weight, 0.5, rtol=1e-12)
        np.testing.assert_allclose(r.d_fuse, 3.0, rtol=1e-12)

    def test_floor_gate(self):
        r = fuse(ones(v=2.0), ones(v=4.0), ones(v=0.0), ones(), ones(v=0.29))
        np.testing.assert_array_equal(r.d_fuse, 2.0)
        r = fuse(ones(v=2.0), ones(v=4.0), ones(v=0.0), ones(), ones(v=0.3))
        np.testing.assert_allclose(r.weight, 0.3)

    def test_gamma(self):
        r = fuse(ones(v=2.0), ones(v=4.0), ones(v=0.0), ones(v=0.5), ones(), gamma=2.0)
        np.testing.assert_allclose(r.weight, 0.25)

    def test_prior_tie_breaker(self):
        # a gap above 100% of d_s with a more confident prior forces the prior
        r = fuse(ones(v=2.0), ones(v=4.5), ones(v=0.9), ones(v=0.8), ones(v=0.8))
        np.testing.assert_array_equal(r.weight, 0.0)
        # same gap but stronger multi-view support keeps the blend
        r = fuse(ones(v=2.0), ones(v=4.5), ones(v=0.5), ones(v=0.8), ones(v=0.8))
        np.testing.assert_allclose(r.weight, 0.64)
        # confident prior but a gap of exactly 100% is not vetoed
        r = fuse(ones(v=2.0), ones(v=4.0), ones(v=0.9), ones(v=0.8), ones(v=0.8))
        np.testing.assert_allclose(r.weight, 0.64)

    def test_invalid_multi_view_takes_prior(self):
        d_m = ones(v=4.0)
        d_m[0, 0], d_m[0, 1] = np.nan, -1.0
        r = fuse(ones(v=2.0), d_m, ones(), ones(), ones())
        assert r.d_fuse[0, 0] == 2.0 and r.d_fuse[0, 1] == 2.0 and r.weight[0, 0] == 0.0

    def test_invalid_prior_takes_multi_view(self):
        d_s = ones(v=2.0)
        d_s[0, 0] = d_s[0, 1] = np.nan
        m_w = ones(v=0.9)
        m_w[0, 1] = 0.1
        r = fuse(d_s, ones(v=4.0), ones(), ones(v=0.2), m_w)
        assert r.d_fuse[0, 0] == 4.0 and r.weight[0, 0] == 1.0
        assert np.isnan(r.d_fuse[0, 1])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            fuse(ones(), ones((2, 2)), ones(), ones(), ones())

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.25, 4.0), st.floats(0.0, 1.0))
    def test_convex(self, seed, gamma, floor):
        r = np.random.default_rng(seed)
        shape = (8, 8)
        d_s, d_m = r.uniform(0.5, 80, shape), r.uniform(0.5, 80, shape)
        res = fuse(d_s, d_m, r.random(shape), r.random(shape), r.random(shape), gamma, floor)
        lo, hi = np.minimum(d_s, d_m), np.maximum(d_s, d_m)
        assert np.all(res.d_fuse >= lo) and np.all(res.d_fuse <= hi)
        assert np.all((res.weight >= 0) & (res.weight <= 1))


class TestDynamicMask:
    def test_static_region_is_empty(self, textured, wall_candidate):
        f = textured.frames
        out = dynamic_mask(f[3], f[4], f[5], wall_candidate, f[4].gt_depth, textured.intrinsics)
        assert wall_candidate.sum() > 10000 and not out.any()

    def test_threshold_one_flags_candidate(self, textured, wall_candidate):
        f = textured.frames
        out = dynamic_mask(f[3], f[4], f[5], wall_candidate, f[4].gt_depth, textured.intrinsics, threshold=1.0)
        np.testing.assert_array_equal(out, wall_candidate)

    def test_output_within_candidate(self, dynamic_car):
        f = dynamic_car.frames
        cand = f[3].dynamic_mask
        out = dynamic_mask(f[2], f[3], f[4], cand, f[3].gt_depth, dynamic_car.intrinsics)
        assert not (out & ~cand).any()

    def test_moving_car_recovered(self, dynamic_car):
        f = dynamic_car.frames
        spec = suite_spec("dynamic_car")
        _, _, hit = render_frame(spec, 3)
        cand = f[3].dynamic_mask | (hit == len(spec.primitives) - 1)
        out = dynamic_mask(f[2], f[3], f[4], cand, f[3].gt_depth, dynamic_car.intrinsics)
        truth = f[3].dynamic_mask
        assert (out & truth).sum() / (out | truth).sum() >= 0.5

    def test_shape_mismatch(self, textured):
        f = textured.frames
        with pytest.raises(DimensionMismatch):
            dynamic_mask(f[0], f[1], f[2], np.ones((3, 3), bool), f[1].gt_depth, textured.intrinsics)
