import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvsfuse.errors import DimensionMismatch, InvalidRange, NonPositiveTemperature, NoSources
from mvsfuse.geometry import CameraIntrinsics, Pose, warp_source_to_ref
from mvsfuse.imgproc import downsample_image
from mvsfuse.plane_sweep import (
    CostVolume,
    ProbabilityVolume,
    SweepConfig,
    aggregate,
    auto_temperature,
    build_cost_volume,
    central_argmax,
    cost_to_probability,
    matching_confidence,
    multi_view_depth,
    regress_depth,
    sample_hypotheses,
)
from mvsfuse.pose_bench import make_sample
from mvsfuse.scene_synth import Primitive, SceneSpec, Texture, generate

K = CameraIntrinsics(fx=160.0, fy=160.0, cx=80.0, cy=60.0, width=160, height=120)


def full_volume(cost) -> CostVolume:
    cost = np.asarray(cost, dtype=np.float64)
    return CostVolume(cost, np.ones(cost.shape, dtype=np.int32))


def prob_volume(prob) -> ProbabilityVolume:
    prob = np.asarray(prob, dtype=np.float64)
    return ProbabilityVolume(prob, np.ones(prob.shape[1:], dtype=bool))


def random_prob(rng, n, shape=(4, 5)) -> np.ndarray:
    p = rng.random((n,) + shape) ** 3
    return p / p.sum(axis=0)


def low_res_sample(seq, ref_index, factor=4):
    s = make_sample(seq, 0, ref_index)
    return (
        downsample_image(s.ref, factor),
        [downsample_image(x, factor) for x in s.srcs],
        s.rel_poses,
        seq.intrinsics.scaled(1.0 / factor),
    )


def brute_ssd_volume(ref, srcs, poses, k, bins, r=1):
    """Warp with the geometry module at each constant depth and sum patches explicitly."""
    n, (h, w) = len(bins), ref.shape
    total = np.zeros((n, h, w))
    count = np.zeros((n, h, w))
    for src, pose in zip(srcs, poses):
        for b, d in enumerate(bins):
            sq = (ref - warp_source_to_ref(src, np.full((h, w), d), pose, k, k)) ** 2
            pad = np.pad(sq, r, constant_values=np.nan)
            patch = sum(pad[r + dy:r + dy + h, r + dx:r + dx + w] for dy in range(-r, r + 1) for dx in range(-r, r + 1))
            c = patch / (2 * r + 1) ** 2
            ok = np.isfinite(c)
            total[b] += np.where(ok, c, 0.0)
            count[b] += ok
    with np.errstate(invalid="ignore"):
        return np.where(count > 0, total / count, np.nan)


@pytest.fixture(scope="module")
def wall_pair():
    """Textured fronto-parallel wall at 5 m seen from two cameras 0.3 m apart."""
    wall = Primitive("plane", Pose(np.eye(3), [0.0, 0.0, 5.0]), (40.0, 40.0), Texture("value_noise", scale=0.3, contrast=1.0))
    spec = SceneSpec([wall], [Pose.identity(), Pose(np.eye(3), [0.3, 0.0, 0.0])], K, 2, seed=5)
    seq = generate(spec)
    return seq.frames[0].image, seq.frames[1].image, Pose(np.eye(3), [-0.3, 0.0, 0.0])


class TestHypotheses:
    def test_small_example(self):
        np.testing.assert_allclose(sample_hypotheses(1, 4, 3).bins, [1, 2, 4], rtol=1e-15)

    def test_single_bin(self):
        assert list(sample_hypotheses(2, 2, 1).bins) == [2.0]

    def test_default_resolution(self):
        hyp = sample_hypotheses(1, 256, 128)
        assert len(hyp) == 128 and hyp.bins[0] == 1 and hyp.bins[-1] == 256
        np.testing.assert_allclose(hyp.bins[1:] / hyp.bins[:-1], 256 ** (1 / 127), rtol=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.01, 50), st.floats(1.01, 1000), st.integers(2, 300))
    def test_log_uniform_invariants(self, d_min, ratio, n):
        hyp = sample_hypotheses(d_min, d_min * ratio, n)
        b = hyp.bins
        assert b[0] == d_min and b[-1] == d_min * ratio
        assert np.all(np.diff(b) > 0)
        q = b[1:] / b[:-1]
        assert np.abs(q / q[0] - 1).max() < 1e-9

    @pytest.mark.parametrize("args", [(0, 4, 3), (-1, 4, 3), (4, 1, 3), (1, 4, 1), (1, 1, 2), (1, math.inf, 3)])
    def test_invalid_range(self, args):
        with pytest.raises(InvalidRange):
            sample_hypotheses(*args)

    def test_local_spacing(self):
        hyp = sample_hypotheses(1, 4, 3)
        np.testing.assert_array_equal(hyp.local_spacing([1.0, 1.5, 2.0, 3.9, 4.0]), [1, 1, 2, 2, 2])


class TestCostVolume:
    def test_identity_is_zero(self, rng, k_small):
        ref = rng.random(k_small.shape)
        hyp = sample_hypotheses(1, 50, 8)
        vol = build_cost_volume(ref, [ref], [Pose.identity()], k_small, hyp)
        assert np.array_equal(vol.valid_count[:, 1:-1, 1:-1], np.ones((8, 99, 99)))
        assert np.nanmax(vol.cost) < 1e-20

    def test_plane_argmin(self, wall_pair):
        ref, src, pose = wall_pair
        hyp = sample_hypotheses(4, 6.25, 3)
        np.testing.assert_allclose(hyp.bins, [4, 5, 6.25])
        vol = build_cost_volume(ref, [src], [pose], K, hyp)
        interior = vol.valid.all(axis=0)
        assert interior.mean() > 0.5
        best = np.argmin(np.where(vol.valid, vol.cost, np.inf), axis=0)
        assert (best[interior] == 1).mean() >= 0.99

    def test_matches_brute_force(self, wall_pair):
        ref, src, pose = wall_pair
        hyp = sample_hypotheses(3, 8, 5)
        vol = build_cost_volume(ref, [src, ref], [pose, Pose.identity()], K, hyp)
        oracle = brute_ssd_volume(ref, [src, ref], [pose, Pose.identity()], K, hyp.bins)
        np.testing.assert_array_equal(np.isnan(vol.cost), np.isnan(oracle))
        np.testing.assert_allclose(vol.cost, oracle, atol=1e-12, equal_nan=True)

    @pytest.mark.parametrize("cost", ["ssd", "ncc"])
    def test_uniform_is_flat(self, cost):
        img = np.full(K.shape, 0.4)
        hyp = sample_hypotheses(1, 100, 16)
        vol = build_cost_volume(img, [img], [Pose(np.eye(3), [0.3, 0, 0.1])], K, hyp, cost)
        seen = vol.valid.any(axis=0)
        hi = np.where(vol.valid, vol.cost, -np.inf).max(axis=0)
        lo = np.where(vol.valid, vol.cost, np.inf).min(axis=0)
        assert seen.mean() > 0.5
        assert (hi - lo)[seen].max() <= 1e-9

    def test_ncc_prefers_true_depth(self, wall_pair):
        ref, src, pose = wall_pair
        vol = build_cost_volume(ref, [src], [pose], K, sample_hypotheses(4, 6.25, 3), "ncc")
        interior = vol.valid.all(axis=0)
        best = np.argmin(np.where(vol.valid, vol.cost, np.inf), axis=0)
        assert (best[interior] == 1).mean() >= 0.99

    def test_errors(self, k_small):
        img = np.zeros(k_small.shape)
        hyp = sample_hypotheses(1, 2, 2)
        with pytest.raises(NoSources):
            build_cost_volume(img, [], [], k_small, hyp)
        with pytest.raises(DimensionMismatch):
            build_cost_volume(img, [np.zeros((3, 3))], [Pose.identity()], k_small, hyp)
        with pytest.raises(DimensionMismatch):
            build_cost_volume(img, [img], [], k_small, hyp)


class TestAggregate:
    def test_radius_zero_is_identity(self, rng):
        vol = full_volume(rng.random((3, 6, 6)))
        assert aggregate(vol, 0) is vol

    @pytest.mark.parametrize("radius", [1, 2, 5])
    def test_constant_unchanged(self, radius):
        out = aggregate(full_volume(np.full((2, 9, 9), 0.7)), radius)
        np.testing.assert_allclose(out.cost, 0.7, rtol=1e-15)

    def test_impulse(self):
        c = np.zeros((1, 7, 7))
        c[0, 3, 3] = 1.0
        out = aggregate(full_volume(c), 1).cost[0]
        expected = np.zeros((7, 7))
        expected[2:5, 2:5] = 1 / 9
        np.testing.assert_allclose(out, expected, atol=1e-15)

    def test_invalid_entries_ignored_and_kept(self):
        c = np.ones((1, 5, 5))
        count = np.ones((1, 5, 5), dtype=np.int32)
        c[0, 2, 2], count[0, 2, 2] = np.nan, 0
        out = aggregate(CostVolume(c, count), 1)
        assert np.isnan(out.cost[0, 2, 2])
        np.testing.assert_array_equal(out.cost[0][count[0] > 0], 1.0)

    def test_negative_radius(self):
        with pytest.raises(ValueError):
            aggregate(full_volume(np.zeros((1, 2, 2))), -1)


class TestProbability:
    def test_flat_cost_is_uniform(self):
        p = cost_to_probability(full_volume(np.full((8, 3, 3), 2.0)), 0.5)
        np.testing.assert_allclose(p.prob, 1 / 8, rtol=1e-15)

    @pytest.mark.parametrize("n", [2, 5, 32])
    def test_closed_form(self, n):
        c = np.full((n, 1, 1), 10.0)
        c[1] = 0.0
        p = cost_to_probability(full_volume(c), 1.0).prob
        assert p[1, 0, 0] == pytest.approx(1 / (1 + (n - 1) * math.exp(-10)), rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 64), st.floats(1e-4, 1e3), st.integers(0, 2**32 - 1))
    def test_normalised(self, n, temperature, seed):
        r = np.random.default_rng(seed)
        cost = r.random((n, 4, 4)) * r.uniform(0, 50)
        count = (r.random((n, 4, 4)) > 0.3).astype(np.int32)
        cost = np.where(count > 0, cost, np.nan)
        p = cost_to_probability(CostVolume(cost, count), temperature)
        s = p.prob.sum(axis=0)
        np.testing.assert_allclose(s[p.valid], 1.0, atol=1e-6)
        assert np.all(p.prob >= 0)
        assert np.all(p.prob[count == 0] == 0)
        np.testing.assert_array_equal(p.valid, count.any(axis=0))

    @pytest.mark.parametrize("t", [0.0, -1.0, math.nan])
    def test_non_positive_temperature(self, t):
        with pytest.raises(NonPositiveTemperature):
            cost_to_probability(full_volume(np.zeros((2, 1, 1))), t)

    def test_auto_temperature(self):
        assert auto_temperature(full_volume(np.full((2, 2, 2), 3.0)), 0.05) == pytest.approx(0.15)
        # rounding-level costs must not set the scale
        assert auto_temperature(full_volume(np.full((2, 2, 2), 1e-30))) == 1.0


class TestRegress:
    def test_one_hot(self):
        hyp = sample_hypotheses(1, 4, 3)
        assert regress_depth(prob_volume([[[0.0]], [[1.0]], [[0.0]]]), hyp)[0, 0] == 2.0

    def test_weighted_sum(self):
        hyp = sample_hypotheses(1, 4, 3)
        assert regress_depth(prob_volume([[[0.5]], [[0.0]], [[0.5]]]), hyp)[0, 0] == pytest.approx(2.5, abs=1e-15)

    def test_brute_force(self, rng):
        hyp = sample_hypotheses(0.5, 80, 17)
        p = random_prob(rng, 17)
        d = regress_depth(prob_volume(p), hyp)
        for y in range(p.shape[1]):
            for x in range(p.shape[2]):
                expected = math.fsum(float(b) * float(q) for b, q in zip(hyp.bins, p[:, y, x]))
                assert abs(d[y, x] - expected) <= 1e-9

    def test_invalid_pixels(self):
        p = ProbabilityVolume(np.zeros((2, 1, 2)), np.array([[True, False]]))
        p.prob[0, 0, 0] = 1.0
        d = regress_depth(p, sample_hypotheses(1, 2, 2))
        assert d[0, 0] == 1.0 and np.isnan(d[0, 1])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            regress_depth(prob_volume(np.ones((3, 1, 1)) / 3), sample_hypotheses(1, 2, 2))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 40), st.integers(0, 2**32 - 1))
    def test_low_temperature_approaches_argmin(self, n, seed):
        r = np.random.default_rng(seed)
        hyp = sample_hypotheses(1, 100, n)
        cost = r.random((n, 6, 6))
        t = 1e-3
        d = regress_depth(cost_to_probability(full_volume(cost), t), hyp)
        ordered = np.sort(cost, axis=0)
        # runner-up bins carry weight below exp(-20) once the margin exceeds 20 T
        clear = ordered[1] - ordered[0] > 20 * t
        best = hyp.bins[np.argmin(cost, axis=0)]
        assert np.all(np.abs(d - best)[clear] < hyp.local_spacing(best)[clear])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 30), st.integers(0, 2**32 - 1))
    def test_within_range(self, n, seed):
        r = np.random.default_rng(seed)
        hyp = sample_hypotheses(2, 2, 1) if n == 1 else sample_hypotheses(0.3, 250, n)
        d = regress_depth(prob_volume(random_prob(r, n, (3, 3))), hyp)
        assert np.all((d >= hyp.d_min) & (d <= hyp.d_max))


class TestMatchingConfidence:
    def test_one_hot(self):
        p = np.zeros((5, 1, 1))
        p[4] = 1.0
        assert matching_confidence(prob_volume(p), 1)[0, 0] == 1.0

    @pytest.mark.parametrize("n", [2, 3, 8, 128])
    def test_uniform(self, n):
        conf = matching_confidence(prob_volume(np.full((n, 2, 2), 1 / n)), 1)
        np.testing.assert_allclose(conf, min(1.0, 3 / n), rtol=1e-12)

    def test_central_tie_break(self):
        p = np.array([0.25, 0.25, 0.25, 0.25, 0.0])[:, None, None]
        assert central_argmax(p)[0, 0] == 2
        assert central_argmax(np.array([0.5, 0.5])[:, None, None])[0, 0] == 1

    def test_window_zero_is_peak(self, rng):
        p = random_prob(rng, 6)
        np.testing.assert_allclose(matching_confidence(prob_volume(p), 0), p.max(axis=0))

    def test_negative_window(self):
        with pytest.raises(ValueError):
            matching_confidence(prob_volume(np.ones((1, 1, 1))), -1)


class TestMultiView:
    def test_textured_beats_textureless(self, suite_cache):
        conf = {}
        for name in ("textured_translate", "low_texture"):
            ref, srcs, poses, k = low_res_sample(suite_cache(name), 4)
            conf[name] = np.nanmean(multi_view_depth(ref, srcs, poses, k).confidence)
        assert conf["low_texture"] < 0.2 < 0.6 < conf["textured_translate"]

    def test_identity_setting_collapses_confidence(self, textured):
        ref, _, _, k = low_res_sample(textured, 4)
        res = multi_view_depth(ref, [ref, ref.copy()], [Pose.identity()] * 2, k)
        assert np.nanmean(res.confidence) < 0.2
        # flat costs spread the mass evenly, so depth sits near the bin mean
        interior = res.prob.valid
        assert np.abs(res.depth[interior] - res.hypotheses.bins.mean()).max() < 1.0

    def test_stopped_collapses_confidence(self, suite_cache):
        ref, srcs, poses, k = low_res_sample(suite_cache("stopped"), 4)
        assert np.nanmean(multi_view_depth(ref, srcs, poses, k).confidence) < 0.2

    def test_deterministic(self, textured):
        ref, srcs, poses, k = low_res_sample(textured, 2)
        a = multi_view_depth(ref, srcs, poses, k, SweepConfig(n_bins=32))
        b = multi_view_depth(ref, srcs, poses, k, SweepConfig(n_bins=32))
        assert a.depth.tobytes() == b.depth.tobytes()
        assert a.confidence.tobytes() == b.confidence.tobytes()

    def test_fixed_temperature(self, textured):
        ref, srcs, poses, k = low_res_sample(textured, 2)
        res = multi_view_depth(ref, srcs, poses, k, SweepConfig(n_bins=16, temperature=0.5))
        assert res.temperature == 0.5
