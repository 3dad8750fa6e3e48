"""PSNR, SSIM / MS-SSIM, and feature-space metrics against naive oracles."""

import math

import numpy as np
import pytest

from helpers import random_tile
from tilebench.imagecore import Tile, to_luma
from tilebench.metrics import (
    MS_SSIM_WEIGHTS,
    FeatureSet,
    FeatureVector,
    MetricReport,
    ScaleReductionWarning,
    compute_metrics,
    cosine_similarity,
    deep_feature_distance,
    distance_from_features,
    feature_similarity_profile,
    ms_ssim,
    profile_from_features,
    psnr,
    ssim_scale,
)
from tilebench.refcodec import decode, encode

# ---------------------------------------------------------------------------
# Independent slow-route oracles: per-window loops with an explicit 2-D kernel.


def naive_window():
    w = np.zeros((11, 11))
    for i in range(11):
        for j in range(11):
            w[i, j] = math.exp(-((i - 5) ** 2 + (j - 5) ** 2) / (2 * 1.5**2))
    return w / w.sum()


def naive_ssim(x, y):
    """Mean SSIM and mean contrast-structure over all valid 11x11 windows."""
    w = naive_window()
    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2
    oh, ow = x.shape[0] - 10, x.shape[1] - 10
    ssim_sum = cs_sum = 0.0
    for i in range(oh):
        for j in range(ow):
            px = x[i : i + 11, j : j + 11]
            py = y[i : i + 11, j : j + 11]
            mx = float((w * px).sum())
            my = float((w * py).sum())
            vx = float((w * px * px).sum()) - mx * mx
            vy = float((w * py * py).sum()) - my * my
            cxy = float((w * px * py).sum()) - mx * my
            lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
            cs = (2 * cxy + c2) / (vx + vy + c2)
            ssim_sum += lum * cs
            cs_sum += cs
    n = oh * ow
    return ssim_sum / n, cs_sum / n


def naive_ms_ssim(ref, test):
    x = to_luma(ref).samples.astype(np.float64)
    y = to_luma(test).samples.astype(np.float64)
    terms = []
    for level in range(5):
        s, cs = naive_ssim(x, y)
        terms.append(s if level == 4 else cs)
        if level != 4:
            h, w = x.shape
            x = x[: h - h % 2, : w - w % 2].reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))
            y = y[: h - h % 2, : w - w % 2].reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))
    if any(t <= 0.0 for t in terms):
        return 0.0
    value = float(np.prod([t**w for t, w in zip(terms, MS_SSIM_WEIGHTS)]))
    return min(max(value, 0.0), 1.0)


class StatExtractor:
    """Tiny deterministic extractor for metric-level tests."""

    def extract(self, tile):
        px = tile.pixels.astype(np.float64)
        means = px.mean(axis=(0, 1)) + 1.0  # keep norms away from zero
        halves = np.array(
            [px[: tile.height // 2].mean() + 1.0, px[tile.height // 2 :].mean() + 1.0]
        )
        return FeatureSet(
            taps=(
                FeatureVector(tap_id="means", values=means),
                FeatureVector(tap_id="halves", values=halves),
            )
        )


class TestPsnr:
    def test_identical_is_infinite(self):
        tile = random_tile(0, size=16)
        assert psnr(tile, tile) == math.inf

    def test_uniform_one_count_error(self):
        a = Tile(pixels=np.full((16, 16, 3), 100, dtype=np.uint8))
        b = Tile(pixels=np.full((16, 16, 3), 101, dtype=np.uint8))
        assert psnr(a, b) == pytest.approx(48.1308, abs=1e-3)

    def test_maximal_error_is_zero(self):
        a = Tile(pixels=np.zeros((8, 8, 3), dtype=np.uint8))
        b = Tile(pixels=np.full((8, 8, 3), 255, dtype=np.uint8))
        assert psnr(a, b) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            psnr(random_tile(0, size=8), random_tile(0, size=16))

    def test_symmetric(self):
        a, b = random_tile(1, size=16), random_tile(2, size=16)
        assert psnr(a, b) == psnr(b, a)


class TestSsimScale:
    def test_identical_planes(self):
        plane = to_luma(random_tile(3, size=32)).samples
        assert ssim_scale(plane, plane) == (1.0, 1.0)

    def test_matches_naive_loop(self):
        ref = random_tile(4, size=64)
        test = decode(encode(ref, 40))
        x = to_luma(ref).samples.astype(np.float64)
        y = to_luma(test).samples.astype(np.float64)
        got = ssim_scale(x, y)
        want = naive_ssim(x, y)
        assert got[0] == pytest.approx(want[0], abs=1e-6)
        assert got[1] == pytest.approx(want[1], abs=1e-6)

    def test_too_small_plane(self):
        with pytest.raises(ValueError):
            ssim_scale(np.zeros((10, 64)), np.zeros((10, 64)))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ssim_scale(np.zeros((32, 32)), np.zeros((32, 16)))


class TestMsSsim:
    def test_identical_tiles(self):
        tile = random_tile(5, size=176)
        assert ms_ssim(tile, tile) == 1.0

    def test_matches_naive_five_scale_oracle(self):
        ref = random_tile(6, size=176)  # 176 = 11 * 16, smallest 5-scale input
        test = decode(encode(ref, 35))
        assert ms_ssim(ref, test) == pytest.approx(naive_ms_ssim(ref, test), abs=1e-6)

    def test_odd_size_cropping_matches_oracle(self):
        px = np.random.default_rng(7).integers(0, 256, (177, 179, 3), dtype=np.uint8)
        ref = Tile(pixels=px)
        test = decode(encode(ref, 50))
        assert ms_ssim(ref, test) == pytest.approx(naive_ms_ssim(ref, test), abs=1e-6)

    def test_value_bounded(self):
        ref = random_tile(8, size=176)
        test = decode(encode(ref, 5))
        assert 0.0 <= ms_ssim(ref, test) <= 1.0

    def test_inverted_pattern_clamps_to_zero(self):
        board = np.indices((176, 176)).sum(axis=0) % 2 * 255
        a = Tile(pixels=np.repeat(board[:, :, None], 3, axis=2).astype(np.uint8))
        b = Tile(pixels=(255 - a.pixels).astype(np.uint8))
        assert ms_ssim(a, b) == 0.0

    def test_small_tile_needs_explicit_reduction(self):
        a, b = random_tile(1, size=64), random_tile(2, size=64)
        with pytest.raises(ValueError, match="allow_scale_reduction"):
            ms_ssim(a, b)
        with pytest.warns(ScaleReductionWarning):
            value = ms_ssim(a, b, allow_scale_reduction=True)
        assert 0.0 <= value <= 1.0

    def test_tiny_tile_always_rejected(self):
        a = random_tile(1, size=8)
        with pytest.raises(ValueError):
            ms_ssim(a, a, allow_scale_reduction=True)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            ms_ssim(random_tile(0, size=176), random_tile(0, size=224))


class TestCosine:
    def test_hand_example(self):
        x = FeatureVector(tap_id="t", values=np.array([1.0, 2.0, 2.0]))
        y = FeatureVector(tap_id="t", values=np.array([2.0, 2.0, 1.0]))
        assert cosine_similarity(x, y) == pytest.approx(8.0 / 9.0, abs=1e-12)

    def test_orthogonal(self):
        x = FeatureVector(tap_id="t", values=np.array([1.0, 0.0]))
        y = FeatureVector(tap_id="t", values=np.array([0.0, 3.0]))
        assert cosine_similarity(x, y) == 0.0

    def test_scale_invariant(self):
        x = FeatureVector(tap_id="t", values=np.array([0.3, -1.2, 4.0]))
        y = FeatureVector(tap_id="t", values=x.values * 7.5)
        assert cosine_similarity(x, y) == pytest.approx(1.0, abs=1e-12)

    def test_opposite_vectors(self):
        x = FeatureVector(tap_id="t", values=np.array([1.0, 2.0]))
        y = FeatureVector(tap_id="t", values=-x.values)
        assert cosine_similarity(x, y) == pytest.approx(-1.0, abs=1e-12)

    def test_zero_vector_rejected(self):
        x = FeatureVector(tap_id="t", values=np.array([0.0, 0.0]))
        y = FeatureVector(tap_id="t", values=np.array([1.0, 0.0]))
        with pytest.raises(ValueError, match="zero-norm"):
            cosine_similarity(x, y)

    def test_dimension_mismatch(self):
        x = FeatureVector(tap_id="t", values=np.array([1.0]))
        y = FeatureVector(tap_id="t", values=np.array([1.0, 2.0]))
        with pytest.raises(ValueError, match="mismatch"):
            cosine_similarity(x, y)


class TestFeatureVectorValidation:
    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(ValueError):
            FeatureVector(tap_id="t", values=np.array([]))
        with pytest.raises(ValueError):
            FeatureVector(tap_id="t", values=np.array([np.nan]))
        with pytest.raises(ValueError):
            FeatureVector(tap_id="", values=np.array([1.0]))

    def test_feature_set_needs_unique_ids(self):
        v = FeatureVector(tap_id="a", values=np.array([1.0]))
        with pytest.raises(ValueError, match="duplicate"):
            FeatureSet(taps=(v, v))
        with pytest.raises(ValueError):
            FeatureSet(taps=())


class TestProfiles:
    def test_identical_tiles_profile_is_all_ones(self):
        tile = random_tile(9, size=32)
        profile = feature_similarity_profile(tile, tile, StatExtractor())
        assert set(profile) == {"means", "halves"}
        assert all(v == pytest.approx(1.0, abs=1e-12) for v in profile.values())

    def test_profile_preserves_tap_order(self):
        tile = random_tile(10, size=32)
        profile = feature_similarity_profile(tile, random_tile(11, size=32), StatExtractor())
        assert list(profile) == ["means", "halves"]

    def test_mismatched_taps_rejected(self):
        a = FeatureSet(taps=(FeatureVector(tap_id="a", values=np.array([1.0])),))
        b = FeatureSet(taps=(FeatureVector(tap_id="b", values=np.array([1.0])),))
        with pytest.raises(ValueError, match="tap sets differ"):
            profile_from_features(a, b)


class TestDeepDistance:
    def test_identical_is_zero(self):
        tile = random_tile(12, size=32)
        assert deep_feature_distance(tile, tile, StatExtractor()) == 0.0

    def test_symmetric(self):
        a, b = random_tile(13, size=32), random_tile(14, size=32)
        ext = StatExtractor()
        assert deep_feature_distance(a, b, ext) == pytest.approx(
            deep_feature_distance(b, a, ext), abs=1e-15
        )

    def test_opposite_unit_vectors_hit_the_cap(self):
        a = FeatureSet(taps=(FeatureVector(tap_id="t", values=np.array([2.0, 0.0])),))
        b = FeatureSet(taps=(FeatureVector(tap_id="t", values=np.array([-5.0, 0.0])),))
        assert distance_from_features(a, b) == pytest.approx(4.0, abs=1e-12)

    def test_bounded_by_four(self):
        for seed in range(5):
            a, b = random_tile(seed, size=32), random_tile(seed + 100, size=32)
            assert 0.0 <= deep_feature_distance(a, b, StatExtractor()) <= 4.0

    def test_noise_ordering(self):
        base = np.full((32, 32, 3), 128, dtype=np.uint8)
        rng = np.random.default_rng(0)
        noise = rng.normal(0, 1, base.shape)

        def noisy(scale):
            return Tile(
                pixels=np.clip(base + scale * noise, 0, 255).astype(np.uint8)
            )

        ref = Tile(pixels=base)
        ext = StatExtractor()
        light = deep_feature_distance(ref, noisy(10), ext)
        heavy = deep_feature_distance(ref, noisy(60), ext)
        assert heavy > light

    def test_zero_norm_rejected(self):
        a = FeatureSet(taps=(FeatureVector(tap_id="t", values=np.array([0.0, 0.0])),))
        with pytest.raises(ValueError, match="zero-norm"):
            distance_from_features(a, a)


class TestComputeMetrics:
    def test_requested_subset_only(self):
        tile = random_tile(15, size=176)
        report = compute_metrics(tile, tile, ["psnr"])
        assert report.psnr == math.inf
        assert report.ms_ssim is None
        assert report.deep_distance is None
        assert report.cosine_profile is None

    def test_unknown_metric_rejected(self):
        tile = random_tile(0, size=32)
        with pytest.raises(ValueError, match="unknown metrics"):
            compute_metrics(tile, tile, ["psnr", "vmaf"])

    def test_feature_metrics_need_extractor(self):
        tile = random_tile(0, size=32)
        with pytest.raises(ValueError, match="extractor"):
            compute_metrics(tile, tile, ["cosine"])

    def test_full_report(self):
        ref = random_tile(16, size=176)
        test = decode(encode(ref, 60))
        report = compute_metrics(
            ref, test, ["psnr", "ms_ssim", "deep_distance", "cosine"], StatExtractor()
        )
        assert report.psnr > 0
        assert 0.0 <= report.ms_ssim <= 1.0
        assert report.deep_distance >= 0.0
        assert set(report.cosine_profile) == {"means", "halves"}

    def test_json_dict_inf_sentinel(self):
        report = MetricReport(psnr=math.inf, cosine_profile={"a": 1.0})
        d = report.to_json_dict()
        assert d == {"psnr": "inf", "cosine": {"a": 1.0}}
        assert MetricReport(psnr=42.5).to_json_dict() == {"psnr": 42.5}
