"""Fidelity metrics: PSNR, SSIM / MS-SSIM on luma, and feature-space measures.

MS-SSIM follows the Wang 2003 construction: Gaussian 11x11 window with
sigma 1.5, stability constants C1 = (0.01 * 255)^2 and C2 = (0.03 * 255)^2,
five scales linked by 2x2 mean pooling, per-scale exponents
[0.0448, 0.2856, 0.3001, 0.2363, 0.1333], the luminance term applied only
at the coarsest scale. Negative values in the per-window maps are kept;
only the final product is clamped to [0, 1]. Should any scale's mean term
be non-positive the product is defined as 0.0, since a fractional power of
a negative mean is undefined.

Feature similarity is the plain cosine
    s(x, y) = sum_d x_d y_d / (sqrt(sum_d x_d^2) * sqrt(sum_d y_d^2))
evaluated per extractor tap. The deep feature distance unit-normalizes each
tap's vectors and averages the squared Euclidean distances over taps, so
each tap contributes at most 4.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imagecore import Plane, Tile, to_luma

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
PSNR_AGGREGATE_CAP_DB = 100.0


class ScaleReductionWarning(UserWarning):
    """MS-SSIM ran with fewer than five scales because the input is small."""


@dataclass(frozen=True)
class FeatureVector:
    """One tap's activation vector, finite float64 values."""

    tap_id: str
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if arr.size < 1:
            raise ValueError(f"tap {self.tap_id!r}: empty feature vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"tap {self.tap_id!r}: non-finite feature values")
        if not self.tap_id:
            raise ValueError("tap_id must be non-empty")
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class FeatureSet:
    """Ordered taps from one extraction, shallow to deep, unique ids."""

    taps: tuple[FeatureVector, ...]

    def __post_init__(self) -> None:
        if not self.taps:
            raise ValueError("feature set needs at least one tap")
        ids = [t.tap_id for t in self.taps]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate tap ids: {ids}")

    @property
    def tap_ids(self) -> tuple[str, ...]:
        return tuple(t.tap_id for t in self.taps)

    def __getitem__(self, tap_id: str) -> FeatureVector:
        for tap in self.taps:
            if tap.tap_id == tap_id:
                return tap
        raise KeyError(tap_id)


class Extractor(Protocol):
    def extract(self, tile: Tile) -> FeatureSet: ...


# ---------------------------------------------------------------------------
# PSNR


def psnr(ref: Tile, test: Tile) -> float:
    """10 * log10(255^2 / MSE) over all RGB samples; identical inputs give inf."""
    if (ref.width, ref.height) != (test.width, test.height):
        raise ValueError(
            f"dimension mismatch: {ref.width}x{ref.height} vs {test.width}x{test.height}"
        )
    diff = ref.pixels.astype(np.float64) - test.pixels.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


# ---------------------------------------------------------------------------
# SSIM / MS-SSIM


def _gaussian_kernel() -> np.ndarray:
    half = (SSIM_WINDOW - 1) / 2.0
    offsets = np.arange(SSIM_WINDOW, dtype=np.float64) - half
    k = np.exp(-(offsets ** 2) / (2.0 * SSIM_SIGMA ** 2))
    return k / k.sum()


_KERNEL_1D = _gaussian_kernel()
_KERNEL_1D.setflags(write=False)


def _filter_valid(plane: np.ndarray) -> np.ndarray:
    """Separable Gaussian filtering, valid mode (no padding)."""
    rows = sliding_window_view(plane, SSIM_WINDOW, axis=1) @ _KERNEL_1D
    return sliding_window_view(rows, SSIM_WINDOW, axis=0) @ _KERNEL_1D


def _as_float_plane(p: Plane | np.ndarray) -> np.ndarray:
    arr = p.samples if isinstance(p, Plane) else np.asarray(p)
    return arr.astype(np.float64)


def ssim_scale(ref: Plane | np.ndarray, test: Plane | np.ndarray) -> tuple[float, float]:
    """Single-scale SSIM on two planes.

    Returns (mean of the full SSIM map, mean of the contrast-structure map).
    """
    x = _as_float_plane(ref)
    y = _as_float_plane(test)
    if x.shape != y.shape:
        raise ValueError(f"plane shapes differ: {x.shape} vs {y.shape}")
    if min(x.shape) < SSIM_WINDOW:
        raise ValueError(f"plane sides must be >= {SSIM_WINDOW}, got {x.shape}")
    mu_x = _filter_valid(x)
    mu_y = _filter_valid(y)
    sxx = _filter_valid(x * x) - mu_x * mu_x
    syy = _filter_valid(y * y) - mu_y * mu_y
    sxy = _filter_valid(x * y) - mu_x * mu_y
    luminance = (2.0 * mu_x * mu_y + SSIM_C1) / (mu_x * mu_x + mu_y * mu_y + SSIM_C1)
    cs = (2.0 * sxy + SSIM_C2) / (sxx + syy + SSIM_C2)
    ssim_map = luminance * cs
    return float(ssim_map.mean()), float(cs.mean())


def _downsample2(plane: np.ndarray) -> np.ndarray:
    # crop to even dimensions, then 2x2 mean pool
    h, w = plane.shape
    plane = plane[: h - h % 2, : w - w % 2]
    return plane.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def ms_ssim(ref: Tile, test: Tile, allow_scale_reduction: bool = False) -> float:
    """Multi-scale SSIM on BT.601 luma. See the module docstring for layout."""
    if (ref.width, ref.height) != (test.width, test.height):
        raise ValueError(
            f"dimension mismatch: {ref.width}x{ref.height} vs {test.width}x{test.height}"
        )
    x = to_luma(ref).samples.astype(np.float64)
    y = to_luma(test).samples.astype(np.float64)
    min_side = min(x.shape)

    levels = len(MS_SSIM_WEIGHTS)
    while levels > 1 and min_side // (1 << (levels - 1)) < SSIM_WINDOW:
        levels -= 1
    if min_side < SSIM_WINDOW:
        raise ValueError(f"tile sides must be at least {SSIM_WINDOW}, got {x.shape}")
    if levels < len(MS_SSIM_WEIGHTS):
        if not allow_scale_reduction:
            raise ValueError(
                f"min side {min_side} is too small for {len(MS_SSIM_WEIGHTS)} scales "
                f"(needs >= {SSIM_WINDOW * (1 << (len(MS_SSIM_WEIGHTS) - 1))}); "
                "pass allow_scale_reduction=True to reduce"
            )
        warnings.warn(
            f"MS-SSIM reduced to {levels} scales for min side {min_side}",
            ScaleReductionWarning,
            stacklevel=2,
        )
    weights = np.array(MS_SSIM_WEIGHTS[:levels], dtype=np.float64)
    weights = weights / weights.sum() if levels < len(MS_SSIM_WEIGHTS) else weights

    terms: list[float] = []
    for level in range(levels):
        ssim_mean, cs_mean = ssim_scale(x, y)
        terms.append(ssim_mean if level == levels - 1 else cs_mean)
        if level != levels - 1:
            x = _downsample2(x)
            y = _downsample2(y)
    if any(t <= 0.0 for t in terms):
        return 0.0
    value = float(np.prod([t ** w for t, w in zip(terms, weights)]))
    return min(max(value, 0.0), 1.0)


# ---------------------------------------------------------------------------
# Feature-space measures


def cosine_similarity(x: FeatureVector, y: FeatureVector) -> float:
    """Cosine of the angle between two feature vectors of equal dimension."""
    if x.dim != y.dim:
        raise ValueError(f"dimension mismatch: {x.dim} vs {y.dim}")
    nx = float(np.linalg.norm(x.values))
    ny = float(np.linalg.norm(y.values))
    if nx == 0.0 or ny == 0.0:
        raise ValueError("cosine similarity is undefined for zero-norm vectors")
    return float(np.dot(x.values, y.values) / (nx * ny))


def profile_from_features(ref: FeatureSet, test: FeatureSet) -> dict[str, float]:
    """Per-tap cosine similarity; tap id sequences must match exactly."""
    if ref.tap_ids != test.tap_ids:
        raise ValueError(f"tap sets differ: {ref.tap_ids} vs {test.tap_ids}")
    return {
        a.tap_id: cosine_similarity(a, b) for a, b in zip(ref.taps, test.taps)
    }


def feature_similarity_profile(ref: Tile, test: Tile, extractor: Extractor) -> dict[str, float]:
    """Extract both tiles and report cosine similarity per tap, shallow to deep."""
    return profile_from_features(extractor.extract(ref), extractor.extract(test))


def distance_from_features(ref: FeatureSet, test: FeatureSet) -> float:
    """Mean over taps of the squared distance between unit-normalized vectors."""
    if ref.tap_ids != test.tap_ids:
        raise ValueError(f"tap sets differ: {ref.tap_ids} vs {test.tap_ids}")
    total = 0.0
    for a, b in zip(ref.taps, test.taps):
        if a.dim != b.dim:
            raise ValueError(f"tap {a.tap_id!r}: dimension mismatch {a.dim} vs {b.dim}")
        na = float(np.linalg.norm(a.values))
        nb = float(np.linalg.norm(b.values))
        if na == 0.0 or nb == 0.0:
            raise ValueError(f"tap {a.tap_id!r}: zero-norm vector")
        d = a.values / na - b.values / nb
        total += float(np.dot(d, d))
    return total / len(ref.taps)


def deep_feature_distance(ref: Tile, test: Tile, extractor: Extractor) -> float:
    """LPIPS-style distance: unit-normalize per tap, average squared L2 over taps."""
    return distance_from_features(extractor.extract(ref), extractor.extract(test))


# ---------------------------------------------------------------------------
# Bundled report

KNOWN_METRICS = ("psnr", "ms_ssim", "deep_distance", "cosine")


@dataclass(frozen=True)
class MetricReport:
    """Metric values for one (reference, test) pair; unset means not requested."""

    psnr: float | None = None
    ms_ssim: float | None = None
    deep_distance: float | None = None
    cosine_profile: Mapping[str, float] | None = None

    def to_json_dict(self) -> dict:
        out: dict = {}
        if self.psnr is not None:
            out["psnr"] = "inf" if math.isinf(self.psnr) else self.psnr
        if self.ms_ssim is not None:
            out["ms_ssim"] = self.ms_ssim
        if self.deep_distance is not None:
            out["deep_distance"] = self.deep_distance
        if self.cosine_profile is not None:
            out["cosine"] = dict(self.cosine_profile)
        return out


def compute_metrics(
    ref: Tile,
    test: Tile,
    requested: Sequence[str],
    extractor: Extractor | None = None,
    allow_scale_reduction: bool = False,
) -> MetricReport:
    """Evaluate the requested metrics; extraction runs once per tile."""
    unknown = sorted(set(requested) - set(KNOWN_METRICS))
    if unknown:
        raise ValueError(f"unknown metrics {unknown}, expected a subset of {KNOWN_METRICS}")
    needs_features = "deep_distance" in requested or "cosine" in requested
    if needs_features and extractor is None:
        raise ValueError("deep_distance and cosine metrics need an extractor")

    fields: dict = {}
    if "psnr" in requested:
        fields["psnr"] = psnr(ref, test)
    if "ms_ssim" in requested:
        fields["ms_ssim"] = ms_ssim(ref, test, allow_scale_reduction=allow_scale_reduction)
    if needs_features:
        assert extractor is not None
        ref_features = extractor.extract(ref)
        test_features = extractor.extract(test)
        if "deep_distance" in requested:
            fields["deep_distance"] = distance_from_features(ref_features, test_features)
        if "cosine" in requested:
            fields["cosine_profile"] = profile_from_features(ref_features, test_features)
    return MetricReport(**fields)
