"""Bitrate targeting, rate-distortion sweeps, and codec chaining.

Rate targeting bisects the codec's quality range against the corpus-mean
bits per pixel. A five-point pre-flight probe checks that bpp is
non-decreasing in quality; when it is not, targeting downgrades to a grid
search over twenty evenly spaced qualities. Integer-kind codecs bisect on
integers with ties toward the lower quality. The search returns a quality
it actually evaluated; `target_unreachable` is flagged exactly when the
target lies outside the bpp interval spanned by the quality endpoints.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .codecs import Codec
from .imagecore import CompressedBlob, Tile
from .metrics import (
    Extractor,
    PSNR_AGGREGATE_CAP_DB,
    ScaleReductionWarning,
    distance_from_features,
    ms_ssim,
    profile_from_features,
    psnr,
)
from .rng import SplitMix64

DEFAULT_TOLERANCE = 0.05
DEFAULT_MAX_ITER = 32
DEFAULT_SAMPLE_SIZE = 50
_PROBE_POINTS = 5
_GRID_POINTS = 20

FLAG_TARGET_UNREACHABLE = "target_unreachable"
FLAG_NONMONOTONE_GRID = "nonmonotone_grid"
FLAG_PSNR_CAPPED = "psnr_capped"
FLAG_SCALE_REDUCED = "scale_reduced"
FLAG_SHORTFALL = "tolerance_missed"


class PointFailure(RuntimeError):
    """A rate-distortion point could not be completed."""


@dataclass(frozen=True)
class RateTargetResult:
    quality: float
    achieved_bpp: float
    flags: tuple[str, ...]
    evaluations: tuple[tuple[float, float], ...]  # (quality, corpus-mean bpp)


@dataclass(frozen=True)
class RateDistortionPoint:
    codec_id: str
    target_bpp: float
    achieved_bpp: float
    quality: float
    tile_count: int
    aggregates: Mapping[str, tuple[float, float]]  # metric -> (mean, population std)
    flags: tuple[str, ...]


def _mean_bpp(codec: Codec, tiles: Sequence[Tile], quality: float) -> float:
    return float(np.mean([codec.encode(t, quality).bpp for t in tiles]))


def _quality_grid(codec: Codec, n: int) -> list[float]:
    qs = np.linspace(codec.quality_min, codec.quality_max, n)
    if codec.quality_kind == "int":
        qs = np.unique(np.rint(qs))
    return [float(q) for q in qs]


def target_bpp(
    codec: Codec,
    tiles: Sequence[Tile],
    target: float,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
) -> RateTargetResult:
    """Find the quality whose corpus-mean bpp is within tol * target of target."""
    if not tiles:
        raise ValueError("rate targeting needs at least one tile")
    if target <= 0:
        raise ValueError(f"target bpp must be positive, got {target}")
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")

    evaluated: dict[float, float] = {}

    def evaluate(q: float) -> float:
        if q not in evaluated:
            evaluated[q] = _mean_bpp(codec, tiles, q)
        return evaluated[q]

    probe = _quality_grid(codec, _PROBE_POINTS)
    probe_bpps = [evaluate(q) for q in probe]
    lo_bpp, hi_bpp = evaluate(codec.quality_min), evaluate(codec.quality_max)
    unreachable = not (min(lo_bpp, hi_bpp) <= target <= max(lo_bpp, hi_bpp))

    flags: list[str] = []
    monotone = all(a <= b for a, b in zip(probe_bpps, probe_bpps[1:]))
    if not monotone:
        flags.append(FLAG_NONMONOTONE_GRID)
        for q in _quality_grid(codec, _GRID_POINTS):
            evaluate(q)
    else:
        lo, hi = codec.quality_min, codec.quality_max
        integer = codec.quality_kind == "int"
        within = lambda q: abs(evaluated[q] - target) <= tol * target
        if not (within(lo) or within(hi)) and not unreachable:
            for _ in range(max_iter):
                mid = (lo + hi) / 2.0
                if integer:
                    mid = float(math.floor(mid))  # ties toward the lower quality
                    if mid <= lo or mid >= hi:
                        break
                bpp = evaluate(mid)
                if abs(bpp - target) <= tol * target:
                    break
                if bpp < target:
                    lo = mid
                else:
                    hi = mid
                if not integer and hi - lo < 1e-9:
                    break

    best_q = min(evaluated, key=lambda q: (abs(evaluated[q] - target), q))
    if unreachable:
        flags.append(FLAG_TARGET_UNREACHABLE)
        # closest endpoint wins when the target is out of reach
        best_q = min((codec.quality_min, codec.quality_max),
                     key=lambda q: (abs(evaluated[q] - target), q))
    elif abs(evaluated[best_q] - target) > tol * target:
        flags.append(FLAG_SHORTFALL)
    ordered = tuple(sorted(evaluated.items()))
    return RateTargetResult(
        quality=best_q,
        achieved_bpp=evaluated[best_q],
        flags=tuple(flags),
        evaluations=ordered,
    )


def seeded_sample(tiles: Sequence[Tile], size: int, seed: int) -> list[Tile]:
    """Deterministic without-replacement subsample, in draw order."""
    if size >= len(tiles):
        return list(tiles)
    rng = SplitMix64(seed)
    indices = list(range(len(tiles)))
    rng.shuffle(indices)
    return [tiles[i] for i in sorted(indices[:size])]


def _metric_values(
    ref: Tile,
    test: Tile,
    metrics: Sequence[str],
    extractor: Extractor | None,
    allow_scale_reduction: bool,
) -> dict[str, float]:
    out: dict[str, float] = {}
    features = None
    if "deep_distance" in metrics or "cosine" in metrics:
        assert extractor is not None
        features = (extractor.extract(ref), extractor.extract(test))
    if "psnr" in metrics:
        out["psnr"] = psnr(ref, test)
    if "ms_ssim" in metrics:
        out["ms_ssim"] = ms_ssim(ref, test, allow_scale_reduction=allow_scale_reduction)
    if features is not None:
        if "deep_distance" in metrics:
            out["deep_distance"] = distance_from_features(*features)
        if "cosine" in metrics:
            for tap_id, value in profile_from_features(*features).items():
                out[f"cosine_{tap_id}"] = value
    return out


def rd_point(
    codec: Codec,
    tiles: Sequence[Tile],
    target: float,
    metrics: Sequence[str],
    extractor: Extractor | None = None,
    seed: int = 0,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
    sample_size: int = DEFAULT_SAMPLE_SIZE,
    allow_scale_reduction: bool = False,
    raw_sink: list | None = None,
) -> RateDistortionPoint:
    """Rate-target one bitrate, then encode/decode the full corpus and aggregate."""
    if not tiles:
        raise ValueError("rd_point needs at least one tile")
    bad = sorted(set(metrics) - {"psnr", "ms_ssim", "deep_distance", "cosine"})
    if bad:
        raise ValueError(f"unknown metrics {bad}")
    if ("deep_distance" in metrics or "cosine" in metrics) and extractor is None:
        raise ValueError("deep_distance and cosine metrics need an extractor")

    sample = seeded_sample(tiles, sample_size, seed)
    rt = target_bpp(codec, sample, target, tol=tol, max_iter=max_iter)

    flags = set(rt.flags)
    per_metric: dict[str, list[float]] = {}
    bpps: list[float] = []
    for tile in tiles:
        try:
            blob = codec.encode(tile, rt.quality)
            decoded = codec.decode(blob)
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", ScaleReductionWarning)
                values = _metric_values(tile, decoded, metrics, extractor, allow_scale_reduction)
            if any(issubclass(w.category, ScaleReductionWarning) for w in caught):
                flags.add(FLAG_SCALE_REDUCED)
        except Exception as exc:
            raise PointFailure(
                f"codec {codec.name!r} target {target}: tile {tile.id or '<unnamed>'}: {exc}"
            ) from exc
        bpps.append(blob.bpp)
        for key, value in values.items():
            per_metric.setdefault(key, []).append(value)
            if raw_sink is not None:
                raw_sink.append((codec.name, target, tile.id, key, value))

    aggregates: dict[str, tuple[float, float]] = {}
    for key, vals in per_metric.items():
        if key == "psnr" and any(math.isinf(v) for v in vals):
            flags.add(FLAG_PSNR_CAPPED)
            vals = [min(v, PSNR_AGGREGATE_CAP_DB) for v in vals]
        arr = np.asarray(vals, dtype=np.float64)
        aggregates[key] = (float(arr.mean()), float(arr.std()))

    return RateDistortionPoint(
        codec_id=codec.name,
        target_bpp=target,
        achieved_bpp=float(np.mean(bpps)),
        quality=rt.quality,
        tile_count=len(tiles),
        aggregates=aggregates,
        flags=tuple(sorted(flags)),
    )


def sweep(
    codec: Codec,
    tiles: Sequence[Tile],
    targets: Sequence[float],
    metrics: Sequence[str],
    extractor: Extractor | None = None,
    seed: int = 0,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
    sample_size: int = DEFAULT_SAMPLE_SIZE,
    allow_scale_reduction: bool = False,
) -> list[RateDistortionPoint]:
    """One rate-distortion point per target; targets must ascend."""
    if list(targets) != sorted(targets):
        raise ValueError("targets must be sorted ascending")
    return [
        rd_point(
            codec, tiles, target, metrics, extractor=extractor, seed=seed,
            tol=tol, max_iter=max_iter, sample_size=sample_size,
            allow_scale_reduction=allow_scale_reduction,
        )
        for target in targets
    ]


# ---------------------------------------------------------------------------
# Chains


@dataclass(frozen=True)
class ChainStage:
    """One stage: a codec plus either a concrete quality or a bpp target."""

    codec: Codec
    quality: float | None = None
    target: float | None = None

    def __post_init__(self) -> None:
        if (self.quality is None) == (self.target is None):
            raise ValueError("a chain stage needs exactly one of quality or target")


@dataclass(frozen=True)
class ChainSpec:
    stages: tuple[ChainStage, ...]

    def __post_init__(self) -> None:
        if not self.stages:
            raise ValueError("a chain needs at least one stage")


def resolve_chain(
    chain: ChainSpec,
    tiles: Sequence[Tile],
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
) -> ChainSpec:
    """Replace per-stage bpp targets with concrete qualities, front to back.

    Each stage's target is resolved against the corpus as transformed by the
    stages before it, then the corpus is passed through that stage.
    """
    current = list(tiles)
    resolved: list[ChainStage] = []
    for stage in chain.stages:
        if stage.quality is not None:
            quality = stage.quality
        else:
            assert stage.target is not None
            quality = target_bpp(stage.codec, current, stage.target, tol=tol, max_iter=max_iter).quality
        resolved.append(ChainStage(codec=stage.codec, quality=quality))
        current = [stage.codec.decode(stage.codec.encode(t, quality)) for t in current]
    return ChainSpec(stages=tuple(resolved))


def chain_compress(chain: ChainSpec, tile: Tile) -> tuple[Tile, CompressedBlob]:
    """Run one tile through every stage; the final stage's blob is the result."""
    blob: CompressedBlob | None = None
    current = tile
    for i, stage in enumerate(chain.stages):
        if stage.quality is None:
            raise ValueError(f"stage {i} still has an unresolved bpp target")
        try:
            blob = stage.codec.encode(current, stage.quality)
            current = stage.codec.decode(blob)
        except Exception as exc:
            raise PointFailure(f"chain stage {i} ({stage.codec.name}): {exc}") from exc
    assert blob is not None
    return current, blob
