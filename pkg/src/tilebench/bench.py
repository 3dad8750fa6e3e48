"""Timing harness for encode and decode throughput.

Measurements run sequentially on one thread using the monotonic
performance counter. Warmup passes execute the same work but are excluded
from every reported number. Reported throughput is
tile_count * reps / total_seconds; per-rep wall times and their median are
also included so outliers stay visible.
"""

from __future__ import annotations

import platform
import statistics
import time
from dataclasses import dataclass
from typing import Sequence

from .codecs import Codec
from .imagecore import CompressedBlob, Tile

DEFAULT_WARMUP = 1
DEFAULT_REPS = 3


@dataclass(frozen=True)
class TimingReport:
    codec_id: str
    phase: str  # "encode" | "decode"
    quality: float
    tile_count: int
    reps: int
    warmup_reps: int
    total_seconds: float
    tiles_per_second: float
    per_rep_seconds: tuple[float, ...]
    median_rep_seconds: float
    host: str

    def to_json_dict(self) -> dict:
        return {
            "codec": self.codec_id,
            "phase": self.phase,
            "quality": self.quality,
            "tile_count": self.tile_count,
            "reps": self.reps,
            "warmup_reps": self.warmup_reps,
            "total_seconds": self.total_seconds,
            "tiles_per_second": self.tiles_per_second,
            "per_rep_seconds": list(self.per_rep_seconds),
            "median_rep_seconds": self.median_rep_seconds,
            "host": self.host,
        }


def _host_descriptor() -> str:
    return f"{platform.platform()} / python {platform.python_version()}"


def _validate(tile_count: int, warmup: int, reps: int) -> None:
    if tile_count < 1:
        raise ValueError("timing needs at least one tile")
    if warmup < 0:
        raise ValueError("warmup cannot be negative")
    if reps < 1:
        raise ValueError("reps must be at least 1")


def time_encode(
    codec: Codec,
    tiles: Sequence[Tile],
    quality: float,
    warmup: int = DEFAULT_WARMUP,
    reps: int = DEFAULT_REPS,
) -> tuple[TimingReport, list[CompressedBlob]]:
    """Time encoding of the whole corpus `reps` times after `warmup` passes.

    Returns the report and the blobs from the final pass for the paired
    decode measurement.
    """
    _validate(len(tiles), warmup, reps)
    blobs: list[CompressedBlob] = []
    for _ in range(warmup):
        blobs = [codec.encode(t, quality) for t in tiles]
    per_rep: list[float] = []
    for _ in range(reps):
        start = time.perf_counter()
        blobs = [codec.encode(t, quality) for t in tiles]
        per_rep.append(time.perf_counter() - start)
    total = sum(per_rep)
    return (
        TimingReport(
            codec_id=codec.name,
            phase="encode",
            quality=float(quality),
            tile_count=len(tiles),
            reps=reps,
            warmup_reps=warmup,
            total_seconds=total,
            tiles_per_second=len(tiles) * reps / total,
            per_rep_seconds=tuple(per_rep),
            median_rep_seconds=statistics.median(per_rep),
            host=_host_descriptor(),
        ),
        blobs,
    )


def time_decode(
    codec: Codec,
    blobs: Sequence[CompressedBlob],
    warmup: int = DEFAULT_WARMUP,
    reps: int = DEFAULT_REPS,
) -> TimingReport:
    """Time decoding of the blobs; every decode is dimension-checked."""
    _validate(len(blobs), warmup, reps)

    def decode_all() -> None:
        for blob in blobs:
            tile = codec.decode(blob)
            if (tile.width, tile.height) != (blob.source_width, blob.source_height):
                raise ValueError(
                    f"decode returned {tile.width}x{tile.height}, blob says "
                    f"{blob.source_width}x{blob.source_height}"
                )

    for _ in range(warmup):
        decode_all()
    per_rep: list[float] = []
    for _ in range(reps):
        start = time.perf_counter()
        decode_all()
        per_rep.append(time.perf_counter() - start)
    total = sum(per_rep)
    quality = blobs[0].quality if blobs else 0.0
    return TimingReport(
        codec_id=codec.name,
        phase="decode",
        quality=float(quality),
        tile_count=len(blobs),
        reps=reps,
        warmup_reps=warmup,
        total_seconds=total,
        tiles_per_second=len(blobs) * reps / total,
        per_rep_seconds=tuple(per_rep),
        median_rep_seconds=statistics.median(per_rep),
        host=_host_descriptor(),
    )
