"""Shared tile generators and in-process synthetic codecs for the tests."""

from __future__ import annotations

import numpy as np

from tilebench import Tile
from tilebench.codecs import Codec
from tilebench.imagecore import CompressedBlob, write_pnm, read_pnm
from tilebench.refcodec.transform import quant_step


def random_tile(seed: int, size: int = 224) -> Tile:
    """Uniform random RGB noise; the harshest content for any codec."""
    rng = np.random.default_rng(seed)
    return Tile(pixels=rng.integers(0, 256, (size, size, 3), dtype=np.uint8), id=f"r{seed}")


def texture_tile(seed: int, size: int = 64) -> Tile:
    """Smooth multi-sinusoid color texture with mild noise, tissue-like."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size, 3))
    for _ in range(4):
        fx, fy = rng.uniform(0.01, 0.08, 2)
        ph = rng.uniform(0, 2 * np.pi, 3)
        amp = rng.uniform(15, 45, 3)
        for c in range(3):
            img[:, :, c] += amp[c] * np.sin(2 * np.pi * (fx * xx + fy * yy) + ph[c])
    img += 128 + rng.uniform(-25, 25, 3) + rng.normal(0, 2.0, img.shape)
    return Tile(pixels=np.clip(img, 0, 255).astype(np.uint8), id=f"t{seed}")


def graded_tile(seed: int, q_act: int, size: int = 64) -> Tile:
    """Gray sinusoid whose contrast is calibrated so its coefficients first
    survive quantization near quality q_act; below that the tile encodes to
    a degenerate (near-empty) stream."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    amp = quant_step(q_act) / 11.0
    fx, fy = rng.uniform(0.02, 0.10, 2)
    ph = rng.uniform(0, 2 * np.pi)
    g = np.clip(128 + amp * np.sin(2 * np.pi * (fx * xx + fy * yy) + ph), 0, 255)
    return Tile(pixels=np.repeat(g[:, :, None], 3, axis=2).astype(np.uint8), id=f"g{seed}")


# Activation qualities chosen so the corpus-mean bitrate curve has gentle
# plateaus near 0.25, 0.5, 1.0 and 1.75 bits per pixel, which integer
# quality steps can then hit within a 5% tolerance.
GRADED_SCHEDULE_50 = (
    (2, 2), (3, 2), (4, 3),
    (9, 2), (10, 3), (11, 2),
    (16, 2), (18, 3), (20, 2), (22, 3),
    (29, 2), (31, 3), (33, 2), (35, 3),
    (50, 2), (55, 3), (60, 2), (65, 3), (70, 3), (75, 3),
)


def graded_corpus(n: int = 50) -> list[Tile]:
    """n tiles (a multiple of 50) following GRADED_SCHEDULE_50."""
    if n % 50 != 0:
        raise ValueError("graded corpus sizes come in multiples of 50")
    scale = n // 50
    tiles = []
    seed = 0
    for q_act, count in GRADED_SCHEDULE_50:
        for _ in range(count * scale):
            tiles.append(graded_tile(seed, q_act))
            seed += 1
    return tiles


def texture_corpus(n: int = 50, size: int = 64) -> list[Tile]:
    return [texture_tile(seed, size=size) for seed in range(n)]


class LinearCodec(Codec):
    """Synthetic codec whose blob length equals the integer quality.

    On a 40x20 tile that makes bpp(q) = 8q/800 = q/100 exactly; decode
    returns a fixed gray tile (content is irrelevant for rate tests).
    """

    name = "linear"
    quality_min = 1.0
    quality_max = 100.0
    quality_kind = "int"

    def __init__(self, width: int = 40, height: int = 20):
        self.width = width
        self.height = height

    def tile(self, seed: int = 0) -> Tile:
        rng = np.random.default_rng(seed)
        px = rng.integers(0, 256, (self.height, self.width, 3), dtype=np.uint8)
        return Tile(pixels=px, id=f"lin{seed}")

    def encode(self, tile: Tile, quality: float) -> CompressedBlob:
        q = int(round(quality))
        return CompressedBlob(
            data=bytes(q), codec_id=self.name, quality=float(q),
            source_width=tile.width, source_height=tile.height,
        )

    def decode(self, blob: CompressedBlob) -> Tile:
        px = np.full((blob.source_height, blob.source_width, 3), 128, dtype=np.uint8)
        return Tile(pixels=px, id="lin-dec")


class HumpCodec(LinearCodec):
    """Blob length rises then falls with quality: deliberately non-monotone."""

    name = "hump"

    def encode(self, tile: Tile, quality: float) -> CompressedBlob:
        q = int(round(quality))
        length = q if q <= 50 else 110 - q
        return CompressedBlob(
            data=bytes(length), codec_id=self.name, quality=float(q),
            source_width=tile.width, source_height=tile.height,
        )


class PassthroughCodec(Codec):
    """Stores the tile verbatim; decode restores it exactly (constant bpp)."""

    name = "passthrough"
    quality_min = 1.0
    quality_max = 100.0
    quality_kind = "int"

    def encode(self, tile: Tile, quality: float) -> CompressedBlob:
        return CompressedBlob(
            data=write_pnm(tile), codec_id=self.name, quality=float(int(round(quality))),
            source_width=tile.width, source_height=tile.height,
        )

    def decode(self, blob: CompressedBlob) -> Tile:
        return read_pnm(blob.data)


class CountingCodec(PassthroughCodec):
    """Passthrough that counts encode/decode invocations."""

    name = "counting"

    def __init__(self) -> None:
        self.encode_calls = 0
        self.decode_calls = 0

    def encode(self, tile: Tile, quality: float) -> CompressedBlob:
        self.encode_calls += 1
        return super().encode(tile, quality)

    def decode(self, blob: CompressedBlob) -> Tile:
        self.decode_calls += 1
        return super().decode(blob)
