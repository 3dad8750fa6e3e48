"""Built-in lossy tile codec and its container format.

Pipeline per channel: full-range RGB -> YCbCr, optional 4:2:0 chroma
subsampling, edge-replication padding to a multiple of 8, level shift by
-128, 8x8 orthonormal DCT, uniform quantization with the quality-mapped
step, zigzag serialization, canonical-Huffman entropy coding.

Container, little-endian:

    magic "PBC1"
    u16 width, u16 height    (source tile dimensions)
    u8 quality               (1..100)
    u8 flags                 (bit 0: chroma is 4:2:0 subsampled)
    three entropy-coded sections (Y, Cb, Cr), see huffman module

Encoding the same tile twice yields byte-identical blobs.
"""

from __future__ import annotations

import struct

import numpy as np

from ..imagecore import CompressedBlob, Plane, Tile, rgb_to_ycbcr, ycbcr_to_rgb
from .huffman import EntropyError, _decode_stream, entropy_encode
from .transform import ZIGZAG_FLAT, _INVERSE_FLAT, dct_matrix, quant_step

MAGIC = b"PBC1"
CODEC_ID = "refcodec"
FLAG_SUBSAMPLE_420 = 0x01


class DecodeError(ValueError):
    """Blob does not parse as this codec's container."""


def _pad_to_block(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    ph = (-h) % 8
    pw = (-w) % 8
    if ph or pw:
        plane = np.pad(plane, ((0, ph), (0, pw)), mode="edge")
    return plane


def _blocks_from_plane(plane: np.ndarray) -> np.ndarray:
    """(h, w) -> (n_blocks, 8, 8) in row-major block order."""
    h, w = plane.shape
    return plane.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3).reshape(-1, 8, 8)


def _plane_from_blocks(blocks: np.ndarray, h: int, w: int) -> np.ndarray:
    return blocks.reshape(h // 8, w // 8, 8, 8).transpose(0, 2, 1, 3).reshape(h, w)


def _subsample_420(plane: np.ndarray) -> np.ndarray:
    """2x2 mean pool with edge replication for odd dimensions."""
    h, w = plane.shape
    if h % 2 or w % 2:
        plane = np.pad(plane, ((0, h % 2), (0, w % 2)), mode="edge")
    pooled = plane.astype(np.float64).reshape(plane.shape[0] // 2, 2, plane.shape[1] // 2, 2)
    pooled = pooled.mean(axis=(1, 3))
    return np.floor(pooled + 0.5).astype(np.float64)


def _encode_plane(plane: np.ndarray, quality: int) -> bytes:
    padded = _pad_to_block(plane.astype(np.float64)) - 128.0
    blocks = _blocks_from_plane(padded)
    c = dct_matrix()
    coeffs = c @ blocks @ c.T
    step = quant_step(quality)
    q = np.rint(coeffs / step).astype(np.int32)
    symbols = q.reshape(-1, 64)[:, ZIGZAG_FLAT].reshape(-1)
    return entropy_encode(symbols)


def _decode_plane(symbols: np.ndarray, h: int, w: int, quality: int) -> np.ndarray:
    ph, pw = h + ((-h) % 8), w + ((-w) % 8)
    n_blocks = (ph // 8) * (pw // 8)
    if symbols.size != n_blocks * 64:
        raise DecodeError(
            f"channel has {symbols.size} symbols, expected {n_blocks * 64} "
            f"for a {w}x{h} plane"
        )
    q = symbols.reshape(-1, 64)[:, _INVERSE_FLAT].reshape(-1, 8, 8)
    step = quant_step(quality)
    coeffs = q.astype(np.float64) * step
    c = dct_matrix()
    blocks = c.T @ coeffs @ c
    plane = _plane_from_blocks(blocks, ph, pw) + 128.0
    return plane[:h, :w]


def encode(tile: Tile, quality: int, subsample: bool = False) -> CompressedBlob:
    """Encode a tile at an integer quality in [1, 100]."""
    step = quant_step(quality)  # validates the quality range
    assert step >= 1
    if tile.width > 0xFFFF or tile.height > 0xFFFF:
        raise ValueError("tile dimensions exceed the u16 container fields")
    y, cb, cr = rgb_to_ycbcr(tile)
    channels = [y.samples.astype(np.float64)]
    for chroma in (cb, cr):
        plane = chroma.samples.astype(np.float64)
        channels.append(_subsample_420(plane) if subsample else plane)

    flags = FLAG_SUBSAMPLE_420 if subsample else 0
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HHBB", tile.width, tile.height, int(quality), flags)
    for plane in channels:
        out += _encode_plane(plane, int(quality))
    return CompressedBlob(
        data=bytes(out),
        codec_id=CODEC_ID,
        quality=float(quality),
        source_width=tile.width,
        source_height=tile.height,
    )


def blob_from_bytes(data: bytes) -> CompressedBlob:
    """Wrap raw container bytes, recovering metadata from the header."""
    if len(data) < 8:
        raise DecodeError("blob shorter than the container header")
    if data[:4] != MAGIC:
        raise DecodeError(f"foreign magic {data[:4]!r}, expected {MAGIC!r}")
    width, height, quality, flags = struct.unpack_from("<HHBB", data, 4)
    if width < 1 or height < 1:
        raise DecodeError(f"non-positive dimensions {width}x{height}")
    codec_id = CODEC_ID + ("-420" if flags & FLAG_SUBSAMPLE_420 else "")
    return CompressedBlob(
        data=data, codec_id=codec_id, quality=float(quality),
        source_width=width, source_height=height,
    )


def decode(blob: CompressedBlob | bytes) -> Tile:
    """Decode a container produced by encode()."""
    data = blob.data if isinstance(blob, CompressedBlob) else blob
    if len(data) < 10:
        raise DecodeError("blob shorter than the container header")
    if data[:4] != MAGIC:
        raise DecodeError(f"foreign magic {data[:4]!r}, expected {MAGIC!r}")
    width, height, quality, flags = struct.unpack_from("<HHBB", data, 4)
    if width < 1 or height < 1:
        raise DecodeError(f"non-positive dimensions {width}x{height}")
    if not 1 <= quality <= 100:
        raise DecodeError(f"quality {quality} outside [1, 100]")
    if flags & ~FLAG_SUBSAMPLE_420:
        raise DecodeError(f"unknown flag bits 0x{flags:02x}")
    subsampled = bool(flags & FLAG_SUBSAMPLE_420)

    chroma_w = (width + 1) // 2 if subsampled else width
    chroma_h = (height + 1) // 2 if subsampled else height
    dims = [(width, height), (chroma_w, chroma_h), (chroma_w, chroma_h)]
    offset = 10  # 4 magic bytes + <HHBB> fixed header
    planes = []
    for (w, h) in dims:
        try:
            symbols, offset = _decode_stream(data, offset)
        except EntropyError as exc:
            raise DecodeError(str(exc)) from exc
        planes.append(_decode_plane(symbols, h, w, quality))
    if offset != len(data):
        raise DecodeError(f"{len(data) - offset} trailing bytes after the last channel")

    yp = planes[0]
    if subsampled:
        # nearest-neighbour upsample back to full resolution
        cbp = planes[1].repeat(2, axis=0).repeat(2, axis=1)[:height, :width]
        crp = planes[2].repeat(2, axis=0).repeat(2, axis=1)[:height, :width]
    else:
        cbp, crp = planes[1], planes[2]

    def clamp(p: np.ndarray) -> Plane:
        return Plane(samples=np.clip(np.floor(p + 0.5), 0, 255).astype(np.uint8))

    return ycbcr_to_rgb(clamp(yp), clamp(cbp), clamp(crp))
