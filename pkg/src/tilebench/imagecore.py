"""Core raster types, binary PNM (P6) I/O, and color primitives.

A Tile is an immutable 8-bit RGB raster stored row-major. Planes are
single-channel rasters used by the codec and the metrics. All color math
uses the full-range JFIF conventions; the forward and inverse transforms
round to integers, which costs at most one count per channel on a round
trip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PnmError(ValueError):
    """Malformed PNM data. The message names the byte offset when known."""


def _round_half_up(x: np.ndarray) -> np.ndarray:
    # deterministic round: .5 always goes up, unlike numpy's round-to-even
    return np.floor(x + 0.5)


@dataclass(frozen=True)
class Tile:
    """Immutable RGB tile: pixels shape (height, width, 3), dtype uint8."""

    pixels: np.ndarray
    id: str = ""

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"tile pixels must have shape (h, w, 3), got {arr.shape}")
        if arr.dtype != np.uint8:
            raise ValueError(f"tile pixels must be uint8, got {arr.dtype}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("tile must have at least one pixel")
        arr = np.ascontiguousarray(arr)
        if arr.flags.writeable:
            arr = arr.copy()
            arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


@dataclass(frozen=True)
class Plane:
    """Single-channel raster, shape (height, width). Dtype varies by use."""

    samples: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples)
        if arr.ndim != 2:
            raise ValueError(f"plane must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("plane must have at least one sample")
        object.__setattr__(self, "samples", arr)

    @property
    def width(self) -> int:
        return int(self.samples.shape[1])

    @property
    def height(self) -> int:
        return int(self.samples.shape[0])


@dataclass(frozen=True)
class CompressedBlob:
    """Opaque encoded bytes plus the provenance needed to account for them."""

    data: bytes
    codec_id: str
    quality: float
    source_width: int
    source_height: int

    def __post_init__(self) -> None:
        if self.source_width < 1 or self.source_height < 1:
            raise ValueError("blob source dimensions must be positive")

    @property
    def bpp(self) -> float:
        return bits_per_pixel(len(self.data), self.source_width, self.source_height)


def bits_per_pixel(payload_len: int, width: int, height: int) -> float:
    """8 * payload_len / (width * height)."""
    if width <= 0 or height <= 0:
        raise ValueError("bits_per_pixel needs a positive pixel count")
    if payload_len < 0:
        raise ValueError("payload length cannot be negative")
    return 8.0 * payload_len / (width * height)


# ---------------------------------------------------------------------------
# PNM (P6) I/O


def _parse_p6_header(data: bytes) -> tuple[int, int, int]:
    """Parse a P6 header, returning (width, height, payload offset)."""
    if data[:2] != b"P6":
        got = data[:2].decode("latin-1", "replace")
        raise PnmError(f"unsupported magic {got!r} at byte 0, expected 'P6'")
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        # skip whitespace and '#' comment lines between header tokens
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token:
            raise PnmError(f"truncated header at byte {start}")
        try:
            fields.append(int(token))
        except ValueError:
            raise PnmError(
                f"bad header token {token.decode('latin-1', 'replace')!r} at byte {start}"
            ) from None
    if pos >= len(data):
        raise PnmError(f"missing whitespace after maxval at byte {pos}")
    pos += 1  # exactly one whitespace byte separates header from payload
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PnmError(f"non-positive dimensions {width}x{height}")
    if maxval != 255:
        raise PnmError(f"unsupported maxval {maxval}, only 255 is handled")
    return width, height, pos


def read_pnm(data: bytes, id: str = "") -> Tile:
    """Decode binary P6 bytes into a Tile."""
    width, height, pos = _parse_p6_header(data)
    need = width * height * 3
    payload = data[pos : pos + need]
    if len(payload) != need:
        raise PnmError(
            f"truncated payload at byte {pos + len(payload)}: "
            f"expected {need} bytes, found {len(payload)}"
        )
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return Tile(pixels=arr, id=id)


def write_pnm(tile: Tile) -> bytes:
    """Encode a Tile as canonical P6: header 'P6\\n{w} {h}\\n255\\n' + raw RGB."""
    header = f"P6\n{tile.width} {tile.height}\n255\n".encode("ascii")
    return header + tile.pixels.tobytes()


def read_pnm_size(data: bytes) -> tuple[int, int]:
    """Return (width, height) from a P6 header without decoding the payload."""
    width, height, _ = _parse_p6_header(data)
    return width, height


# ---------------------------------------------------------------------------
# Color transforms (JFIF full range)


def to_luma(tile: Tile) -> Plane:
    """BT.601 luma: Y = round(0.299 R + 0.587 G + 0.114 B), clamped to [0, 255]."""
    rgb = tile.pixels.astype(np.float64)
    y = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    y = np.clip(_round_half_up(y), 0, 255)
    return Plane(samples=y.astype(np.uint8))


def rgb_to_ycbcr(tile: Tile) -> tuple[Plane, Plane, Plane]:
    """Full-range RGB to YCbCr, each channel rounded and clamped to [0, 255]."""
    rgb = tile.pixels.astype(np.float64)
    r, g, b = rgb[:, :, 0], rgb[:, :, 1], rgb[:, :, 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    planes = []
    for chan in (y, cb, cr):
        chan = np.clip(_round_half_up(chan), 0, 255)
        planes.append(Plane(samples=chan.astype(np.uint8)))
    return planes[0], planes[1], planes[2]


def ycbcr_to_rgb(y: Plane, cb: Plane, cr: Plane, id: str = "") -> Tile:
    """Inverse full-range transform, rounded and clamped to [0, 255]."""
    if not (y.samples.shape == cb.samples.shape == cr.samples.shape):
        raise ValueError("YCbCr planes must share dimensions")
    yf = y.samples.astype(np.float64)
    cbf = cb.samples.astype(np.float64) - 128.0
    crf = cr.samples.astype(np.float64) - 128.0
    r = yf + 1.402 * crf
    g = yf - 0.344136 * cbf - 0.714136 * crf
    b = yf + 1.772 * cbf
    rgb = np.stack([r, g, b], axis=2)
    rgb = np.clip(_round_half_up(rgb), 0, 255).astype(np.uint8)
    return Tile(pixels=rgb, id=id)
