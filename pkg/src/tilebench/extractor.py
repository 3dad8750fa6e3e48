"""Built-in convolutional feature extractor with seeded weights.

A small residual network over RGB input scaled to [0, 1]:

    stem:   3x3 conv, stride 2, pad 1, 3 -> 16 channels, ReLU
    stage1: residual block 16 -> 16, stride 1
    stage2: residual block 16 -> 32, stride 2
    stage3: residual block 32 -> 64, stride 2
    stage4: residual block 64 -> 128, stride 2
    gap:    global average pool over the spatial grid -> 128
    fc:     fully connected 128 -> 64

A residual block is conv3x3 -> ReLU -> conv3x3 plus a skip connection,
then ReLU; the skip is a 1x1 convolution whenever channels or stride
change. Feature taps, shallow to deep: the four stage outputs flattened
row-major (channel, row, column), the pooled vector, and the fc output.

Seeded weights are He-uniform, U(-sqrt(6/fan_in), +sqrt(6/fan_in)),
drawn from SplitMix64(seed) in the fixed tensor order below, filling each
tensor row-major; biases start at zero. The weights container ("PBWT")
stores named float32 tensors little-endian:

    magic "PBWT", u32 version (= 1), u32 tensor count, then per tensor:
    u16 name length, name (utf-8), u8 rank, rank x u32 dims, float32 data.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imagecore import Tile
from .metrics import FeatureSet, FeatureVector
from .rng import unit_floats

MAGIC = b"PBWT"
VERSION = 1
MIN_TILE_SIDE = 32
TAP_IDS = ("stage1", "stage2", "stage3", "stage4", "gap", "fc")

# (stage name, in channels, out channels, stride)
_STAGES = (
    ("stage1", 16, 16, 1),
    ("stage2", 16, 32, 2),
    ("stage3", 32, 64, 2),
    ("stage4", 64, 128, 2),
)


class WeightsFormatError(ValueError):
    """Weights container is malformed or does not match the architecture."""


def expected_tensors() -> tuple[tuple[str, tuple[int, ...]], ...]:
    """Tensor names and shapes in draw/serialization order."""
    out: list[tuple[str, tuple[int, ...]]] = [
        ("stem.weight", (16, 3, 3, 3)),
        ("stem.bias", (16,)),
    ]
    for name, cin, cout, stride in _STAGES:
        out.append((f"{name}.conv1.weight", (cout, cin, 3, 3)))
        out.append((f"{name}.conv1.bias", (cout,)))
        out.append((f"{name}.conv2.weight", (cout, cout, 3, 3)))
        out.append((f"{name}.conv2.bias", (cout,)))
        if cin != cout or stride != 1:
            out.append((f"{name}.proj.weight", (cout, cin, 1, 1)))
            out.append((f"{name}.proj.bias", (cout,)))
    out.append(("fc.weight", (64, 128)))
    out.append(("fc.bias", (64,)))
    return tuple(out)


def _fan_in(name: str, shape: tuple[int, ...]) -> int:
    if name.endswith(".bias"):
        return 0
    if len(shape) == 4:  # conv: out, in, kh, kw
        return shape[1] * shape[2] * shape[3]
    return shape[1]  # fully connected: out, in


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int, pad: int) -> np.ndarray:
    """Cross-correlation of x (C, H, W) with weight (O, C, kh, kw), zero padding."""
    if x.ndim != 3 or weight.ndim != 4 or x.shape[0] != weight.shape[1]:
        raise ValueError(f"incompatible conv shapes {x.shape} and {weight.shape}")
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(x, (weight.shape[2], weight.shape[3]), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]
    out = np.tensordot(weight, windows, axes=([1, 2, 3], [0, 3, 4]))
    return out + bias[:, None, None]


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


@dataclass(frozen=True)
class FeatureExtractor:
    """Forward-only extractor over a fixed weights dict (name -> float32)."""

    weights: dict

    def __post_init__(self) -> None:
        expected = dict(expected_tensors())
        missing = sorted(set(expected) - set(self.weights))
        if missing:
            raise WeightsFormatError(f"missing tensors: {missing}")
        extra = sorted(set(self.weights) - set(expected))
        if extra:
            raise WeightsFormatError(f"unexpected tensors: {extra}")
        frozen = {}
        for name, shape in expected.items():
            arr = np.asarray(self.weights[name], dtype=np.float32)
            if arr.shape != shape:
                raise WeightsFormatError(
                    f"tensor {name!r} has shape {arr.shape}, expected {shape}"
                )
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            frozen[name] = arr
        object.__setattr__(self, "weights", frozen)

    @property
    def tap_ids(self) -> tuple[str, ...]:
        return TAP_IDS

    def _block(self, x: np.ndarray, name: str, stride: int, project: bool) -> np.ndarray:
        w = self.weights
        y = _relu(conv2d(x, w[f"{name}.conv1.weight"], w[f"{name}.conv1.bias"], stride, 1))
        y = conv2d(y, w[f"{name}.conv2.weight"], w[f"{name}.conv2.bias"], 1, 1)
        if project:
            skip = conv2d(x, w[f"{name}.proj.weight"], w[f"{name}.proj.bias"], stride, 0)
        else:
            skip = x
        return _relu(y + skip)

    def extract(self, tile: Tile) -> FeatureSet:
        if min(tile.width, tile.height) < MIN_TILE_SIDE:
            raise ValueError(
                f"tile sides must be at least {MIN_TILE_SIDE}, "
                f"got {tile.width}x{tile.height}"
            )
        x = (tile.pixels.astype(np.float32) / np.float32(255.0)).transpose(2, 0, 1)
        w = self.weights
        x = _relu(conv2d(x, w["stem.weight"], w["stem.bias"], 2, 1))
        taps: list[FeatureVector] = []
        for name, cin, cout, stride in _STAGES:
            x = self._block(x, name, stride, project=(cin != cout or stride != 1))
            taps.append(FeatureVector(tap_id=name, values=x.reshape(-1).astype(np.float64)))
        pooled = x.mean(axis=(1, 2))
        taps.append(FeatureVector(tap_id="gap", values=pooled.astype(np.float64)))
        fc = w["fc.weight"] @ pooled + w["fc.bias"]
        taps.append(FeatureVector(tap_id="fc", values=fc.astype(np.float64)))
        return FeatureSet(taps=tuple(taps))


def seeded_extractor(seed: int) -> FeatureExtractor:
    """He-uniform weights drawn from SplitMix64(seed); biases zero."""
    spec = expected_tensors()
    n_weights = sum(
        int(np.prod(shape)) for name, shape in spec if not name.endswith(".bias")
    )
    draws = unit_floats(seed, n_weights)
    weights: dict = {}
    offset = 0
    for name, shape in spec:
        if name.endswith(".bias"):
            weights[name] = np.zeros(shape, dtype=np.float32)
            continue
        n = int(np.prod(shape))
        bound = np.sqrt(6.0 / _fan_in(name, shape))
        block = (2.0 * draws[offset : offset + n] - 1.0) * bound
        weights[name] = block.astype(np.float32).reshape(shape)
        offset += n
    return FeatureExtractor(weights=weights)


def save_weights(extractor: FeatureExtractor) -> bytes:
    """Serialize to the PBWT container, tensors in architecture order."""
    out = bytearray()
    spec = expected_tensors()
    out += MAGIC
    out += struct.pack("<II", VERSION, len(spec))
    for name, _ in spec:
        arr = extractor.weights[name]
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded))
        out += encoded
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.astype("<f4").tobytes()
    return bytes(out)


def load_weights(data: bytes) -> FeatureExtractor:
    """Parse a PBWT container and validate it against the architecture."""
    if data[:4] != MAGIC:
        raise WeightsFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < 12:
        raise WeightsFormatError("truncated container header")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise WeightsFormatError(f"unsupported version {version}")
    offset = 12
    tensors: dict = {}
    for i in range(count):
        try:
            (name_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            if len(data) - offset < name_len:
                raise WeightsFormatError(f"truncated name in tensor {i}")
            name = data[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", data, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}I", data, offset)
            offset += 4 * rank
        except struct.error as exc:
            raise WeightsFormatError(f"truncated header of tensor {i}: {exc}") from exc
        if name in tensors:
            raise WeightsFormatError(f"tensor name collision: {name!r}")
        n = 1
        for d in dims:
            n *= d
        payload = data[offset : offset + 4 * n]
        if len(payload) != 4 * n:
            raise WeightsFormatError(f"truncated data for tensor {name!r}")
        offset += 4 * n
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
    if offset != len(data):
        raise WeightsFormatError(f"{len(data) - offset} trailing bytes")
    return FeatureExtractor(weights=tensors)
