"""Uniform codec interface over the built-in codec and subprocess adapters."""

from __future__ import annotations

from abc import ABC, abstractmethod

from . import refcodec
from .adapters import AdapterHandle, adapter_decode, adapter_encode, probe_capabilities
from .imagecore import CompressedBlob, Tile


class Codec(ABC):
    """Anything that encodes a tile at a quality and decodes its own blobs."""

    name: str
    quality_min: float
    quality_max: float
    quality_kind: str  # "int" | "float"

    @abstractmethod
    def encode(self, tile: Tile, quality: float) -> CompressedBlob: ...

    @abstractmethod
    def decode(self, blob: CompressedBlob) -> Tile: ...


class ReferenceCodec(Codec):
    """Built-in codec; integer qualities 1..100."""

    quality_min = 1.0
    quality_max = 100.0
    quality_kind = "int"

    def __init__(self, subsample: bool = False):
        self.subsample = subsample
        self.name = refcodec.CODEC_ID + ("-420" if subsample else "")

    def encode(self, tile: Tile, quality: float) -> CompressedBlob:
        return refcodec.encode(tile, int(round(quality)), subsample=self.subsample)

    def decode(self, blob: CompressedBlob) -> Tile:
        return refcodec.decode(blob)

    @staticmethod
    def blob_from_bytes(data: bytes) -> CompressedBlob:
        """Recover blob metadata from the self-describing container header."""
        return refcodec.blob_from_bytes(data)


class AdapterCodec(Codec):
    """Subprocess adapter probed once; capabilities cached on the instance."""

    def __init__(self, handle: AdapterHandle):
        self.handle = handle
        self.info = probe_capabilities(handle)
        if "encode" not in self.info.modes or "decode" not in self.info.modes:
            raise ValueError(
                f"adapter {self.info.name!r} must support encode and decode, "
                f"got modes {self.info.modes}"
            )
        self.name = self.info.name
        assert self.info.quality_min is not None and self.info.quality_max is not None
        self.quality_min = self.info.quality_min
        self.quality_max = self.info.quality_max
        self.quality_kind = self.info.quality_kind or "float"

    def encode(self, tile: Tile, quality: float) -> CompressedBlob:
        return adapter_encode(self.handle, tile, quality, self.info)

    def decode(self, blob: CompressedBlob) -> Tile:
        return adapter_decode(self.handle, blob)


class ChainCodec(Codec):
    """Fixed leading stages feeding a final codec whose quality is the knob.

    Encoding runs the tile through each fixed (codec, quality) stage in
    order (encode then decode) and encodes the final stage's input with the
    trailing codec at the requested quality. The reported blob, and hence
    the effective bpp, is the final stage's alone.
    """

    def __init__(self, fixed_stages: list[tuple[Codec, float]], final: Codec, name: str = ""):
        self.fixed_stages = list(fixed_stages)
        self.final = final
        self.quality_min = final.quality_min
        self.quality_max = final.quality_max
        self.quality_kind = final.quality_kind
        self.name = name or "+".join(
            [f"{c.name}@{q:g}" for c, q in self.fixed_stages] + [final.name]
        )

    def encode(self, tile: Tile, quality: float) -> CompressedBlob:
        current = tile
        for codec, q in self.fixed_stages:
            current = codec.decode(codec.encode(current, q))
        return self.final.encode(current, quality)

    def decode(self, blob: CompressedBlob) -> Tile:
        return self.final.decode(blob)
