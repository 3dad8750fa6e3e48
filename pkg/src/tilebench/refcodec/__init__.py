"""Built-in reference lossy codec: transform, quantizer, entropy coder, container."""

from .codec import CODEC_ID, MAGIC, DecodeError, blob_from_bytes, decode, encode
from .huffman import (
    EntropyError,
    entropy_bound,
    entropy_decode,
    entropy_encode,
)
from .transform import (
    BLOCK,
    ZIGZAG,
    dct2_8x8,
    dequantize,
    idct2_8x8,
    inverse_zigzag,
    quant_step,
    quantize,
    zigzag,
)

__all__ = [
    "BLOCK",
    "CODEC_ID",
    "MAGIC",
    "ZIGZAG",
    "DecodeError",
    "EntropyError",
    "blob_from_bytes",
    "decode",
    "dct2_8x8",
    "dequantize",
    "encode",
    "entropy_bound",
    "entropy_decode",
    "entropy_encode",
    "idct2_8x8",
    "inverse_zigzag",
    "quant_step",
    "quantize",
    "zigzag",
]
