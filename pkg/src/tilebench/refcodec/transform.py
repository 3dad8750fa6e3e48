"""Orthonormal 8x8 DCT-II, the quality-to-step quantizer, and zigzag order."""

from __future__ import annotations

import math

import numpy as np

BLOCK = 8

# Orthonormal DCT-II basis: row k is a_k * cos(pi * (2n + 1) * k / 16) with
# a_0 = sqrt(1/8) and a_k = sqrt(2/8). C @ C.T is the identity.
_DCT_MATRIX = np.zeros((BLOCK, BLOCK), dtype=np.float64)
for _k in range(BLOCK):
    _a = math.sqrt(1.0 / BLOCK) if _k == 0 else math.sqrt(2.0 / BLOCK)
    for _n in range(BLOCK):
        _DCT_MATRIX[_k, _n] = _a * math.cos(math.pi * (2 * _n + 1) * _k / (2 * BLOCK))
_DCT_MATRIX.setflags(write=False)


def dct_matrix() -> np.ndarray:
    return _DCT_MATRIX


def _check_block(block: np.ndarray) -> np.ndarray:
    arr = np.asarray(block, dtype=np.float64)
    if arr.shape[-2:] != (BLOCK, BLOCK):
        raise ValueError(f"expected trailing 8x8 block shape, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("block contains non-finite values")
    return arr


def dct2_8x8(block: np.ndarray) -> np.ndarray:
    """Forward 2-D DCT-II of one 8x8 block (or a batch stacked on axis 0)."""
    arr = _check_block(block)
    return _DCT_MATRIX @ arr @ _DCT_MATRIX.T


def idct2_8x8(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of dct2_8x8."""
    arr = _check_block(coeffs)
    return _DCT_MATRIX.T @ arr @ _DCT_MATRIX


def quant_step(quality: int) -> int:
    """Uniform quantizer step for a quality in [1, 100].

    scale = 5000 / q for q < 50, else 200 - 2q; the flat base table is 16,
    so step = max(1, round(16 * scale / 100)). Half counts round up.
    """
    q = int(quality)
    if q != quality or not 1 <= q <= 100:
        raise ValueError(f"quality must be an integer in [1, 100], got {quality!r}")
    scale = 5000.0 / q if q < 50 else 200.0 - 2.0 * q
    return max(1, int(math.floor(16.0 * scale / 100.0 + 0.5)))


def quantize(coeffs: np.ndarray, quality: int) -> np.ndarray:
    """Round coefficients to integer multiples of the quality's step."""
    step = quant_step(quality)
    arr = np.asarray(coeffs, dtype=np.float64)
    return np.rint(arr / step).astype(np.int32)


def dequantize(qcoeffs: np.ndarray, quality: int) -> np.ndarray:
    step = quant_step(quality)
    return np.asarray(qcoeffs, dtype=np.float64) * step


def _zigzag_order() -> list[tuple[int, int]]:
    # walk anti-diagonals, alternating direction, starting upward from (0,0)
    order = []
    for s in range(2 * BLOCK - 1):
        cells = [(r, s - r) for r in range(BLOCK) if 0 <= s - r < BLOCK]
        if s % 2 == 0:
            cells.reverse()  # even diagonals run bottom-left to top-right
        order.extend(cells)
    return order

ZIGZAG = tuple(_zigzag_order())
# flat index into a row-major 8x8 block for each zigzag position
ZIGZAG_FLAT = np.array([r * BLOCK + c for r, c in ZIGZAG], dtype=np.intp)
_INVERSE_FLAT = np.empty(BLOCK * BLOCK, dtype=np.intp)
_INVERSE_FLAT[ZIGZAG_FLAT] = np.arange(BLOCK * BLOCK)


def zigzag(block: np.ndarray) -> np.ndarray:
    """Serialize an 8x8 block into the 64-entry zigzag vector."""
    arr = np.asarray(block)
    if arr.shape != (BLOCK, BLOCK):
        raise ValueError(f"zigzag expects an 8x8 block, got {arr.shape}")
    return arr.reshape(-1)[ZIGZAG_FLAT]


def inverse_zigzag(vec: np.ndarray) -> np.ndarray:
    """Rebuild the 8x8 block from its zigzag vector."""
    arr = np.asarray(vec)
    if arr.shape != (BLOCK * BLOCK,):
        raise ValueError(f"inverse_zigzag expects 64 entries, got {arr.shape}")
    return arr[_INVERSE_FLAT].reshape(BLOCK, BLOCK)
