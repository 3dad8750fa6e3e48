"""Canonical prefix (Huffman) entropy coding over signed integer symbols.

Wire layout of one coded section, all integers little-endian:

    u32  symbol count N
    u16  header byte length (3 bytes per distinct symbol)
    then per distinct symbol, in canonical (code length, symbol) order:
        i16  symbol value
        u8   code length in bits
    then the payload: codewords packed MSB-first, zero-padded to a byte.

Canonical codes are assigned in (length, symbol) order, so the lengths alone
reconstruct the codebook. A single-symbol alphabet gets code length 0 and an
empty payload; the count field alone reconstructs the stream.
"""

from __future__ import annotations

import heapq
import struct

import numpy as np

SYMBOL_MIN = -32768
SYMBOL_MAX = 32767
_MAX_TABLE_ENTRIES = 21845  # 3 bytes each; the u16 header length caps the table
_LUT_BITS = 12  # primary decode table; longer codes take the slow walk


class EntropyError(ValueError):
    """Corrupted or truncated entropy-coded data."""


def entropy_bound(symbols) -> float:
    """Shannon bound in bits/symbol: -sum p * log2 p over the empirical law."""
    arr = np.asarray(symbols).reshape(-1)
    if arr.size == 0:
        raise ValueError("entropy of an empty stream is undefined")
    _, counts = np.unique(arr, return_counts=True)
    p = counts / arr.size
    return float(-(p * np.log2(p)).sum())


def _huffman_lengths(counts: np.ndarray) -> np.ndarray:
    """Optimal code lengths for symbols with the given positive counts.

    Tree built with a heap keyed on (count, creation order) so ties break
    deterministically. Returns a length per input position.
    """
    n = len(counts)
    if n == 1:
        return np.array([0], dtype=np.uint8)
    parent = np.full(2 * n - 1, -1, dtype=np.int64)
    heap = [(int(c), i) for i, c in enumerate(counts)]
    heapq.heapify(heap)
    nxt = n
    while len(heap) > 1:
        c1, i1 = heapq.heappop(heap)
        c2, i2 = heapq.heappop(heap)
        parent[i1] = nxt
        parent[i2] = nxt
        heapq.heappush(heap, (c1 + c2, nxt))
        nxt += 1
    depth = np.zeros(2 * n - 1, dtype=np.int64)
    for i in range(2 * n - 3, -1, -1):  # parents always have larger indices
        depth[i] = depth[parent[i]] + 1
    return depth[:n].astype(np.uint8)


def _canonical_codes(entries: list[tuple[int, int]]) -> list[int]:
    """Codes for (symbol, length) entries already in canonical order."""
    codes = []
    code = 0
    prev_len = entries[0][1] if entries else 0
    for _, length in entries:
        code <<= length - prev_len
        codes.append(code)
        code += 1
        prev_len = length
    return codes


def entropy_encode(symbols) -> bytes:
    """Encode a sequence of signed integer symbols into one coded section."""
    arr = np.asarray(symbols, dtype=np.int64).reshape(-1)
    if arr.size and (arr.min() < SYMBOL_MIN or arr.max() > SYMBOL_MAX):
        raise ValueError(f"symbols must lie in [{SYMBOL_MIN}, {SYMBOL_MAX}]")
    if arr.size == 0:
        return struct.pack("<IH", 0, 0)
    if arr.size > 0xFFFFFFFF:
        raise ValueError("stream too long for the u32 count field")

    alphabet, inverse, counts = np.unique(arr, return_inverse=True, return_counts=True)
    if len(alphabet) > _MAX_TABLE_ENTRIES:
        raise ValueError(f"alphabet of {len(alphabet)} symbols exceeds the header capacity")
    lengths = _huffman_lengths(counts)

    order = sorted(range(len(alphabet)), key=lambda i: (int(lengths[i]), int(alphabet[i])))
    entries = [(int(alphabet[i]), int(lengths[i])) for i in order]
    codes = _canonical_codes(entries)

    header = bytearray()
    for sym, length in entries:
        header += struct.pack("<hB", sym, length)

    # per-symbol code/length lookup aligned to the original alphabet order
    code_of = np.zeros(len(alphabet), dtype=np.uint64)
    len_of = np.zeros(len(alphabet), dtype=np.uint8)
    for pos, i in enumerate(order):
        code_of[i] = codes[pos]
        len_of[i] = entries[pos][1]

    sym_codes = code_of[inverse]
    sym_lens = len_of[inverse].astype(np.int64)
    total_bits = int(sym_lens.sum())
    if total_bits == 0:  # degenerate single-symbol alphabet
        payload = b""
    else:
        ends = np.cumsum(sym_lens)
        starts = ends - sym_lens
        bits = np.zeros(total_bits, dtype=np.uint8)
        for length in np.unique(sym_lens):
            length = int(length)
            if length == 0:
                continue
            sel = sym_lens == length
            c = sym_codes[sel]
            s = starts[sel]
            for b in range(length):
                bits[s + b] = (c >> np.uint64(length - 1 - b)) & np.uint64(1)
        payload = np.packbits(bits).tobytes()

    return struct.pack("<IH", arr.size, len(header)) + bytes(header) + payload


def _parse_header(data: bytes, offset: int) -> tuple[int, list[tuple[int, int]], int]:
    """Return (count, canonical entries, payload offset)."""
    if len(data) - offset < 6:
        raise EntropyError("truncated section header")
    count, header_len = struct.unpack_from("<IH", data, offset)
    offset += 6
    if header_len % 3 != 0:
        raise EntropyError(f"header length {header_len} is not a multiple of 3")
    if len(data) - offset < header_len:
        raise EntropyError("truncated code-length table")
    entries = []
    for i in range(header_len // 3):
        sym, length = struct.unpack_from("<hB", data, offset + 3 * i)
        entries.append((sym, length))
    offset += header_len

    if count == 0:
        if entries:
            raise EntropyError("empty stream with a non-empty code table")
        return 0, [], offset
    if not entries:
        raise EntropyError("missing code table")
    if len(entries) == 1:
        if entries[0][1] != 0:
            raise EntropyError("single-symbol table must use code length 0")
        return count, entries, offset

    kraft = 0.0
    prev = None
    for sym, length in entries:
        if length < 1:
            raise EntropyError("zero code length in a multi-symbol table")
        if prev is not None and (length, sym) <= prev:
            raise EntropyError("code table is not in canonical order")
        prev = (length, sym)
        kraft += 2.0 ** -length
    if abs(kraft - 1.0) > 1e-9:
        raise EntropyError(f"code lengths violate the Kraft equality (sum {kraft})")
    return count, entries, offset


def _decode_stream(data: bytes, offset: int) -> tuple[np.ndarray, int]:
    """Decode one section starting at `offset`; return (symbols, end offset)."""
    count, entries, offset = _parse_header(data, offset)
    if count == 0:
        return np.empty(0, dtype=np.int32), offset
    if len(entries) == 1:
        return np.full(count, entries[0][0], dtype=np.int32), offset

    codes = _canonical_codes(entries)
    max_len = entries[-1][1]
    syms = [sym for sym, _ in entries]

    # primary lookup on the next _LUT_BITS bits; rare longer codes fall back
    # to a first-code walk per length
    lut_sym = [0] * (1 << _LUT_BITS)
    lut_len = [0] * (1 << _LUT_BITS)
    first_code = {}
    first_index = {}
    code_count = {}
    for i, ((sym, length), code) in enumerate(zip(entries, codes)):
        if length not in first_code:
            first_code[length] = code
            first_index[length] = i
        code_count[length] = code_count.get(length, 0) + 1
        if length <= _LUT_BITS:
            base = code << (_LUT_BITS - length)
            span = 1 << (_LUT_BITS - length)
            lut_sym[base : base + span] = [sym] * span
            lut_len[base : base + span] = [length] * span

    total_bits = 8 * (len(data) - offset)
    payload = data[offset:]
    out = np.empty(count, dtype=np.int32)
    buf = 0
    have = 0
    pos = 0
    mask = (1 << _LUT_BITS) - 1
    for i in range(count):
        while have < _LUT_BITS and pos < len(payload):
            buf = (buf << 8) | payload[pos]
            pos += 1
            have += 8
        window = (buf << (_LUT_BITS - have)) & mask if have < _LUT_BITS else (buf >> (have - _LUT_BITS)) & mask
        length = lut_len[window]
        if length:
            if length > have:
                raise EntropyError(f"truncated bitstream at symbol {i}")
            sym = lut_sym[window]
        else:
            sym = None
            for length in range(_LUT_BITS + 1, max_len + 1):
                while have < length and pos < len(payload):
                    buf = (buf << 8) | payload[pos]
                    pos += 1
                    have += 8
                if have < length:
                    break
                code = (buf >> (have - length)) & ((1 << length) - 1)
                if length in first_code:
                    rel = code - first_code[length]
                    if 0 <= rel < code_count[length]:
                        sym = syms[first_index[length] + rel]
                        break
            if sym is None:
                raise EntropyError(f"undecodable code near bit {8 * pos - have}")
        buf &= (1 << (have - length)) - 1 if have > length else 0
        have -= length
        out[i] = sym

    used_bits = 8 * pos - have
    if used_bits > total_bits:
        raise EntropyError("truncated bitstream")
    return out, offset + (used_bits + 7) // 8


def entropy_decode(data: bytes) -> np.ndarray:
    """Inverse of entropy_encode; rejects trailing bytes beyond the padding."""
    symbols, end = _decode_stream(data, 0)
    if end != len(data):
        raise EntropyError(f"{len(data) - end} unexpected trailing bytes")
    return symbols
