"""Subprocess adapters for external codecs and feature extractors.

Adapter executables speak a stdin/stdout byte protocol:

    <exe> capabilities            -> single-line JSON on stdout
    <exe> encode --quality <q>    -> PNM P6 tile on stdin, blob on stdout
    <exe> decode                  -> blob on stdin, PNM P6 on stdout
    <exe> extract                 -> PNM P6 on stdin, FEAT stream on stdout

Codec capabilities JSON: {"name", "version", "quality_min", "quality_max",
"quality_kind" ("int" or "float"), "modes" (subset of encode/decode/extract)}.
Extractor capabilities additionally carry "taps": a list of {"id", "dim"}
entries ordered shallow to deep.

The FEAT stream is binary little-endian: magic "FEAT", u32 tap count, then
per tap u32 id length, the utf-8 id, u32 dimension, and that many float32
values.

Every failure raises AdapterError carrying the phase (spawn, write, read,
wait), the exit status when one exists, and up to 4 KiB of stderr.
"""

from __future__ import annotations

import json
import math
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imagecore import CompressedBlob, PnmError, Tile, read_pnm, write_pnm
from .metrics import FeatureSet, FeatureVector

DEFAULT_TIMEOUT = 120.0
FEAT_MAGIC = b"FEAT"
_STDERR_LIMIT = 4096
QUALITY_KINDS = ("int", "float")
MODES = ("encode", "decode", "extract")


class AdapterError(RuntimeError):
    """Adapter subprocess failure with phase and stderr context."""

    def __init__(self, phase: str, message: str, returncode: int | None = None, stderr: bytes = b""):
        self.phase = phase
        self.returncode = returncode
        self.stderr_excerpt = stderr[:_STDERR_LIMIT].decode("utf-8", "replace")
        detail = f"[{phase}] {message}"
        if returncode is not None:
            detail += f" (exit status {returncode})"
        if self.stderr_excerpt.strip():
            detail += f"; stderr: {self.stderr_excerpt.strip()}"
        super().__init__(detail)


@dataclass(frozen=True)
class AdapterHandle:
    """How to invoke one adapter executable."""

    executable: str | Path
    extra_args: tuple[str, ...] = ()
    timeout: float = DEFAULT_TIMEOUT

    def argv(self, *args: str) -> list[str]:
        return [str(self.executable), *self.extra_args, *args]


@dataclass(frozen=True)
class CodecInfo:
    name: str
    version: str
    modes: tuple[str, ...]
    quality_min: float | None = None
    quality_max: float | None = None
    quality_kind: str | None = None


@dataclass(frozen=True)
class TapInfo:
    id: str
    dim: int


@dataclass(frozen=True)
class ExtractorInfo:
    name: str
    version: str
    taps: tuple[TapInfo, ...] = field(default_factory=tuple)


def _run(handle: AdapterHandle, args: list[str], stdin_bytes: bytes, what: str) -> bytes:
    argv = handle.argv(*args)
    try:
        proc = subprocess.run(
            argv,
            input=stdin_bytes,
            capture_output=True,
            timeout=handle.timeout,
        )
    except FileNotFoundError as exc:
        raise AdapterError("spawn", f"{what}: executable {argv[0]!r} not found") from exc
    except PermissionError as exc:
        raise AdapterError("spawn", f"{what}: executable {argv[0]!r} not runnable") from exc
    except subprocess.TimeoutExpired as exc:
        raise AdapterError(
            "wait",
            f"{what}: timed out after {handle.timeout}s",
            stderr=exc.stderr or b"",
        ) from exc
    except BrokenPipeError as exc:
        raise AdapterError("write", f"{what}: adapter closed stdin early") from exc
    if proc.returncode != 0:
        raise AdapterError(
            "wait",
            f"{what}: adapter exited abnormally",
            returncode=proc.returncode,
            stderr=proc.stderr,
        )
    return proc.stdout


def _parse_capabilities_json(handle: AdapterHandle) -> dict:
    stdout = _run(handle, ["capabilities"], b"", "capabilities")
    text = stdout.decode("utf-8", "replace").strip()
    if not text:
        raise AdapterError("read", "capabilities: empty stdout")
    if "\n" in text:
        raise AdapterError("read", "capabilities: expected a single JSON line")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AdapterError("read", f"capabilities: malformed JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise AdapterError("read", "capabilities: JSON must be an object")
    return obj


def _common_capability_fields(obj: dict) -> tuple[str, str, tuple[str, ...]]:
    for key in ("name", "version", "modes"):
        if key not in obj:
            raise AdapterError("read", f"capabilities: missing key {key!r}")
    name, version, modes = obj["name"], obj["version"], obj["modes"]
    if not isinstance(name, str) or not name:
        raise AdapterError("read", "capabilities: name must be a non-empty string")
    if not isinstance(modes, list) or not modes or not set(modes) <= set(MODES):
        raise AdapterError(
            "read", f"capabilities: modes must be a non-empty subset of {MODES}, got {modes!r}"
        )
    return name, str(version), tuple(modes)


def probe_capabilities(handle: AdapterHandle) -> CodecInfo:
    """Run `<exe> capabilities` and validate the codec description."""
    obj = _parse_capabilities_json(handle)
    name, version, modes = _common_capability_fields(obj)
    qmin = qmax = None
    kind = None
    if "encode" in modes:
        for key in ("quality_min", "quality_max", "quality_kind"):
            if key not in obj:
                raise AdapterError("read", f"capabilities: missing key {key!r}")
        try:
            qmin = float(obj["quality_min"])
            qmax = float(obj["quality_max"])
        except (TypeError, ValueError) as exc:
            raise AdapterError("read", "capabilities: quality bounds must be numbers") from exc
        kind = obj["quality_kind"]
        if kind not in QUALITY_KINDS:
            raise AdapterError(
                "read", f"capabilities: quality_kind must be one of {QUALITY_KINDS}, got {kind!r}"
            )
        if not (math.isfinite(qmin) and math.isfinite(qmax)) or qmin >= qmax:
            raise AdapterError(
                "read", f"capabilities: need quality_min < quality_max, got {qmin} >= {qmax}"
            )
    return CodecInfo(
        name=name, version=version, modes=modes,
        quality_min=qmin, quality_max=qmax, quality_kind=kind,
    )


def probe_extractor_capabilities(handle: AdapterHandle) -> ExtractorInfo:
    """Run `<exe> capabilities` and validate the extractor tap list."""
    obj = _parse_capabilities_json(handle)
    name, version, modes = _common_capability_fields(obj)
    if "extract" not in modes:
        raise AdapterError("read", "capabilities: adapter does not list the extract mode")
    taps_raw = obj.get("taps")
    if not isinstance(taps_raw, list) or not taps_raw:
        raise AdapterError("read", "capabilities: extractor must declare a non-empty tap list")
    taps = []
    seen = set()
    for entry in taps_raw:
        if not isinstance(entry, dict) or "id" not in entry or "dim" not in entry:
            raise AdapterError("read", f"capabilities: bad tap entry {entry!r}")
        tap_id, dim = entry["id"], entry["dim"]
        if not isinstance(tap_id, str) or not tap_id or tap_id in seen:
            raise AdapterError("read", f"capabilities: bad or duplicate tap id {tap_id!r}")
        if not isinstance(dim, int) or dim < 1:
            raise AdapterError("read", f"capabilities: tap {tap_id!r} has bad dim {dim!r}")
        seen.add(tap_id)
        taps.append(TapInfo(id=tap_id, dim=dim))
    return ExtractorInfo(name=name, version=version, taps=tuple(taps))


def format_quality(quality: float, kind: str) -> str:
    if kind == "int":
        return str(int(round(quality)))
    return repr(float(quality))


def adapter_encode(
    handle: AdapterHandle, tile: Tile, quality: float, info: CodecInfo | None = None
) -> CompressedBlob:
    """Encode a tile through `<exe> encode --quality <q>`."""
    if info is None:
        info = probe_capabilities(handle)
    if "encode" not in info.modes:
        raise AdapterError("write", f"adapter {info.name!r} does not support encode")
    assert info.quality_min is not None and info.quality_max is not None
    if not info.quality_min <= quality <= info.quality_max:
        raise ValueError(
            f"quality {quality} outside [{info.quality_min}, {info.quality_max}] "
            f"for adapter {info.name!r}"
        )
    qstr = format_quality(quality, info.quality_kind or "float")
    blob = _run(handle, ["encode", "--quality", qstr], write_pnm(tile), "encode")
    if not blob:
        raise AdapterError("read", "encode: adapter produced an empty blob")
    return CompressedBlob(
        data=blob,
        codec_id=info.name,
        quality=float(qstr) if info.quality_kind == "float" else float(int(qstr)),
        source_width=tile.width,
        source_height=tile.height,
    )


def adapter_decode(handle: AdapterHandle, blob: CompressedBlob) -> Tile:
    """Decode a blob through `<exe> decode` and validate the dimensions."""
    stdout = _run(handle, ["decode"], blob.data, "decode")
    try:
        tile = read_pnm(stdout)
    except PnmError as exc:
        raise AdapterError("read", f"decode: bad PNM output: {exc}") from exc
    if (tile.width, tile.height) != (blob.source_width, blob.source_height):
        raise AdapterError(
            "read",
            f"decode: dimensions {tile.width}x{tile.height} do not match the "
            f"blob's {blob.source_width}x{blob.source_height}",
        )
    return tile


def parse_feat_stream(data: bytes, info: ExtractorInfo) -> FeatureSet:
    """Parse a FEAT byte stream and validate it against declared taps."""
    if data[:4] != FEAT_MAGIC:
        raise AdapterError("read", f"extract: bad FEAT magic {data[:4]!r}")
    if len(data) < 8:
        raise AdapterError("read", "extract: truncated FEAT header")
    count = int.from_bytes(data[4:8], "little")
    if count != len(info.taps):
        raise AdapterError(
            "read", f"extract: stream has {count} taps, capabilities declared {len(info.taps)}"
        )
    offset = 8
    taps = []
    for expected in info.taps:
        if len(data) - offset < 4:
            raise AdapterError("read", f"extract: truncated tap header at byte {offset}")
        id_len = int.from_bytes(data[offset : offset + 4], "little")
        offset += 4
        if len(data) - offset < id_len + 4:
            raise AdapterError("read", f"extract: truncated tap id at byte {offset}")
        tap_id = data[offset : offset + id_len].decode("utf-8", "replace")
        offset += id_len
        dim = int.from_bytes(data[offset : offset + 4], "little")
        offset += 4
        if tap_id != expected.id:
            raise AdapterError(
                "read", f"extract: tap {tap_id!r} does not match declared {expected.id!r}"
            )
        if dim != expected.dim:
            raise AdapterError(
                "read", f"extract: tap {tap_id!r} has dim {dim}, capabilities declared {expected.dim}"
            )
        if len(data) - offset < 4 * dim:
            raise AdapterError("read", f"extract: truncated values for tap {tap_id!r}")
        values = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).astype(np.float64)
        offset += 4 * dim
        taps.append(FeatureVector(tap_id=tap_id, values=values))
    if offset != len(data):
        raise AdapterError("read", f"extract: {len(data) - offset} trailing bytes")
    return FeatureSet(taps=tuple(taps))


def adapter_extract(
    handle: AdapterHandle, tile: Tile, info: ExtractorInfo | None = None
) -> FeatureSet:
    """Extract features through `<exe> extract`."""
    if info is None:
        info = probe_extractor_capabilities(handle)
    stdout = _run(handle, ["extract"], write_pnm(tile), "extract")
    return parse_feat_stream(stdout, info)


class AdapterExtractor:
    """Extractor-protocol wrapper that probes once and reuses the tap list."""

    def __init__(self, handle: AdapterHandle):
        self.handle = handle
        self.info = probe_extractor_capabilities(handle)

    @property
    def tap_ids(self) -> tuple[str, ...]:
        return tuple(t.id for t in self.info.taps)

    def extract(self, tile: Tile) -> FeatureSet:
        return adapter_extract(self.handle, tile, self.info)


# ---------------------------------------------------------------------------
# Conformance


@dataclass(frozen=True)
class ConformanceCheck:
    name: str
    status: str  # "pass" | "fail" | "n/a"
    detail: str = ""


@dataclass(frozen=True)
class ConformanceReport:
    adapter: str
    checks: tuple[ConformanceCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    def failing(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.checks if c.status == "fail")

    def to_json_dict(self) -> dict:
        return {
            "adapter": self.adapter,
            "passed": self.passed,
            "checks": [
                {"name": c.name, "status": c.status, "detail": c.detail} for c in self.checks
            ],
        }


def synthetic_tile(size: int = 64) -> Tile:
    """Deterministic photographic-looking test tile (gradients plus texture)."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    u, v = xx / size, yy / size
    r = 150 + 70 * np.sin(2 * np.pi * (2.0 * u + 0.7 * v)) * np.cos(2 * np.pi * 1.3 * v)
    g = 120 + 60 * np.cos(2 * np.pi * (1.1 * u - 1.9 * v)) + 25 * np.sin(2 * np.pi * 5.0 * u * v)
    b = 140 + 50 * np.sin(2 * np.pi * (0.9 * u + 2.3 * v) + 1.0) + 20 * np.cos(2 * np.pi * 7.0 * u)
    # mild deterministic dither so entropy is not artificially low
    dither = ((xx * 7919 + yy * 104729) % 17) - 8
    rgb = np.stack([r, g, b], axis=2) + dither[:, :, None] * 0.9
    return Tile(pixels=np.clip(np.floor(rgb + 0.5), 0, 255).astype(np.uint8), id="synthetic")


def _mid_quality(info: CodecInfo) -> float:
    assert info.quality_min is not None and info.quality_max is not None
    mid = (info.quality_min + info.quality_max) / 2.0
    if info.quality_kind == "int":
        mid = float(int(round(mid)))
    return mid


def conformance_check(handle: AdapterHandle, tile: Tile | None = None) -> ConformanceReport:
    """Probe an adapter and exercise the protocol end to end.

    Checks: capabilities parse/validate; an encode/decode round trip at the
    minimum, middle, and maximum quality (dimensions must survive); and a
    bpp monotonicity spot check over those qualities, reported as not
    applicable when every blob has the same size.
    """
    checks: list[ConformanceCheck] = []
    adapter_name = str(handle.executable)
    try:
        info = probe_capabilities(handle)
        checks.append(ConformanceCheck("capabilities", "pass", f"name={info.name}"))
    except AdapterError as exc:
        checks.append(ConformanceCheck("capabilities", "fail", str(exc)))
        for name in ("round_trip_min", "round_trip_mid", "round_trip_max", "bpp_monotone"):
            checks.append(ConformanceCheck(name, "fail", "capabilities unavailable"))
        return ConformanceReport(adapter=adapter_name, checks=tuple(checks))

    if tile is None:
        tile = synthetic_tile()

    if "encode" not in info.modes:
        for name in ("round_trip_min", "round_trip_mid", "round_trip_max", "bpp_monotone"):
            checks.append(ConformanceCheck(name, "n/a", "adapter does not encode"))
        return ConformanceReport(adapter=adapter_name, checks=tuple(checks))

    qualities = [
        ("round_trip_min", info.quality_min),
        ("round_trip_mid", _mid_quality(info)),
        ("round_trip_max", info.quality_max),
    ]
    bpps: list[float] = []
    for check_name, quality in qualities:
        assert quality is not None
        try:
            blob = adapter_encode(handle, tile, quality, info)
            bpps.append(blob.bpp)
            if "decode" in info.modes:
                adapter_decode(handle, blob)  # raises on dimension mismatch
                checks.append(
                    ConformanceCheck(check_name, "pass", f"q={quality:g}, bpp={blob.bpp:.4f}")
                )
            else:
                checks.append(ConformanceCheck(check_name, "n/a", "adapter does not decode"))
        except (AdapterError, ValueError) as exc:
            checks.append(ConformanceCheck(check_name, "fail", str(exc)))

    if len(bpps) == 3:
        if bpps[0] == bpps[1] == bpps[2]:
            checks.append(ConformanceCheck("bpp_monotone", "n/a", "constant bpp"))
        elif bpps[0] <= bpps[1] <= bpps[2]:
            checks.append(
                ConformanceCheck("bpp_monotone", "pass", "bpp " + " <= ".join(f"{b:.4f}" for b in bpps))
            )
        else:
            checks.append(
                ConformanceCheck(
                    "bpp_monotone", "fail",
                    "bpp not non-decreasing across qualities: "
                    + ", ".join(f"{b:.4f}" for b in bpps),
                )
            )
    else:
        checks.append(ConformanceCheck("bpp_monotone", "fail", "encode failed at some quality"))
    return ConformanceReport(adapter=adapter_name, checks=tuple(checks))
