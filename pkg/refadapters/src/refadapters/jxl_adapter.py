#!/usr/bin/env python3
"""JPEG XL codec adapter wrapping the cjxl/djxl command-line tools.

    jxl_adapter.py capabilities          -> one JSON line on stdout
    jxl_adapter.py encode --quality <q>  -> PNM P6 on stdin, JXL blob on stdout
    jxl_adapter.py decode                -> JXL blob on stdin, PNM P6 on stdout

Quality maps 1:1 to cjxl's JPEG-like -q scale (1-100; 100 requests the
mathematically lossless mode). The tools are discovered on PATH and can be
overridden with --cjxl/--djxl. cjxl and djxl only operate on named files, so
each call round-trips through a private temporary directory that is removed
before the process exits; no state survives a call.
"""

from __future__ import annotations

import argparse
import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

_TOOL_TIMEOUT = 120.0


def _tool_version(exe: str) -> str:
    proc = subprocess.run(
        [exe, "--version"], capture_output=True, text=True, timeout=_TOOL_TIMEOUT
    )
    lines = (proc.stdout or proc.stderr).splitlines()
    return lines[0].strip() if lines else "unknown"


def _require(exe: str | None, name: str) -> str:
    found = exe or shutil.which(name)
    if not found or not Path(found).exists():
        print(
            f"jxl_adapter: {name!r} not found on PATH (install libjxl tools or "
            f"pass --{name})",
            file=sys.stderr,
        )
        raise SystemExit(3)
    return found


def _run_tool(argv: list[str]) -> None:
    proc = subprocess.run(argv, capture_output=True, timeout=_TOOL_TIMEOUT)
    if proc.returncode != 0:
        sys.stderr.buffer.write(proc.stderr)
        print(f"jxl_adapter: {argv[0]} exited with status {proc.returncode}", file=sys.stderr)
        raise SystemExit(1)


def _capabilities(cjxl: str | None, djxl: str | None) -> int:
    enc = _require(cjxl, "cjxl")
    dec = _require(djxl, "djxl")
    info = {
        "name": "jxl",
        "version": f"{_tool_version(enc)}; {_tool_version(dec)}",
        "modes": ["encode", "decode"],
        "quality_min": 1,
        "quality_max": 100,
        "quality_kind": "int",
    }
    sys.stdout.write(json.dumps(info) + "\n")
    return 0


def _encode(cjxl: str | None, quality: float) -> int:
    exe = _require(cjxl, "cjxl")
    q = int(round(quality))
    if not 1 <= q <= 100:
        print(f"jxl_adapter: quality {quality} outside [1, 100]", file=sys.stderr)
        return 2
    with tempfile.TemporaryDirectory(prefix="jxl_adapter_") as tmp:
        src = Path(tmp) / "in.ppm"
        dst = Path(tmp) / "out.jxl"
        src.write_bytes(sys.stdin.buffer.read())
        _run_tool([exe, str(src), str(dst), "-q", str(q), "--quiet"])
        sys.stdout.buffer.write(dst.read_bytes())
    return 0


def _decode(djxl: str | None) -> int:
    exe = _require(djxl, "djxl")
    with tempfile.TemporaryDirectory(prefix="jxl_adapter_") as tmp:
        src = Path(tmp) / "in.jxl"
        dst = Path(tmp) / "out.ppm"
        src.write_bytes(sys.stdin.buffer.read())
        _run_tool([exe, str(src), str(dst), "--quiet"])
        sys.stdout.buffer.write(dst.read_bytes())
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--cjxl", default=None, help="path to the cjxl encoder")
    parser.add_argument("--djxl", default=None, help="path to the djxl decoder")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("capabilities")
    encode = sub.add_parser("encode")
    encode.add_argument("--quality", type=float, required=True)
    sub.add_parser("decode")
    args = parser.parse_args(argv)

    try:
        if args.command == "capabilities":
            return _capabilities(args.cjxl, args.djxl)
        if args.command == "encode":
            return _encode(args.cjxl, args.quality)
        return _decode(args.djxl)
    except SystemExit:
        raise
    except Exception as exc:
        print(f"jxl_adapter: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
