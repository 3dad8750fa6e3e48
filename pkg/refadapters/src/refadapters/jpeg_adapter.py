#!/usr/bin/env python3
"""JPEG codec adapter speaking the tilebench stdin/stdout byte protocol.

    jpeg_adapter.py capabilities          -> one JSON line on stdout
    jpeg_adapter.py encode --quality <q>  -> PNM P6 on stdin, JFIF blob on stdout
    jpeg_adapter.py decode                -> JFIF blob on stdin, PNM P6 on stdout

Quality maps 1:1 to libjpeg's 1-100 quality factor (Pillow backend, chroma
subsampling at the library default). The adapter is stateless: everything
flows through stdin/stdout, nothing is written to disk.
"""

from __future__ import annotations

import argparse
import io
import json
import sys


def _capabilities() -> int:
    try:
        import PIL
        from PIL import features
    except ImportError as exc:
        print(f"jpeg_adapter: Pillow is not installed: {exc}", file=sys.stderr)
        return 3
    if not features.check("jpg"):
        print("jpeg_adapter: this Pillow build lacks libjpeg support", file=sys.stderr)
        return 3
    info = {
        "name": "jpeg",
        "version": f"pillow-{PIL.__version__}/libjpeg-{features.version('jpg')}",
        "modes": ["encode", "decode"],
        "quality_min": 1,
        "quality_max": 100,
        "quality_kind": "int",
    }
    sys.stdout.write(json.dumps(info) + "\n")
    return 0


def _encode(quality: float) -> int:
    from PIL import Image

    q = int(round(quality))
    if not 1 <= q <= 100:
        print(f"jpeg_adapter: quality {quality} outside [1, 100]", file=sys.stderr)
        return 2
    image = Image.open(io.BytesIO(sys.stdin.buffer.read()))
    out = io.BytesIO()
    image.convert("RGB").save(out, format="JPEG", quality=q)
    sys.stdout.buffer.write(out.getvalue())
    return 0


def _decode() -> int:
    from PIL import Image

    image = Image.open(io.BytesIO(sys.stdin.buffer.read()))
    out = io.BytesIO()
    image.convert("RGB").save(out, format="PPM")
    sys.stdout.buffer.write(out.getvalue())
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("capabilities")
    encode = sub.add_parser("encode")
    encode.add_argument("--quality", type=float, required=True)
    sub.add_parser("decode")
    args = parser.parse_args(argv)

    try:
        if args.command == "capabilities":
            return _capabilities()
        if args.command == "encode":
            return _encode(args.quality)
        return _decode()
    except Exception as exc:  # malformed input must fail loudly, not hang
        print(f"jpeg_adapter: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
