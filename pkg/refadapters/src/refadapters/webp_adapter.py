#!/usr/bin/env python3
"""WebP codec adapter speaking the tilebench stdin/stdout byte protocol.

    webp_adapter.py capabilities          -> one JSON line on stdout
    webp_adapter.py encode --quality <q>  -> PNM P6 on stdin, WebP blob on stdout
    webp_adapter.py decode                -> WebP blob on stdin, PNM P6 on stdout

Quality maps 1:1 to the native cwebp -q scale (1-100, lossy VP8; Pillow
backend with the library-default effort setting). Stateless: all bytes flow
through stdin/stdout.
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
        print(f"webp_adapter: Pillow is not installed: {exc}", file=sys.stderr)
        return 3
    if not features.check("webp"):
        print("webp_adapter: this Pillow build lacks libwebp support", file=sys.stderr)
        return 3
    info = {
        "name": "webp",
        "version": f"pillow-{PIL.__version__}/libwebp-{features.version('webp')}",
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
        print(f"webp_adapter: quality {quality} outside [1, 100]", file=sys.stderr)
        return 2
    image = Image.open(io.BytesIO(sys.stdin.buffer.read()))
    out = io.BytesIO()
    image.convert("RGB").save(out, format="WEBP", quality=q, lossless=False)
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
    except Exception as exc:
        print(f"webp_adapter: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
