#!/usr/bin/env python3
"""ResNet-18 feature extractor adapter emitting tilebench FEAT streams.

    deep_extractor_adapter.py --weights <file> capabilities
    deep_extractor_adapter.py --weights <file> extract   (PNM P6 in, FEAT out)

--weights must point to a torch state dict for torchvision's resnet18 (bring
your own checkpoint; none is bundled). Tiles are resized to 224x224
(bilinear) and normalized with the ImageNet statistics, so tap dimensions are
fixed regardless of input size. Taps, shallow to deep: the four residual
stages, the pooled 512-vector, and the 1000-way classification head.
Inference runs single-threaded in eval mode for byte determinism.
"""

from __future__ import annotations

import argparse
import io
import json
import struct
import sys

TAPS = (
    ("layer1", 64 * 56 * 56),
    ("layer2", 128 * 28 * 28),
    ("layer3", 256 * 14 * 14),
    ("layer4", 512 * 7 * 7),
    ("avgpool", 512),
    ("fc", 1000),
)
_INPUT_SIDE = 224
_MEAN = (0.485, 0.456, 0.406)
_STD = (0.229, 0.224, 0.225)


def _load_model(weights_path: str):
    """Build resnet18 with the given state dict; exits 3 on any gap."""
    try:
        import torch
        from torchvision.models import resnet18
    except ImportError as exc:
        print(f"deep_extractor_adapter: ML runtime unavailable: {exc}", file=sys.stderr)
        raise SystemExit(3)
    try:
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        model = resnet18(weights=None)
        model.load_state_dict(state, strict=True)
    except (OSError, RuntimeError, ValueError, KeyError) as exc:
        print(f"deep_extractor_adapter: cannot load weights {weights_path!r}: {exc}",
              file=sys.stderr)
        raise SystemExit(3)
    torch.set_num_threads(1)
    model.eval()
    return torch, model


def _capabilities(weights_path: str) -> int:
    _load_model(weights_path)  # proves runtime + weights before declaring anything
    info = {
        "name": "resnet18",
        "version": "torchvision-resnet18",
        "modes": ["extract"],
        "taps": [{"id": tap_id, "dim": dim} for tap_id, dim in TAPS],
    }
    sys.stdout.write(json.dumps(info) + "\n")
    return 0


def _extract(weights_path: str) -> int:
    torch, model = _load_model(weights_path)
    from PIL import Image

    image = Image.open(io.BytesIO(sys.stdin.buffer.read())).convert("RGB")
    image = image.resize((_INPUT_SIDE, _INPUT_SIDE), Image.BILINEAR)

    import numpy as np

    array = np.asarray(image, dtype=np.float32) / 255.0
    array = (array - np.array(_MEAN, dtype=np.float32)) / np.array(_STD, dtype=np.float32)
    batch = torch.from_numpy(array.transpose(2, 0, 1)).unsqueeze(0)

    captured: dict[str, "torch.Tensor"] = {}
    hooks = []
    for tap_id, _ in TAPS[:4]:
        module = getattr(model, tap_id)
        hooks.append(
            module.register_forward_hook(
                lambda _m, _i, out, tap=tap_id: captured.__setitem__(tap, out)
            )
        )
    hooks.append(
        model.avgpool.register_forward_hook(
            lambda _m, _i, out: captured.__setitem__("avgpool", out)
        )
    )
    with torch.inference_mode():
        logits = model(batch)
    captured["fc"] = logits
    for hook in hooks:
        hook.remove()

    stream = bytearray(b"FEAT")
    stream += struct.pack("<I", len(TAPS))
    for tap_id, dim in TAPS:
        values = captured[tap_id].reshape(-1).numpy().astype("<f4")
        if values.size != dim:
            print(f"deep_extractor_adapter: tap {tap_id} produced {values.size} values, "
                  f"expected {dim}", file=sys.stderr)
            return 1
        ident = tap_id.encode("utf-8")
        stream += struct.pack("<I", len(ident)) + ident
        stream += struct.pack("<I", dim) + values.tobytes()
    sys.stdout.buffer.write(bytes(stream))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--weights", required=True, help="resnet18 state-dict file")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("capabilities")
    sub.add_parser("extract")
    args = parser.parse_args(argv)

    try:
        if args.command == "capabilities":
            return _capabilities(args.weights)
        return _extract(args.weights)
    except SystemExit:
        raise
    except Exception as exc:
        print(f"deep_extractor_adapter: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
