"""Fixtures for adapter integration tests.

These tests treat the benchmarking toolkit as an external program: every
interaction goes through the ``tilebench`` command line or the adapters'
own stdin/stdout protocol, never through its Python API.
"""

from __future__ import annotations

import shlex
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

SCRIPTS = Path(__file__).resolve().parent.parent / "src" / "refadapters"
JPEG = str(SCRIPTS / "jpeg_adapter.py")
WEBP = str(SCRIPTS / "webp_adapter.py")
JXL = str(SCRIPTS / "jxl_adapter.py")
DEEP = str(SCRIPTS / "deep_extractor_adapter.py")


def run_adapter(argv, stdin: bytes = b"", timeout: float = 300.0):
    return subprocess.run(argv, input=stdin, capture_output=True, timeout=timeout)


def run_tilebench(*args: str, timeout: float = 600.0):
    return subprocess.run(
        [sys.executable, "-m", "tilebench.cli", *args],
        capture_output=True,
        timeout=timeout,
    )


def write_ppm(path: Path, pixels: np.ndarray) -> Path:
    height, width = pixels.shape[:2]
    path.write_bytes(b"P6\n%d %d\n255\n" % (width, height) + pixels.tobytes())
    return path


def photo_pixels(seed: int = 0, size: int = 224) -> np.ndarray:
    """Smooth photographic-looking content: color gradients, shapes, grain."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.stack(
        [
            150 + 70 * np.sin(2 * np.pi * (1.5 * xx + 0.6 * yy)),
            120 + 60 * np.cos(2 * np.pi * (0.8 * xx - 1.7 * yy)),
            140 + 50 * np.sin(2 * np.pi * (2.2 * xx * yy) + 1.0),
        ],
        axis=2,
    )
    for _ in range(5):  # soft blobs, like nuclei on tissue
        cx, cy, r = rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.05, 0.2)
        blob = np.exp(-(((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * r ** 2)))
        img -= blob[:, :, None] * rng.uniform(20, 60, 3)
    img += rng.normal(0, 2.5, img.shape)
    return np.clip(img, 0, 255).astype(np.uint8)


@pytest.fixture(scope="session")
def photo_tile(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("tiles")
    return write_ppm(root / "photo.ppm", photo_pixels(0))


@pytest.fixture(scope="session")
def resnet_weights(tmp_path_factory) -> Path:
    torch = pytest.importorskip("torch", reason="torch not installed")
    torchvision = pytest.importorskip("torchvision", reason="torchvision not installed")
    del torchvision
    from torchvision.models import resnet18

    torch.manual_seed(0)
    path = tmp_path_factory.mktemp("weights") / "resnet18.pt"
    torch.save(resnet18(weights=None).state_dict(), path)
    return path


@pytest.fixture(scope="session")
def deep_adapter(resnet_weights, tmp_path_factory) -> str:
    """Single-executable wrapper binding --weights, for --adapter style consumers."""
    wrapper = tmp_path_factory.mktemp("bin") / "resnet18_adapter"
    wrapper.write_text(
        "#!/bin/sh\nexec {} {} --weights {} \"$@\"\n".format(
            shlex.quote(sys.executable), shlex.quote(DEEP), shlex.quote(str(resnet_weights))
        )
    )
    wrapper.chmod(0o755)
    return str(wrapper)
