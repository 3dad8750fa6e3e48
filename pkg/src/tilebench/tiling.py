"""Foreground masking, tile sampling, corpus manifests, and grouped folds.

Sampling draws size-aligned grid cells at random (SplitMix64) and rejects
occupied or under-coverage cells, so two accepted origins can never overlap.
Folds are assigned per subject: a seeded shuffle followed by round-robin,
which keeps every tile of a subject in one fold and balances fold sizes to
within one subject.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .imagecore import PnmError, Tile, read_pnm_size
from .rng import SplitMix64

DEFAULT_WHITE_THRESHOLD = 220
DEFAULT_MIN_COVERAGE = 0.30
DEFAULT_TILE_SIZE = 224

MANIFEST_FIELDS = ("subject_id", "class_label", "path", "width", "height")


@dataclass(frozen=True)
class Mask:
    """Boolean foreground raster, True where tissue-like content sits."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.bits)
        if arr.ndim != 2 or arr.dtype != np.bool_:
            raise ValueError("mask must be a 2-D boolean array")
        object.__setattr__(self, "bits", arr)

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])


def foreground_mask(tile: Tile, white_threshold: int = DEFAULT_WHITE_THRESHOLD) -> Mask:
    """A pixel is background iff min(R, G, B) >= white_threshold."""
    if not 0 <= white_threshold <= 256:
        raise ValueError(f"white_threshold {white_threshold} out of range")
    fg = tile.pixels.min(axis=2) < white_threshold
    return Mask(bits=fg)


@dataclass(frozen=True)
class SampleResult:
    origins: tuple[tuple[int, int], ...]
    shortfall: bool


def sample_tiles(
    image: Tile,
    mask: Mask,
    size: int,
    count: int,
    min_coverage: float = DEFAULT_MIN_COVERAGE,
    seed: int = 0,
) -> SampleResult:
    """Sample up to `count` non-overlapping size-aligned tile origins.

    A candidate cell is accepted when its foreground pixel count is at least
    ceil(min_coverage * size^2). Sampling stops after 100 * count attempts;
    returning fewer than `count` origins sets the shortfall flag.
    """
    if size < 1:
        raise ValueError("tile size must be positive")
    if size > image.width or size > image.height:
        raise ValueError(
            f"tile size {size} exceeds image dimensions {image.width}x{image.height}"
        )
    if (mask.height, mask.width) != (image.height, image.width):
        raise ValueError("mask dimensions must match the image")
    if not 0.0 <= min_coverage <= 1.0:
        raise ValueError("min_coverage must lie in [0, 1]")
    if count < 0:
        raise ValueError("count cannot be negative")
    if count == 0:
        return SampleResult(origins=(), shortfall=False)

    need = math.ceil(min_coverage * size * size)
    # summed-area table makes per-candidate coverage O(1)
    sat = np.zeros((mask.height + 1, mask.width + 1), dtype=np.int64)
    sat[1:, 1:] = mask.bits.astype(np.int64).cumsum(axis=0).cumsum(axis=1)

    nx = image.width // size
    ny = image.height // size
    n_cells = nx * ny
    rng = SplitMix64(seed)
    occupied = np.zeros(n_cells, dtype=bool)
    origins: list[tuple[int, int]] = []
    max_attempts = 100 * count
    for _ in range(max_attempts):
        idx = rng.below(n_cells)
        if occupied[idx]:
            continue
        occupied[idx] = True  # coverage never changes, so a reject is final
        cx, cy = idx % nx, idx // nx
        x, y = cx * size, cy * size
        covered = int(sat[y + size, x + size] - sat[y, x + size] - sat[y + size, x] + sat[y, x])
        if covered < need:
            continue
        origins.append((x, y))
        if len(origins) == count:
            break
    return SampleResult(origins=tuple(origins), shortfall=len(origins) < count)


def crop(image: Tile, x: int, y: int, size: int, id: str = "") -> Tile:
    """Copy out the size x size tile whose top-left corner is (x, y)."""
    if x < 0 or y < 0 or x + size > image.width or y + size > image.height:
        raise ValueError(f"crop ({x},{y})+{size} leaves the image bounds")
    return Tile(pixels=image.pixels[y : y + size, x : x + size].copy(), id=id)


# ---------------------------------------------------------------------------
# Manifests


@dataclass(frozen=True)
class TileRecord:
    subject_id: str
    class_label: str | None
    path: str
    width: int
    height: int

    def __post_init__(self) -> None:
        if not self.subject_id:
            raise ValueError("subject_id must be non-empty")
        if not self.path:
            raise ValueError("path must be non-empty")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"bad dimensions for {self.path}")


@dataclass(frozen=True)
class CorpusManifest:
    """Sorted, validated collection of tile records."""

    records: tuple[TileRecord, ...]
    name: str = ""

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.records, key=lambda r: (r.subject_id, r.path)))
        seen_paths: set[str] = set()
        subject_class: dict[str, str | None] = {}
        conflicts: list[str] = []
        for rec in ordered:
            if rec.path in seen_paths:
                raise ValueError(f"duplicate tile path {rec.path!r}")
            seen_paths.add(rec.path)
            if rec.subject_id in subject_class:
                if subject_class[rec.subject_id] != rec.class_label:
                    conflicts.append(
                        f"{rec.subject_id}: {subject_class[rec.subject_id]!r} vs {rec.class_label!r}"
                    )
            else:
                subject_class[rec.subject_id] = rec.class_label
        if conflicts:
            raise ValueError("conflicting subject class labels: " + "; ".join(sorted(set(conflicts))))
        object.__setattr__(self, "records", ordered)

    def subjects(self) -> tuple[str, ...]:
        return tuple(sorted({r.subject_id for r in self.records}))

    def __len__(self) -> int:
        return len(self.records)


def build_manifest(
    root: str | Path,
    pattern: str = "**/*.ppm",
    label_map: Mapping[str, str] | None = None,
    classes_from_dirs: bool = False,
    name: str = "",
) -> CorpusManifest:
    """Scan `root` for PNM tiles and build a manifest.

    Subjects come from the directory layout: with classes_from_dirs the
    layout is root/<class>/<subject>/..., otherwise root/<subject>/...;
    files sitting directly under root use their stem as the subject. An
    explicit label_map (subject -> class) overrides inferred labels.
    """
    root = Path(root)
    if not root.is_dir():
        raise ValueError(f"manifest root {root} is not a directory")
    records = []
    for path in sorted(root.glob(pattern)):
        if not path.is_file():
            continue
        rel = path.relative_to(root)
        parts = rel.parts
        if classes_from_dirs:
            if len(parts) < 2:
                raise ValueError(f"{rel}: classes_from_dirs needs root/<class>/<subject>/ layout")
            class_label: str | None = parts[0]
            subject = parts[1] if len(parts) > 2 else Path(parts[1]).stem
        else:
            class_label = None
            subject = parts[0] if len(parts) > 1 else path.stem
        if label_map is not None and subject in label_map:
            class_label = label_map[subject]
        try:
            width, height = read_pnm_size(path.read_bytes())
        except PnmError as exc:
            raise PnmError(f"{rel}: {exc}") from exc
        records.append(
            TileRecord(
                subject_id=subject,
                class_label=class_label,
                path=rel.as_posix(),
                width=width,
                height=height,
            )
        )
    return CorpusManifest(records=tuple(records), name=name)


def save_manifest(manifest: CorpusManifest, path: str | Path) -> None:
    """Write one JSON object per line, already in manifest order."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in manifest.records:
            fh.write(
                json.dumps(
                    {
                        "subject_id": rec.subject_id,
                        "class_label": rec.class_label,
                        "path": rec.path,
                        "width": rec.width,
                        "height": rec.height,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_manifest(path: str | Path, name: str = "") -> CorpusManifest:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: bad JSON: {exc}") from exc
            missing = [k for k in MANIFEST_FIELDS if k not in obj]
            if missing:
                raise ValueError(f"{path}:{lineno}: missing fields {missing}")
            extra = sorted(set(obj) - set(MANIFEST_FIELDS))
            if extra:
                raise ValueError(f"{path}:{lineno}: unknown fields {extra}")
            records.append(
                TileRecord(
                    subject_id=obj["subject_id"],
                    class_label=obj["class_label"],
                    path=obj["path"],
                    width=int(obj["width"]),
                    height=int(obj["height"]),
                )
            )
    return CorpusManifest(records=tuple(records), name=name or Path(path).stem)


# ---------------------------------------------------------------------------
# Grouped folds


@dataclass(frozen=True)
class FoldAssignment:
    """Map subject -> fold index in [0, k)."""

    k: int
    assignment: Mapping[str, int]

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be at least 1")
        sizes = [0] * self.k
        for subject, fold in self.assignment.items():
            if not 0 <= fold < self.k:
                raise ValueError(f"subject {subject!r} assigned to fold {fold} outside [0, {self.k})")
            sizes[fold] += 1
        filled = [s for s in sizes]
        if filled and max(filled) - min(filled) > 1:
            raise ValueError(f"unbalanced folds: sizes {sizes}")
        object.__setattr__(self, "assignment", dict(self.assignment))

    def fold_sizes(self) -> list[int]:
        sizes = [0] * self.k
        for fold in self.assignment.values():
            sizes[fold] += 1
        return sizes


def grouped_folds(manifest: CorpusManifest, k: int, seed: int = 0) -> FoldAssignment:
    """Assign each subject to one of k folds: seeded shuffle, then round-robin."""
    subjects = list(manifest.subjects())
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > len(subjects):
        raise ValueError(f"k={k} exceeds the {len(subjects)} distinct subjects")
    rng = SplitMix64(seed)
    rng.shuffle(subjects)
    assignment = {subject: i % k for i, subject in enumerate(subjects)}
    return FoldAssignment(k=k, assignment=assignment)


def records_for_fold(
    manifest: CorpusManifest, folds: FoldAssignment, fold: int
) -> tuple[TileRecord, ...]:
    """Tiles belonging to one fold, in manifest order."""
    if not 0 <= fold < folds.k:
        raise ValueError(f"fold {fold} outside [0, {folds.k})")
    return tuple(r for r in manifest.records if folds.assignment.get(r.subject_id) == fold)


def iter_tiles(manifest: CorpusManifest, root: str | Path) -> Iterable[tuple[TileRecord, Tile]]:
    """Yield (record, tile) pairs in manifest order, reading from root/path."""
    from .imagecore import read_pnm

    root = Path(root)
    for rec in manifest.records:
        data = (root / rec.path).read_bytes()
        tile = read_pnm(data, id=rec.path)
        if (tile.width, tile.height) != (rec.width, rec.height):
            raise ValueError(
                f"{rec.path}: manifest says {rec.width}x{rec.height}, "
                f"file is {tile.width}x{tile.height}"
            )
        yield rec, tile
