"""Experiment planning and execution.

Configs are JSON with fail-closed validation: unknown keys are rejected and
error messages name the offending key path. Schema (defaults in brackets):

    {
      "name": str ["experiment"],
      "corpus": {"dir": str, "pattern": str ["*.ppm"]}
              | {"manifest": str, "root": str},
      "codecs": [ {"kind": "reference", "subsample": bool [false]}
                | {"kind": "adapter", "exe": str, "args": [str] [[]],
                   "timeout": number [120.0]} ],          # at least one
      "chains": [ {"name": str [auto],
                   "stages": [ {"codec": int, "quality": number}
                             | {"codec": int, "target": number},
                               ...,
                               {"codec": int} ]} ] [[]],  # last stage is swept
      "targets": [number], each in (0, 24)  [[]],
      "metrics": subset of ["psnr", "ms_ssim", "deep_distance", "cosine"]
                 [["psnr"]],
      "extractor": {"kind": "seeded", "seed": int [0]}
                 | {"kind": "weights", "path": str}
                 | {"kind": "adapter", "exe": str, "args": [str] [[]],
                    "timeout": number [120.0]}
                 | null [null],
      "similarity_bpp": number in (0, 24) | null [0.5 when extractor set],
      "timing": {"quality": number | "target": number,
                 "warmup": int [1], "reps": int [3]} | null [null],
      "seed": int [0],
      "tol": number [0.05],
      "sample_size": int [50],
      "allow_scale_reduction": bool [false]
    }

Referenced files (corpus, adapter executables, weights) must exist at
validation time. Scenario failures are recorded per point and the bundle is
still emitted; the CLI maps that to exit code 2.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from shutil import which
from typing import Any, Mapping, Sequence

import numpy as np

from . import __version__
from .adapters import AdapterExtractor, AdapterHandle
from .bench import DEFAULT_REPS, DEFAULT_WARMUP, TimingReport, time_decode, time_encode
from .codecs import AdapterCodec, ChainCodec, Codec, ReferenceCodec
from .extractor import load_weights, seeded_extractor
from .imagecore import Tile
from .metrics import Extractor, KNOWN_METRICS, profile_from_features
from .ratecontrol import (
    DEFAULT_SAMPLE_SIZE,
    DEFAULT_TOLERANCE,
    PointFailure,
    RateDistortionPoint,
    rd_point,
    seeded_sample,
    target_bpp,
)
from .tiling import build_manifest, iter_tiles, load_manifest

BPP_LIMIT = 24.0  # upper bound: raw RGB is 24 bits per pixel


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the key path."""


def aggregate(values: Sequence[float]) -> tuple[float, float]:
    """(mean, population standard deviation); rejects empty input."""
    if len(values) == 0:
        raise ValueError("cannot aggregate an empty value list")
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("cannot aggregate non-finite values")
    return float(arr.mean()), float(arr.std())


# ---------------------------------------------------------------------------
# Plan model


@dataclass(frozen=True)
class CodecSpec:
    kind: str  # "reference" | "adapter"
    subsample: bool = False
    exe: str = ""
    args: tuple[str, ...] = ()
    timeout: float = 120.0


@dataclass(frozen=True)
class ChainStagePlan:
    codec_index: int
    quality: float | None = None
    target: float | None = None


@dataclass(frozen=True)
class ChainPlan:
    name: str
    stages: tuple[ChainStagePlan, ...]


@dataclass(frozen=True)
class ExtractorSpec:
    kind: str  # "seeded" | "weights" | "adapter"
    seed: int = 0
    path: str = ""
    exe: str = ""
    args: tuple[str, ...] = ()
    timeout: float = 120.0


@dataclass(frozen=True)
class TimingPlan:
    quality: float | None
    target: float | None
    warmup: int = DEFAULT_WARMUP
    reps: int = DEFAULT_REPS


@dataclass(frozen=True)
class ExperimentPlan:
    name: str
    corpus_dir: str | None
    corpus_pattern: str
    corpus_manifest: str | None
    corpus_root: str | None
    codecs: tuple[CodecSpec, ...]
    chains: tuple[ChainPlan, ...]
    targets: tuple[float, ...]
    metrics: tuple[str, ...]
    extractor: ExtractorSpec | None
    similarity_bpp: float | None
    timing: TimingPlan | None
    seed: int
    tol: float
    sample_size: int
    allow_scale_reduction: bool
    raw_config: Mapping[str, Any] = field(repr=False, default_factory=dict)

    def config_hash(self) -> str:
        canonical = json.dumps(self.raw_config, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Fail-closed config parsing


def _require_keys(obj: Mapping, allowed: set[str], required: set[str], path: str) -> None:
    if not isinstance(obj, Mapping):
        raise ConfigError(f"{path}: expected an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    missing = sorted(required - set(obj))
    if missing:
        raise ConfigError(f"{path}: missing required keys {missing}")


def _as_number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{path}: expected a finite number, got {value!r}")
    return float(value)


def _as_int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def _as_str(value: Any, path: str) -> str:
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{path}: expected a non-empty string, got {value!r}")
    return value


def _as_str_list(value: Any, path: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigError(f"{path}: expected a list of strings, got {value!r}")
    return tuple(value)


def _check_executable(exe: str, path: str) -> None:
    if not (Path(exe).exists() or which(exe)):
        raise ConfigError(f"{path}: executable {exe!r} does not exist and is not on PATH")


def _parse_codec(obj: Any, path: str) -> CodecSpec:
    _require_keys(obj, {"kind", "subsample", "exe", "args", "timeout"}, {"kind"}, path)
    kind = _as_str(obj["kind"], f"{path}.kind")
    if kind == "reference":
        _require_keys(obj, {"kind", "subsample"}, {"kind"}, path)
        subsample = obj.get("subsample", False)
        if not isinstance(subsample, bool):
            raise ConfigError(f"{path}.subsample: expected a boolean")
        return CodecSpec(kind="reference", subsample=subsample)
    if kind == "adapter":
        _require_keys(obj, {"kind", "exe", "args", "timeout"}, {"kind", "exe"}, path)
        exe = _as_str(obj["exe"], f"{path}.exe")
        _check_executable(exe, f"{path}.exe")
        timeout = _as_number(obj.get("timeout", 120.0), f"{path}.timeout")
        if timeout <= 0:
            raise ConfigError(f"{path}.timeout: must be positive")
        return CodecSpec(
            kind="adapter", exe=exe,
            args=_as_str_list(obj.get("args", []), f"{path}.args"),
            timeout=timeout,
        )
    raise ConfigError(f"{path}.kind: expected 'reference' or 'adapter', got {kind!r}")


def _parse_chain(obj: Any, path: str, n_codecs: int, default_name: str) -> ChainPlan:
    _require_keys(obj, {"name", "stages"}, {"stages"}, path)
    stages_raw = obj["stages"]
    if not isinstance(stages_raw, list) or len(stages_raw) < 2:
        raise ConfigError(f"{path}.stages: expected a list of at least two stages")
    stages = []
    for i, stage in enumerate(stages_raw):
        spath = f"{path}.stages[{i}]"
        last = i == len(stages_raw) - 1
        _require_keys(stage, {"codec", "quality", "target"}, {"codec"}, spath)
        idx = _as_int(stage["codec"], f"{spath}.codec")
        if not 0 <= idx < n_codecs:
            raise ConfigError(f"{spath}.codec: index {idx} outside the codecs list")
        quality = None if "quality" not in stage else _as_number(stage["quality"], f"{spath}.quality")
        target = None if "target" not in stage else _as_number(stage["target"], f"{spath}.target")
        if last:
            if quality is not None or target is not None:
                raise ConfigError(f"{spath}: the final stage is swept and takes no quality/target")
        elif (quality is None) == (target is None):
            raise ConfigError(f"{spath}: fixed stages need exactly one of quality or target")
        stages.append(ChainStagePlan(codec_index=idx, quality=quality, target=target))
    name = obj.get("name", default_name)
    return ChainPlan(name=_as_str(name, f"{path}.name"), stages=tuple(stages))


def _parse_extractor(obj: Any, path: str) -> ExtractorSpec:
    _require_keys(obj, {"kind", "seed", "path", "exe", "args", "timeout"}, {"kind"}, path)
    kind = _as_str(obj["kind"], f"{path}.kind")
    if kind == "seeded":
        _require_keys(obj, {"kind", "seed"}, {"kind"}, path)
        return ExtractorSpec(kind="seeded", seed=_as_int(obj.get("seed", 0), f"{path}.seed"))
    if kind == "weights":
        _require_keys(obj, {"kind", "path"}, {"kind", "path"}, path)
        weights_path = _as_str(obj["path"], f"{path}.path")
        if not Path(weights_path).is_file():
            raise ConfigError(f"{path}.path: weights file {weights_path!r} does not exist")
        return ExtractorSpec(kind="weights", path=weights_path)
    if kind == "adapter":
        _require_keys(obj, {"kind", "exe", "args", "timeout"}, {"kind", "exe"}, path)
        exe = _as_str(obj["exe"], f"{path}.exe")
        _check_executable(exe, f"{path}.exe")
        timeout = _as_number(obj.get("timeout", 120.0), f"{path}.timeout")
        return ExtractorSpec(
            kind="adapter", exe=exe,
            args=_as_str_list(obj.get("args", []), f"{path}.args"), timeout=timeout,
        )
    raise ConfigError(f"{path}.kind: expected 'seeded', 'weights' or 'adapter', got {kind!r}")


def load_config(text: str, base_dir: str | Path | None = None) -> ExperimentPlan:
    """Parse and validate a JSON experiment config.

    Relative paths resolve against base_dir when given.
    """
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")

    base = Path(base_dir) if base_dir is not None else None

    def resolve(p: str) -> str:
        return str((base / p) if base is not None and not Path(p).is_absolute() else p)

    allowed = {
        "name", "corpus", "codecs", "chains", "targets", "metrics", "extractor",
        "similarity_bpp", "timing", "seed", "tol", "sample_size", "allow_scale_reduction",
    }
    _require_keys(obj, allowed, {"corpus", "codecs"}, "config")

    corpus = obj["corpus"]
    if not isinstance(corpus, Mapping):
        raise ConfigError("config.corpus: expected an object")
    corpus_dir = corpus_manifest = corpus_root = None
    corpus_pattern = "*.ppm"
    if "dir" in corpus:
        _require_keys(corpus, {"dir", "pattern"}, {"dir"}, "config.corpus")
        corpus_dir = resolve(_as_str(corpus["dir"], "config.corpus.dir"))
        if "pattern" in corpus:
            corpus_pattern = _as_str(corpus["pattern"], "config.corpus.pattern")
        if not Path(corpus_dir).is_dir():
            raise ConfigError(f"config.corpus.dir: {corpus_dir!r} is not a directory")
    elif "manifest" in corpus:
        _require_keys(corpus, {"manifest", "root"}, {"manifest", "root"}, "config.corpus")
        corpus_manifest = resolve(_as_str(corpus["manifest"], "config.corpus.manifest"))
        corpus_root = resolve(_as_str(corpus["root"], "config.corpus.root"))
        if not Path(corpus_manifest).is_file():
            raise ConfigError(f"config.corpus.manifest: {corpus_manifest!r} does not exist")
        if not Path(corpus_root).is_dir():
            raise ConfigError(f"config.corpus.root: {corpus_root!r} is not a directory")
    else:
        raise ConfigError("config.corpus: needs either 'dir' or 'manifest'+'root'")

    codecs_raw = obj["codecs"]
    if not isinstance(codecs_raw, list) or not codecs_raw:
        raise ConfigError("config.codecs: expected a non-empty list")
    codecs = []
    for i, spec in enumerate(codecs_raw):
        spec = dict(spec) if isinstance(spec, Mapping) else spec
        if isinstance(spec, dict) and spec.get("kind") == "adapter" and "exe" in spec:
            if isinstance(spec["exe"], str):
                spec["exe"] = resolve(spec["exe"])
        codecs.append(_parse_codec(spec, f"config.codecs[{i}]"))

    chains = []
    for i, chain in enumerate(obj.get("chains", [])):
        chains.append(_parse_chain(chain, f"config.chains[{i}]", len(codecs), f"chain{i}"))

    targets = []
    targets_raw = obj.get("targets", [])
    if not isinstance(targets_raw, list):
        raise ConfigError("config.targets: expected a list of numbers")
    for i, t in enumerate(targets_raw):
        t = _as_number(t, f"config.targets[{i}]")
        if not 0.0 < t < BPP_LIMIT:
            raise ConfigError(f"config.targets[{i}]: {t} outside the open interval (0, {BPP_LIMIT:g})")
        targets.append(t)
    targets = tuple(sorted(targets))

    metrics_raw = obj.get("metrics", ["psnr"])
    if not isinstance(metrics_raw, list) or not all(isinstance(m, str) for m in metrics_raw):
        raise ConfigError("config.metrics: expected a list of metric names")
    bad = sorted(set(metrics_raw) - set(KNOWN_METRICS))
    if bad:
        raise ConfigError(f"config.metrics: unknown metrics {bad}")
    metrics = tuple(dict.fromkeys(metrics_raw))

    extractor_spec = None
    if obj.get("extractor") is not None:
        raw_ex = obj["extractor"]
        if isinstance(raw_ex, Mapping):
            raw_ex = dict(raw_ex)
            for key in ("path", "exe"):
                if isinstance(raw_ex.get(key), str):
                    raw_ex[key] = resolve(raw_ex[key])
        extractor_spec = _parse_extractor(raw_ex, "config.extractor")

    needs_extractor = {"deep_distance", "cosine"} & set(metrics)
    if needs_extractor and extractor_spec is None:
        raise ConfigError(f"config.metrics: {sorted(needs_extractor)} need config.extractor")

    similarity_bpp: float | None
    if "similarity_bpp" in obj:
        if obj["similarity_bpp"] is None:
            similarity_bpp = None
        else:
            similarity_bpp = _as_number(obj["similarity_bpp"], "config.similarity_bpp")
            if not 0.0 < similarity_bpp < BPP_LIMIT:
                raise ConfigError(
                    f"config.similarity_bpp: {similarity_bpp} outside (0, {BPP_LIMIT:g})"
                )
            if extractor_spec is None:
                raise ConfigError("config.similarity_bpp: needs config.extractor")
    else:
        similarity_bpp = 0.5 if extractor_spec is not None else None

    timing = None
    if obj.get("timing") is not None:
        tobj = obj["timing"]
        _require_keys(tobj, {"quality", "target", "warmup", "reps"}, set(), "config.timing")
        t_quality = None if "quality" not in tobj else _as_number(tobj["quality"], "config.timing.quality")
        t_target = None if "target" not in tobj else _as_number(tobj["target"], "config.timing.target")
        if (t_quality is None) == (t_target is None):
            raise ConfigError("config.timing: needs exactly one of quality or target")
        warmup = _as_int(tobj.get("warmup", DEFAULT_WARMUP), "config.timing.warmup")
        reps = _as_int(tobj.get("reps", DEFAULT_REPS), "config.timing.reps")
        if warmup < 0 or reps < 1:
            raise ConfigError("config.timing: warmup must be >= 0 and reps >= 1")
        timing = TimingPlan(quality=t_quality, target=t_target, warmup=warmup, reps=reps)

    tol = _as_number(obj.get("tol", DEFAULT_TOLERANCE), "config.tol")
    if tol <= 0:
        raise ConfigError("config.tol: must be positive")
    sample_size = _as_int(obj.get("sample_size", DEFAULT_SAMPLE_SIZE), "config.sample_size")
    if sample_size < 1:
        raise ConfigError("config.sample_size: must be at least 1")
    allow_scale_reduction = obj.get("allow_scale_reduction", False)
    if not isinstance(allow_scale_reduction, bool):
        raise ConfigError("config.allow_scale_reduction: expected a boolean")

    return ExperimentPlan(
        name=_as_str(obj.get("name", "experiment"), "config.name"),
        corpus_dir=corpus_dir,
        corpus_pattern=corpus_pattern,
        corpus_manifest=corpus_manifest,
        corpus_root=corpus_root,
        codecs=tuple(codecs),
        chains=tuple(chains),
        targets=targets,
        metrics=metrics,
        extractor=extractor_spec,
        similarity_bpp=similarity_bpp,
        timing=timing,
        seed=_as_int(obj.get("seed", 0), "config.seed"),
        tol=tol,
        sample_size=sample_size,
        allow_scale_reduction=allow_scale_reduction,
        raw_config=obj,
    )


# ---------------------------------------------------------------------------
# Execution


@dataclass(frozen=True)
class SimilarityRow:
    codec_id: str
    tap_id: str
    mean: float
    std: float


@dataclass(frozen=True)
class ReportBundle:
    rd_points: tuple[RateDistortionPoint, ...]
    similarity: tuple[SimilarityRow, ...]
    timing: tuple[TimingReport, ...]
    errors: tuple[str, ...]
    raw: tuple[tuple, ...]
    metadata: Mapping[str, Any]

    def to_json_dict(self) -> dict:
        return {
            "metadata": dict(self.metadata),
            "rd_points": [
                {
                    "codec": p.codec_id,
                    "target_bpp": p.target_bpp,
                    "achieved_bpp": p.achieved_bpp,
                    "quality": p.quality,
                    "tile_count": p.tile_count,
                    # list of [metric, mean, std] so row order survives JSON
                    "aggregates": [[k, v[0], v[1]] for k, v in p.aggregates.items()],
                    "flags": list(p.flags),
                }
                for p in self.rd_points
            ],
            "similarity": [
                {"codec": s.codec_id, "tap_id": s.tap_id, "mean": s.mean, "std": s.std}
                for s in self.similarity
            ],
            "timing": [t.to_json_dict() for t in self.timing],
            "errors": list(self.errors),
            "raw": [
                [c, t, tile, m, ("inf" if isinstance(v, float) and math.isinf(v) else v)]
                for (c, t, tile, m, v) in self.raw
            ],
        }


def bundle_from_json(obj: Mapping[str, Any]) -> ReportBundle:
    """Rebuild a bundle from bundle.json content (for report re-emission)."""
    points = tuple(
        RateDistortionPoint(
            codec_id=p["codec"],
            target_bpp=float(p["target_bpp"]),
            achieved_bpp=float(p["achieved_bpp"]),
            quality=float(p["quality"]),
            tile_count=int(p["tile_count"]),
            aggregates={m: (float(mean), float(std)) for m, mean, std in p["aggregates"]},
            flags=tuple(p["flags"]),
        )
        for p in obj.get("rd_points", [])
    )
    sim = tuple(
        SimilarityRow(
            codec_id=s["codec"], tap_id=s["tap_id"],
            mean=float(s["mean"]), std=float(s["std"]),
        )
        for s in obj.get("similarity", [])
    )
    timing = tuple(
        TimingReport(
            codec_id=t["codec"], phase=t["phase"], quality=float(t["quality"]),
            tile_count=int(t["tile_count"]), reps=int(t["reps"]),
            warmup_reps=int(t["warmup_reps"]), total_seconds=float(t["total_seconds"]),
            tiles_per_second=float(t["tiles_per_second"]),
            per_rep_seconds=tuple(float(x) for x in t["per_rep_seconds"]),
            median_rep_seconds=float(t["median_rep_seconds"]), host=t["host"],
        )
        for t in obj.get("timing", [])
    )
    raw = tuple(
        (c, t, tile, m, (math.inf if v == "inf" else float(v)))
        for (c, t, tile, m, v) in obj.get("raw", [])
    )
    return ReportBundle(
        rd_points=points, similarity=sim, timing=timing,
        errors=tuple(obj.get("errors", [])), raw=raw,
        metadata=dict(obj.get("metadata", {})),
    )


def _load_corpus(plan: ExperimentPlan) -> list[Tile]:
    if plan.corpus_manifest is not None:
        manifest = load_manifest(plan.corpus_manifest)
        root = plan.corpus_root
    else:
        assert plan.corpus_dir is not None
        pattern = plan.corpus_pattern
        if "/" not in pattern:
            pattern = f"**/{pattern}"
        manifest = build_manifest(plan.corpus_dir, pattern=pattern)
        root = plan.corpus_dir
    assert root is not None
    tiles = [tile for _, tile in iter_tiles(manifest, root)]
    if not tiles:
        raise ConfigError("corpus contains no tiles")
    return tiles


def build_codec(spec: CodecSpec) -> Codec:
    if spec.kind == "reference":
        return ReferenceCodec(subsample=spec.subsample)
    return AdapterCodec(AdapterHandle(spec.exe, spec.args, spec.timeout))


def build_extractor(spec: ExtractorSpec) -> Extractor:
    if spec.kind == "seeded":
        return seeded_extractor(spec.seed)
    if spec.kind == "weights":
        return load_weights(Path(spec.path).read_bytes())
    return AdapterExtractor(AdapterHandle(spec.exe, spec.args, spec.timeout))


def _build_chain_codec(
    plan_chain: ChainPlan, codecs: list[Codec], tiles: list[Tile], plan: ExperimentPlan
) -> ChainCodec:
    sample = seeded_sample(tiles, plan.sample_size, plan.seed)
    current = sample
    fixed: list[tuple[Codec, float]] = []
    for stage in plan_chain.stages[:-1]:
        codec = codecs[stage.codec_index]
        if stage.quality is not None:
            quality = stage.quality
        else:
            assert stage.target is not None
            quality = target_bpp(codec, current, stage.target, tol=plan.tol).quality
        fixed.append((codec, quality))
        current = [codec.decode(codec.encode(t, quality)) for t in current]
    final = codecs[plan_chain.stages[-1].codec_index]
    return ChainCodec(fixed_stages=fixed, final=final, name=plan_chain.name)


def run_experiment(
    plan: ExperimentPlan,
    jobs: int = 1,
    dump_raw: bool = False,
    parts: Sequence[str] = ("rd", "similarity", "timing"),
) -> ReportBundle:
    """Execute the plan and return the in-memory report bundle."""
    bad_parts = sorted(set(parts) - {"rd", "similarity", "timing"})
    if bad_parts:
        raise ValueError(f"unknown experiment parts {bad_parts}")
    if jobs < 1:
        raise ValueError("jobs must be at least 1")
    tiles = _load_corpus(plan)
    errors: list[str] = []
    raw: list[tuple] = []

    codecs = [build_codec(spec) for spec in plan.codecs]
    extractor = build_extractor(plan.extractor) if plan.extractor is not None else None

    all_codecs: list[Codec] = list(codecs)
    for chain_plan in plan.chains:
        try:
            all_codecs.append(_build_chain_codec(chain_plan, codecs, tiles, plan))
        except Exception as exc:
            errors.append(f"chain {chain_plan.name!r}: {exc}")

    rd_points: list[RateDistortionPoint] = []
    if "rd" in parts and plan.targets:
        work = [(codec, target) for codec in all_codecs for target in plan.targets]

        def run_point(item: tuple[Codec, float]) -> RateDistortionPoint:
            codec, target = item
            sink = raw if dump_raw else None
            return rd_point(
                codec, tiles, target, plan.metrics, extractor=extractor,
                seed=plan.seed, tol=plan.tol, sample_size=plan.sample_size,
                allow_scale_reduction=plan.allow_scale_reduction, raw_sink=sink,
            )

        if jobs == 1:
            results: list[RateDistortionPoint | None] = []
            for item in work:
                try:
                    results.append(run_point(item))
                except (PointFailure, ValueError) as exc:
                    errors.append(str(exc))
                    results.append(None)
        else:
            # point order stays fixed by the work list, so output is
            # independent of scheduling; raw dump is disabled in parallel
            # mode to keep row order deterministic
            if dump_raw:
                raise ValueError("dump_raw requires jobs=1")
            results = [None] * len(work)
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                futures = {i: pool.submit(run_point, item) for i, item in enumerate(work)}
                for i, future in futures.items():
                    try:
                        results[i] = future.result()
                    except (PointFailure, ValueError) as exc:
                        errors.append(str(exc))
        rd_points = [r for r in results if r is not None]

    similarity_rows: list[SimilarityRow] = []
    if "similarity" in parts and plan.similarity_bpp is not None and extractor is not None:
        for codec in all_codecs:
            try:
                sample = seeded_sample(tiles, plan.sample_size, plan.seed)
                rt = target_bpp(codec, sample, plan.similarity_bpp, tol=plan.tol)
                per_tap: dict[str, list[float]] = {}
                for tile in tiles:
                    decoded = codec.decode(codec.encode(tile, rt.quality))
                    profile = profile_from_features(
                        extractor.extract(tile), extractor.extract(decoded)
                    )
                    for tap_id, value in profile.items():
                        per_tap.setdefault(tap_id, []).append(value)
                        if dump_raw:
                            raw.append(
                                (codec.name, plan.similarity_bpp, tile.id, f"cosine_{tap_id}", value)
                            )
                for tap_id, values in per_tap.items():
                    mean, std = aggregate(values)
                    similarity_rows.append(
                        SimilarityRow(codec_id=codec.name, tap_id=tap_id, mean=mean, std=std)
                    )
            except Exception as exc:
                errors.append(f"similarity {codec.name!r}: {exc}")

    timing_reports: list[TimingReport] = []
    if "timing" in parts and plan.timing is not None:
        for codec in all_codecs:
            try:
                if plan.timing.quality is not None:
                    quality = plan.timing.quality
                else:
                    assert plan.timing.target is not None
                    sample = seeded_sample(tiles, plan.sample_size, plan.seed)
                    quality = target_bpp(codec, sample, plan.timing.target, tol=plan.tol).quality
                enc_report, blobs = time_encode(
                    codec, tiles, quality, warmup=plan.timing.warmup, reps=plan.timing.reps
                )
                timing_reports.append(enc_report)
                timing_reports.append(
                    time_decode(codec, blobs, warmup=plan.timing.warmup, reps=plan.timing.reps)
                )
            except Exception as exc:
                errors.append(f"timing {codec.name!r}: {exc}")

    metadata = {
        "name": plan.name,
        "config_hash": plan.config_hash(),
        "seed": plan.seed,
        "toolkit_version": __version__,
        "tile_count": len(tiles),
        "psnr_aggregate_cap_db": 100.0,
    }
    return ReportBundle(
        rd_points=tuple(rd_points),
        similarity=tuple(similarity_rows),
        timing=tuple(timing_reports),
        errors=tuple(errors),
        raw=tuple(raw),
        metadata=metadata,
    )
