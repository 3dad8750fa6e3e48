"""Command-line interface.

Subcommands: tile, compress, decompress, evaluate, sweep, similarity, time,
report, conformance. Exit codes: 0 on success, 1 for usage or configuration
errors, 2 when the run itself failed (adapter crashes, failed points,
failing conformance checks).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .adapters import (
    AdapterError,
    AdapterExtractor,
    AdapterHandle,
    conformance_check,
    probe_capabilities,
)
from .codecs import AdapterCodec, Codec, ReferenceCodec
from .extractor import WeightsFormatError, load_weights, seeded_extractor
from .imagecore import CompressedBlob, PnmError, read_pnm, write_pnm
from .metrics import Extractor, KNOWN_METRICS, compute_metrics
from .ratecontrol import PointFailure
from .runner import (
    ConfigError,
    ExperimentPlan,
    TimingPlan,
    bundle_from_json,
    load_config,
    run_experiment,
)
from .reports import emit_reports
from .tiling import (
    CorpusManifest,
    TileRecord,
    crop,
    foreground_mask,
    sample_tiles,
    save_manifest,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse maps its own errors to exit code 2; we want 1."""

    def error(self, message: str):  # noqa: D401 - argparse override
        raise _UsageError(f"{self.prog}: {message}")


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="experiment config JSON file")
    parser.add_argument("--seed", type=int, default=default,
                        help="seed override for sampling and experiments")
    parser.add_argument("--out", default=default, help="output file or directory")
    parser.add_argument("--dump-raw", action="store_true",
                        default=argparse.SUPPRESS if suppress else False,
                        help="also write per-tile raw metric values (raw.csv)")
    parser.add_argument("--jobs", type=int, default=default,
                        help="parallel workers for experiment points (default 1)")


def build_parser() -> _Parser:
    parser = _Parser(prog="tilebench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="command")

    shared = _Parser(add_help=False)
    _global_flags(shared, suppress=True)

    p = sub.add_parser("tile", parents=[shared], help="sample tiles out of a large image")
    p.add_argument("--input", required=True, help="source image (PNM P6)")
    p.add_argument("--size", type=int, default=224, help="tile side in pixels (default 224)")
    p.add_argument("--count", type=int, required=True, help="number of tiles to sample")
    p.add_argument("--threshold", type=int, default=220,
                   help="min-channel value at which a pixel counts as background (default 220)")
    p.add_argument("--min-coverage", type=float, default=0.3,
                   help="required foreground fraction per tile (default 0.3)")
    p.add_argument("--subject", default="", help="subject id recorded in the manifest")

    p = sub.add_parser("compress", parents=[shared], help="encode one tile")
    p.add_argument("--input", required=True, help="tile to encode (PNM P6)")
    p.add_argument("--quality", type=float, required=True)
    p.add_argument("--codec", default="ref",
                   help="'ref', 'ref420', or an adapter executable (default ref)")

    p = sub.add_parser("decompress", parents=[shared], help="decode one blob back to a tile")
    p.add_argument("--input", required=True, help="encoded blob")
    p.add_argument("--codec", default="ref",
                   help="'ref', 'ref420', or an adapter executable (default ref)")

    p = sub.add_parser("evaluate", parents=[shared], help="compare a decoded tile to its reference")
    p.add_argument("--ref", required=True, help="reference tile (PNM P6)")
    p.add_argument("--test", required=True, help="tile under test (PNM P6)")
    p.add_argument("--metrics", default="psnr,ms_ssim",
                   help=f"comma-separated subset of {','.join(KNOWN_METRICS)}")
    p.add_argument("--extractor", default=None,
                   help="feature extractor: seed:<n>, weights:<path>, or adapter:<exe>")
    p.add_argument("--allow-scale-reduction", action="store_true",
                   help="evaluate small tiles with fewer similarity scales instead of failing")

    sub.add_parser("sweep", parents=[shared],
                   help="rate-distortion sweep over the configured targets")
    p = sub.add_parser("similarity", parents=[shared],
                       help="per-tap feature similarity at one bitrate")
    p.add_argument("--bpp", type=float, default=None, help="override the similarity bitrate")

    p = sub.add_parser("time", parents=[shared], help="encode/decode throughput")
    p.add_argument("--quality", type=float, default=None, help="fixed quality to time at")
    p.add_argument("--target", type=float, default=None, help="bpp target to time at")

    p = sub.add_parser("report", parents=[shared], help="re-emit reports from a bundle.json")
    p.add_argument("--bundle", required=True, help="bundle.json from a previous run")

    p = sub.add_parser("conformance", parents=[shared], help="check an adapter executable")
    p.add_argument("--adapter", required=True, help="adapter executable")
    p.add_argument("--timeout", type=float, default=120.0)
    p.add_argument("--json", action="store_true", help="emit the report as JSON")
    p.add_argument("args", nargs="*", help="extra arguments passed to the adapter")
    return parser


# ---------------------------------------------------------------------------
# helpers


def _build_codec(name: str) -> Codec:
    if name == "ref":
        return ReferenceCodec()
    if name == "ref420":
        return ReferenceCodec(subsample=True)
    return AdapterCodec(AdapterHandle(name))


def parse_extractor_arg(text: str) -> Extractor:
    kind, sep, rest = text.partition(":")
    if not sep:
        raise _UsageError(
            f"bad extractor {text!r}: expected seed:<n>, weights:<path>, or adapter:<exe>"
        )
    if kind == "seed":
        try:
            return seeded_extractor(int(rest))
        except ValueError as exc:
            raise _UsageError(f"bad extractor seed {rest!r}: {exc}") from exc
    if kind == "weights":
        return load_weights(Path(rest).read_bytes())
    if kind == "adapter":
        return AdapterExtractor(AdapterHandle(rest))
    raise _UsageError(f"bad extractor kind {kind!r}: expected seed, weights, or adapter")


def _require_out(args: argparse.Namespace, command: str) -> Path:
    if not args.out:
        raise _UsageError(f"{command} needs --out")
    return Path(args.out)


def _load_plan(args: argparse.Namespace) -> ExperimentPlan:
    if not args.config:
        raise _UsageError(f"{args.command} needs --config")
    path = Path(args.config)
    plan = load_config(path.read_text(encoding="utf-8"), base_dir=path.parent)
    if args.seed is not None:
        plan = dataclasses.replace(plan, seed=args.seed)
    return plan


def _finish_experiment(bundle, out_dir: Path, dump_raw: bool) -> int:
    paths = emit_reports(bundle, out_dir, dump_raw=dump_raw)
    for path in paths:
        print(path)
    if bundle.errors:
        for err in bundle.errors:
            print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


# ---------------------------------------------------------------------------
# subcommands


def _cmd_tile(args: argparse.Namespace) -> int:
    out_dir = _require_out(args, "tile")
    image = read_pnm(Path(args.input).read_bytes(), id=Path(args.input).stem)
    mask = foreground_mask(image, white_threshold=args.threshold)
    result = sample_tiles(
        image, mask, size=args.size, count=args.count,
        min_coverage=args.min_coverage, seed=args.seed or 0,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    subject = args.subject or Path(args.input).stem
    records = []
    for i, (x, y) in enumerate(result.origins):
        name = f"{subject}_{i:04d}.ppm"
        tile = crop(image, x, y, args.size, id=name)
        (out_dir / name).write_bytes(write_pnm(tile))
        records.append(
            TileRecord(subject_id=subject, class_label=None, path=name,
                       width=args.size, height=args.size)
        )
    manifest = CorpusManifest(records=tuple(records), name=subject)
    save_manifest(manifest, out_dir / "manifest.jsonl")
    print(f"sampled {len(result.origins)} of {args.count} tiles into {out_dir}")
    if result.shortfall:
        print("warning: sampling shortfall, the image ran out of eligible tiles",
              file=sys.stderr)
    return EXIT_OK


def _cmd_compress(args: argparse.Namespace) -> int:
    out_path = _require_out(args, "compress")
    tile = read_pnm(Path(args.input).read_bytes(), id=Path(args.input).stem)
    codec = _build_codec(args.codec)
    blob = codec.encode(tile, args.quality)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(blob.data)
    sidecar = {
        "codec": blob.codec_id,
        "quality": blob.quality,
        "source_width": blob.source_width,
        "source_height": blob.source_height,
        "bytes": len(blob.data),
        "bpp": blob.bpp,
    }
    Path(str(out_path) + ".meta.json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"{out_path}: {len(blob.data)} bytes, {blob.bpp:.4f} bpp")
    return EXIT_OK


def _cmd_decompress(args: argparse.Namespace) -> int:
    out_path = _require_out(args, "decompress")
    data = Path(args.input).read_bytes()
    codec = _build_codec(args.codec)
    meta_path = Path(str(args.input) + ".meta.json")
    if meta_path.is_file():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        blob = CompressedBlob(
            data=data, codec_id=meta["codec"], quality=float(meta["quality"]),
            source_width=int(meta["source_width"]),
            source_height=int(meta["source_height"]),
        )
    elif isinstance(codec, ReferenceCodec):
        blob = codec.blob_from_bytes(data)
    else:
        raise _UsageError(
            f"decompress: {meta_path} is missing and the blob format of "
            f"{args.codec!r} is opaque"
        )
    tile = codec.decode(blob)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(write_pnm(tile))
    print(f"{out_path}: {tile.width}x{tile.height}")
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace) -> int:
    ref = read_pnm(Path(args.ref).read_bytes(), id=Path(args.ref).stem)
    test = read_pnm(Path(args.test).read_bytes(), id=Path(args.test).stem)
    metrics = [m for m in args.metrics.split(",") if m]
    unknown = sorted(set(metrics) - set(KNOWN_METRICS))
    if unknown:
        raise _UsageError(f"unknown metrics {unknown}, expected a subset of {KNOWN_METRICS}")
    extractor = parse_extractor_arg(args.extractor) if args.extractor else None
    report = compute_metrics(
        ref, test, metrics, extractor=extractor,
        allow_scale_reduction=args.allow_scale_reduction,
    )
    text = json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    plan = _load_plan(args)
    if not plan.targets:
        raise _UsageError("sweep needs a non-empty config.targets list")
    out_dir = _require_out(args, "sweep")
    bundle = run_experiment(
        plan, jobs=args.jobs or 1, dump_raw=args.dump_raw, parts=("rd",)
    )
    return _finish_experiment(bundle, out_dir, args.dump_raw)


def _cmd_similarity(args: argparse.Namespace) -> int:
    plan = _load_plan(args)
    if args.bpp is not None:
        plan = dataclasses.replace(plan, similarity_bpp=args.bpp)
    if plan.extractor is None or plan.similarity_bpp is None:
        raise _UsageError("similarity needs config.extractor (and a similarity bitrate)")
    out_dir = _require_out(args, "similarity")
    bundle = run_experiment(
        plan, jobs=args.jobs or 1, dump_raw=args.dump_raw, parts=("similarity",)
    )
    return _finish_experiment(bundle, out_dir, args.dump_raw)


def _cmd_time(args: argparse.Namespace) -> int:
    plan = _load_plan(args)
    if args.quality is not None and args.target is not None:
        raise _UsageError("time takes at most one of --quality / --target")
    if args.quality is not None or args.target is not None:
        plan = dataclasses.replace(
            plan, timing=TimingPlan(quality=args.quality, target=args.target)
        )
    if plan.timing is None:
        raise _UsageError("time needs config.timing or --quality/--target")
    out_dir = _require_out(args, "time")
    bundle = run_experiment(plan, jobs=args.jobs or 1, dump_raw=False, parts=("timing",))
    return _finish_experiment(bundle, out_dir, dump_raw=False)


def _cmd_report(args: argparse.Namespace) -> int:
    out_dir = _require_out(args, "report")
    obj = json.loads(Path(args.bundle).read_text(encoding="utf-8"))
    bundle = bundle_from_json(obj)
    dump_raw = bool(args.dump_raw and bundle.raw)
    paths = emit_reports(bundle, out_dir, dump_raw=dump_raw)
    for path in paths:
        print(path)
    return EXIT_OK


def _cmd_conformance(args: argparse.Namespace) -> int:
    handle = AdapterHandle(args.adapter, tuple(args.args), timeout=args.timeout)
    report = conformance_check(handle)
    if args.json:
        sys.stdout.write(json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n")
    else:
        print(f"adapter: {report.adapter}")
        for check in report.checks:
            print(f"  {check.name}: {check.status}  {check.detail}")
        print("result: " + ("pass" if report.passed else "fail"))
    return EXIT_OK if report.passed else EXIT_RUNTIME


_COMMANDS = {
    "tile": _cmd_tile,
    "compress": _cmd_compress,
    "decompress": _cmd_decompress,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "similarity": _cmd_similarity,
    "time": _cmd_time,
    "report": _cmd_report,
    "conformance": _cmd_conformance,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help()
            return EXIT_USAGE
        if args.jobs is not None and args.jobs < 1:
            raise _UsageError("--jobs must be at least 1")
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"tilebench: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, PnmError, WeightsFormatError) as exc:
        print(f"tilebench: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"tilebench: missing file: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NotADirectoryError, IsADirectoryError, PermissionError) as exc:
        print(f"tilebench: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"tilebench: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AdapterError, PointFailure) as exc:
        print(f"tilebench: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
