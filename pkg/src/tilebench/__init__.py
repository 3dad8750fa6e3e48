"""tilebench: a reproducible benchmarking toolkit for lossy tile compression.

The package bundles a self-contained reference codec, image quality and
feature-similarity metrics, a seeded convolutional feature extractor,
subprocess adapters for external codecs and extractors, bitrate targeting,
timing harnesses, and an experiment runner with deterministic reports.
"""

__version__ = "0.1.0"

from .adapters import (
    AdapterError,
    AdapterExtractor,
    AdapterHandle,
    ConformanceReport,
    conformance_check,
)
from .codecs import AdapterCodec, ChainCodec, Codec, ReferenceCodec
from .extractor import FeatureExtractor, load_weights, save_weights, seeded_extractor
from .imagecore import CompressedBlob, PnmError, Tile, bits_per_pixel, read_pnm, write_pnm
from .metrics import (
    FeatureSet,
    FeatureVector,
    MetricReport,
    compute_metrics,
    cosine_similarity,
    deep_feature_distance,
    feature_similarity_profile,
    ms_ssim,
    psnr,
)
from .ratecontrol import RateDistortionPoint, RateTargetResult, rd_point, sweep, target_bpp
from .rng import SplitMix64
from .runner import (
    ConfigError,
    ExperimentPlan,
    ReportBundle,
    aggregate,
    load_config,
    run_experiment,
)
from .tiling import CorpusManifest, build_manifest, foreground_mask, sample_tiles

__all__ = [
    "__version__",
    "AdapterCodec",
    "AdapterError",
    "AdapterExtractor",
    "AdapterHandle",
    "ChainCodec",
    "Codec",
    "CompressedBlob",
    "ConfigError",
    "ConformanceReport",
    "CorpusManifest",
    "ExperimentPlan",
    "FeatureExtractor",
    "FeatureSet",
    "FeatureVector",
    "MetricReport",
    "PnmError",
    "RateDistortionPoint",
    "RateTargetResult",
    "ReferenceCodec",
    "ReportBundle",
    "SplitMix64",
    "Tile",
    "aggregate",
    "bits_per_pixel",
    "build_manifest",
    "compute_metrics",
    "conformance_check",
    "cosine_similarity",
    "deep_feature_distance",
    "feature_similarity_profile",
    "foreground_mask",
    "load_config",
    "load_weights",
    "ms_ssim",
    "psnr",
    "rd_point",
    "read_pnm",
    "run_experiment",
    "sample_tiles",
    "save_weights",
    "seeded_extractor",
    "sweep",
    "target_bpp",
    "write_pnm",
]
