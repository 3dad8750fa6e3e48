"""Config parsing (fail closed), experiment execution, and bundle round-trips."""

import json

import pytest

from helpers import texture_tile
from tilebench.extractor import save_weights, seeded_extractor
from tilebench.imagecore import write_pnm
from tilebench.runner import (
    ConfigError,
    ExperimentPlan,
    aggregate,
    bundle_from_json,
    load_config,
    run_experiment,
)


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    for subject in ("s1", "s2"):
        d = root / subject
        d.mkdir()
        for i in range(3):
            seed = int(subject[1]) * 10 + i
            (d / f"t{i}.ppm").write_bytes(write_pnm(texture_tile(seed, size=32)))
    return root


def minimal_config(corpus_dir, **extra):
    cfg = {
        "corpus": {"dir": str(corpus_dir)},
        "codecs": [{"kind": "reference"}],
    }
    cfg.update(extra)
    return json.dumps(cfg)


class TestAggregate:
    def test_three_values(self):
        mean, std = aggregate([1.0, 2.0, 3.0])
        assert mean == 2.0
        assert std == pytest.approx(0.8164965809, abs=1e-5)  # population std

    def test_identical_values(self):
        assert aggregate([1.0, 1.0, 1.0]) == (1.0, 0.0)

    def test_single_value(self):
        assert aggregate([7.25]) == (7.25, 0.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate([])

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            aggregate([1.0, float("inf")])


class TestLoadConfig:
    def test_minimal_defaults(self, corpus_dir):
        plan = load_config(minimal_config(corpus_dir))
        assert plan.name == "experiment"
        assert plan.corpus_dir == str(corpus_dir)
        assert plan.codecs[0].kind == "reference"
        assert plan.targets == ()
        assert plan.metrics == ("psnr",)
        assert plan.extractor is None
        assert plan.similarity_bpp is None
        assert plan.timing is None
        assert (plan.seed, plan.tol, plan.sample_size) == (0, 0.05, 50)
        assert plan.allow_scale_reduction is False

    def test_unknown_top_level_key_named(self, corpus_dir):
        with pytest.raises(ConfigError, match=r"config: unknown keys \['codecz'\]"):
            load_config(minimal_config(corpus_dir, codecz=[]))

    def test_not_json(self):
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config("{nope")

    def test_root_must_be_object(self):
        with pytest.raises(ConfigError, match="root"):
            load_config("[1, 2]")

    def test_missing_required_keys(self):
        with pytest.raises(ConfigError, match="missing required keys"):
            load_config("{}")

    @pytest.mark.parametrize("target", [0.0, -1.0, 24.0, 25.0])
    def test_targets_outside_open_interval(self, corpus_dir, target):
        with pytest.raises(ConfigError, match=r"config\.targets\[0\]"):
            load_config(minimal_config(corpus_dir, targets=[target]))

    def test_targets_sorted(self, corpus_dir):
        plan = load_config(minimal_config(corpus_dir, targets=[1.0, 0.25, 0.5]))
        assert plan.targets == (0.25, 0.5, 1.0)

    def test_corpus_dir_must_exist(self, corpus_dir):
        cfg = json.dumps(
            {"corpus": {"dir": str(corpus_dir / "gone")}, "codecs": [{"kind": "reference"}]}
        )
        with pytest.raises(ConfigError, match="not a directory"):
            load_config(cfg)

    def test_corpus_needs_dir_or_manifest(self, corpus_dir):
        cfg = json.dumps({"corpus": {}, "codecs": [{"kind": "reference"}]})
        with pytest.raises(ConfigError, match="'dir' or 'manifest'"):
            load_config(cfg)

    def test_relative_paths_resolve_against_base_dir(self, corpus_dir):
        cfg = json.dumps(
            {"corpus": {"dir": corpus_dir.name}, "codecs": [{"kind": "reference"}]}
        )
        plan = load_config(cfg, base_dir=corpus_dir.parent)
        assert plan.corpus_dir == str(corpus_dir)

    def test_codecs_must_be_non_empty(self, corpus_dir):
        with pytest.raises(ConfigError, match="non-empty"):
            load_config(minimal_config(corpus_dir, codecs=[]))

    def test_adapter_codec_needs_exe(self, corpus_dir):
        with pytest.raises(ConfigError, match=r"config\.codecs\[0\].*exe"):
            load_config(minimal_config(corpus_dir, codecs=[{"kind": "adapter"}]))

    def test_adapter_exe_must_exist(self, corpus_dir):
        with pytest.raises(ConfigError, match="does not exist"):
            load_config(
                minimal_config(
                    corpus_dir, codecs=[{"kind": "adapter", "exe": "/no/such/bin"}]
                )
            )

    def test_bad_codec_kind(self, corpus_dir):
        with pytest.raises(ConfigError, match=r"config\.codecs\[0\]\.kind"):
            load_config(minimal_config(corpus_dir, codecs=[{"kind": "magic"}]))

    def test_unknown_metric(self, corpus_dir):
        with pytest.raises(ConfigError, match="unknown metrics"):
            load_config(minimal_config(corpus_dir, metrics=["psnr", "vmaf"]))

    def test_feature_metrics_need_extractor(self, corpus_dir):
        with pytest.raises(ConfigError, match="need config.extractor"):
            load_config(minimal_config(corpus_dir, metrics=["cosine"]))

    def test_seeded_extractor_sets_similarity_default(self, corpus_dir):
        plan = load_config(
            minimal_config(corpus_dir, extractor={"kind": "seeded", "seed": 3})
        )
        assert plan.extractor.kind == "seeded"
        assert plan.extractor.seed == 3
        assert plan.similarity_bpp == 0.5

    def test_weights_extractor_path_checked(self, corpus_dir, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            load_config(
                minimal_config(
                    corpus_dir, extractor={"kind": "weights", "path": str(tmp_path / "w")}
                )
            )
        weights = tmp_path / "weights.bin"
        weights.write_bytes(save_weights(seeded_extractor(0)))
        plan = load_config(
            minimal_config(corpus_dir, extractor={"kind": "weights", "path": str(weights)})
        )
        assert plan.extractor.kind == "weights"

    def test_similarity_bpp_needs_extractor(self, corpus_dir):
        with pytest.raises(ConfigError, match="needs config.extractor"):
            load_config(minimal_config(corpus_dir, similarity_bpp=0.5))

    def test_similarity_bpp_range(self, corpus_dir):
        with pytest.raises(ConfigError, match="similarity_bpp"):
            load_config(
                minimal_config(
                    corpus_dir,
                    extractor={"kind": "seeded"},
                    similarity_bpp=30.0,
                )
            )

    def test_timing_needs_exactly_one_knob(self, corpus_dir):
        with pytest.raises(ConfigError, match="exactly one"):
            load_config(minimal_config(corpus_dir, timing={}))
        with pytest.raises(ConfigError, match="exactly one"):
            load_config(minimal_config(corpus_dir, timing={"quality": 50, "target": 0.5}))
        plan = load_config(minimal_config(corpus_dir, timing={"quality": 50}))
        assert plan.timing.quality == 50.0
        assert plan.timing.target is None
        assert (plan.timing.warmup, plan.timing.reps) == (1, 3)

    def test_timing_rep_bounds(self, corpus_dir):
        with pytest.raises(ConfigError, match="warmup"):
            load_config(minimal_config(corpus_dir, timing={"quality": 50, "warmup": -1}))
        with pytest.raises(ConfigError, match="reps"):
            load_config(minimal_config(corpus_dir, timing={"quality": 50, "reps": 0}))

    def test_chain_validation(self, corpus_dir):
        base = {"stages": [{"codec": 0, "quality": 50}, {"codec": 0}]}
        plan = load_config(minimal_config(corpus_dir, chains=[base]))
        assert plan.chains[0].name == "chain0"
        assert plan.chains[0].stages[0].quality == 50.0
        assert plan.chains[0].stages[1].quality is None

        with pytest.raises(ConfigError, match="at least two"):
            load_config(minimal_config(corpus_dir, chains=[{"stages": [{"codec": 0}]}]))
        with pytest.raises(ConfigError, match="outside the codecs list"):
            load_config(
                minimal_config(
                    corpus_dir,
                    chains=[{"stages": [{"codec": 5, "quality": 1}, {"codec": 0}]}],
                )
            )
        with pytest.raises(ConfigError, match="final stage is swept"):
            load_config(
                minimal_config(
                    corpus_dir,
                    chains=[{"stages": [{"codec": 0, "quality": 1}, {"codec": 0, "quality": 2}]}],
                )
            )
        with pytest.raises(ConfigError, match="exactly one of quality or target"):
            load_config(
                minimal_config(
                    corpus_dir,
                    chains=[{"stages": [{"codec": 0}, {"codec": 0}]}],
                )
            )

    def test_tol_and_sample_size_bounds(self, corpus_dir):
        with pytest.raises(ConfigError, match="tol"):
            load_config(minimal_config(corpus_dir, tol=0.0))
        with pytest.raises(ConfigError, match="sample_size"):
            load_config(minimal_config(corpus_dir, sample_size=0))

    def test_config_hash_canonical(self, corpus_dir):
        a = load_config(minimal_config(corpus_dir, seed=1, tol=0.05))
        spaced = json.dumps(json.loads(minimal_config(corpus_dir, tol=0.05, seed=1)), indent=4)
        b = load_config(spaced)
        assert a.config_hash() == b.config_hash()
        c = load_config(minimal_config(corpus_dir, seed=2))
        assert a.config_hash() != c.config_hash()


class TestRunExperiment:
    def test_rd_points_for_each_target(self, corpus_dir):
        plan = load_config(minimal_config(corpus_dir, targets=[2.0, 4.2], sample_size=6))
        bundle = run_experiment(plan, parts=("rd",))
        assert len(bundle.rd_points) == 2
        assert [p.target_bpp for p in bundle.rd_points] == [2.0, 4.2]
        assert all(p.codec_id == "refcodec" for p in bundle.rd_points)
        assert all(p.tile_count == 6 for p in bundle.rd_points)
        assert bundle.errors == ()
        meta = bundle.metadata
        assert meta["name"] == "experiment"
        assert meta["tile_count"] == 6
        assert meta["seed"] == 0
        assert meta["config_hash"] == plan.config_hash()
        assert meta["psnr_aggregate_cap_db"] == 100.0

    def test_identity_adapter_ideal_metrics(self, corpus_dir, identity_adapter_argv, feat_adapter_argv):
        cfg = {
            "corpus": {"dir": str(corpus_dir)},
            "codecs": [
                {
                    "kind": "adapter",
                    "exe": identity_adapter_argv[0],
                    "args": identity_adapter_argv[1:],
                }
            ],
            "targets": [1.0],
            "metrics": ["psnr"],
            "extractor": {
                "kind": "adapter",
                "exe": feat_adapter_argv[0],
                "args": feat_adapter_argv[1:],
            },
            "similarity_bpp": 1.0,
            "sample_size": 6,
        }
        bundle = run_experiment(load_config(json.dumps(cfg)), parts=("rd", "similarity"))
        point = bundle.rd_points[0]
        assert point.aggregates["psnr"] == (100.0, 0.0)  # lossless, capped
        assert "psnr_capped" in point.flags
        assert "target_unreachable" in point.flags  # identity bpp is constant 24+
        rows = {(r.codec_id, r.tap_id): (r.mean, r.std) for r in bundle.similarity}
        assert rows[("identity", "moments")][0] == pytest.approx(1.0, abs=1e-12)
        assert rows[("identity", "extrema")][0] == pytest.approx(1.0, abs=1e-12)
        assert rows[("identity", "moments")][1] == pytest.approx(0.0, abs=1e-12)

    def test_point_errors_collected(self, corpus_dir, broken_decoder_argv):
        cfg = {
            "corpus": {"dir": str(corpus_dir)},
            "codecs": [
                {
                    "kind": "adapter",
                    "exe": broken_decoder_argv[0],
                    "args": broken_decoder_argv[1:],
                }
            ],
            "targets": [1.0],
            "sample_size": 2,
        }
        bundle = run_experiment(load_config(json.dumps(cfg)), parts=("rd",))
        assert bundle.rd_points == ()
        assert len(bundle.errors) == 1
        assert "brokendec" in bundle.errors[0]

    def test_parallel_matches_serial(self, corpus_dir):
        plan = load_config(minimal_config(corpus_dir, targets=[2.0, 4.0], sample_size=6))
        serial = run_experiment(plan, jobs=1, parts=("rd",))
        parallel = run_experiment(plan, jobs=2, parts=("rd",))
        assert serial.to_json_dict()["rd_points"] == parallel.to_json_dict()["rd_points"]

    def test_dump_raw_requires_serial(self, corpus_dir):
        plan = load_config(minimal_config(corpus_dir, targets=[2.0]))
        with pytest.raises(ValueError, match="jobs=1"):
            run_experiment(plan, jobs=2, dump_raw=True)

    def test_dump_raw_rows(self, corpus_dir):
        plan = load_config(minimal_config(corpus_dir, targets=[2.0], sample_size=6))
        bundle = run_experiment(plan, dump_raw=True, parts=("rd",))
        assert len(bundle.raw) == 6  # one psnr row per tile
        codec, target, tile_id, metric, value = bundle.raw[0]
        assert (codec, target, metric) == ("refcodec", 2.0, "psnr")

    def test_timing_part(self, corpus_dir):
        plan = load_config(
            minimal_config(corpus_dir, timing={"quality": 50, "warmup": 0, "reps": 1})
        )
        bundle = run_experiment(plan, parts=("timing",))
        phases = [(t.codec_id, t.phase) for t in bundle.timing]
        assert phases == [("refcodec", "encode"), ("refcodec", "decode")]
        assert bundle.rd_points == ()

    def test_chain_codec_in_results(self, corpus_dir):
        cfg_chains = [
            {"name": "recode", "stages": [{"codec": 0, "quality": 30}, {"codec": 0}]}
        ]
        plan = load_config(
            minimal_config(corpus_dir, targets=[3.0], chains=cfg_chains, sample_size=6)
        )
        bundle = run_experiment(plan, parts=("rd",))
        assert [p.codec_id for p in bundle.rd_points] == ["refcodec", "recode"]

    def test_unknown_part_rejected(self, corpus_dir):
        plan = load_config(minimal_config(corpus_dir))
        with pytest.raises(ValueError, match="unknown experiment parts"):
            run_experiment(plan, parts=("rd", "nope"))

    def test_bundle_json_roundtrip(self, corpus_dir):
        plan = load_config(
            minimal_config(
                corpus_dir,
                targets=[2.0],
                timing={"quality": 50, "warmup": 0, "reps": 1},
                sample_size=6,
            )
        )
        bundle = run_experiment(plan, dump_raw=True)
        d = bundle.to_json_dict()
        rebuilt = bundle_from_json(json.loads(json.dumps(d)))
        assert rebuilt.to_json_dict() == d
