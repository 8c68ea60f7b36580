"""Config parsing, validation, and encoder construction."""

import json

import pytest

from irpatch import (
    AugmentConfig,
    DeConfig,
    GridConfig,
    ObjectiveWeights,
    PasteConfig,
    SynthConfig,
    ToyEncoder,
    build_encoder,
    default_config_doc,
    load_run_config,
)
from irpatch.config import RunConfig
from irpatch.encoders import DEFAULT_LABELS
from irpatch.errors import ConfigError, EncoderError


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


class TestLoadRunConfig:
    def test_minimal_config_gets_all_defaults(self, tmp_path):
        cfg = load_run_config(_write(tmp_path, {"seed": 7}))
        assert cfg.seed == 7
        assert cfg.out is None and cfg.dataset is None
        assert cfg.k == 8 and cfg.n_eot == 4
        assert cfg.encoder == {"kind": "toy"}
        assert cfg.grid == GridConfig()
        assert cfg.paste == PasteConfig()
        assert cfg.augment == AugmentConfig()
        assert cfg.weights == ObjectiveWeights()
        assert cfg.search == DeConfig()
        assert cfg.synth == SynthConfig()
        assert cfg.sweep is None

    def test_requires_explicit_integer_seed(self, tmp_path):
        with pytest.raises(ConfigError, match="seed"):
            load_run_config(_write(tmp_path, {}))
        with pytest.raises(ConfigError, match="seed"):
            load_run_config(_write(tmp_path, {"seed": True}))
        with pytest.raises(ConfigError, match="seed"):
            load_run_config(_write(tmp_path, {"seed": "7"}))

    def test_unknown_keys_fail_loudly(self, tmp_path):
        with pytest.raises(ConfigError, match="popluation"):
            load_run_config(_write(tmp_path, {"seed": 1, "popluation": 50}))
        with pytest.raises(ConfigError, match="grid"):
            load_run_config(_write(tmp_path, {"seed": 1, "grid": {"bogus": 3}}))

    def test_section_value_errors_are_config_errors(self, tmp_path):
        with pytest.raises(ConfigError, match="'grid'"):
            load_run_config(_write(tmp_path, {"seed": 1, "grid": {"grid_dim": 1}}))
        with pytest.raises(ConfigError, match="'search'"):
            load_run_config(_write(tmp_path, {"seed": 1, "search": {"population": 2}}))
        with pytest.raises(ConfigError, match="must be an object"):
            load_run_config(_write(tmp_path, {"seed": 1, "paste": 3}))

    def test_json_list_ranges_become_tuples(self, tmp_path):
        doc = {
            "seed": 1,
            "augment": {"blur_sigma": [0.0, 1.0]},
            "search": {"f_range": [0.2, 0.8]},
            "paste": {"boundary_band": [0.1, 0.9]},
        }
        cfg = load_run_config(_write(tmp_path, doc))
        assert cfg.augment.blur_sigma == (0.0, 1.0)
        assert cfg.search.f_range == (0.2, 0.8)
        assert cfg.paste.boundary_band == (0.1, 0.9)

    def test_paths_resolve_against_config_directory(self, tmp_path):
        doc = {"seed": 1, "out": "run", "dataset": "/abs/manifest.json"}
        cfg = load_run_config(_write(tmp_path, doc))
        assert cfg.out == str(tmp_path / "run")
        assert cfg.dataset == "/abs/manifest.json"
        with pytest.raises(ConfigError, match="non-empty strings"):
            load_run_config(_write(tmp_path, {"seed": 1, "out": ""}))

    def test_file_level_failures(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_run_config(str(tmp_path / "nope.json"))
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError, match="valid JSON"):
            load_run_config(str(bad))
        arr = tmp_path / "arr.json"
        arr.write_text("[1, 2]")
        with pytest.raises(ConfigError, match="JSON object"):
            load_run_config(str(arr))

    def test_steep_curvature_is_rejected_as_undeployable(self, tmp_path):
        doc = {"seed": 1, "grid": {"curvature_limit": 0.5}}
        with pytest.raises(ConfigError, match="not deployable"):
            load_run_config(_write(tmp_path, doc))
        doc["grid"]["curvature_limit"] = 0.49
        assert load_run_config(_write(tmp_path, doc)).grid.curvature_limit == 0.49

    def test_sweep_section(self, tmp_path):
        doc = {
            "seed": 1,
            "sweep": {
                "datasets": ["a/manifest.json"],
                "encoders": [{"kind": "toy", "seed": 5}],
            },
        }
        cfg = load_run_config(_write(tmp_path, doc))
        assert cfg.sweep["datasets"] == [str(tmp_path / "a" / "manifest.json")]
        assert cfg.sweep["encoders"] == [{"kind": "toy", "seed": 5}]

        for broken in (
            {"seed": 1, "sweep": []},
            {"seed": 1, "sweep": {"datasets": [], "encoders": [{"kind": "toy"}]}},
            {"seed": 1, "sweep": {"datasets": ["m.json"]}},
        ):
            with pytest.raises(ConfigError, match="sweep"):
                load_run_config(_write(tmp_path, broken))

    def test_direct_constructor_guards(self):
        with pytest.raises(ConfigError, match="k must be"):
            RunConfig(seed=1, k=0)
        with pytest.raises(ConfigError, match="n_eot"):
            RunConfig(seed=1, n_eot=0)


class TestBuildEncoder:
    def test_toy_defaults(self):
        enc = build_encoder({"kind": "toy"})
        assert isinstance(enc, ToyEncoder)
        assert enc.seed == 0
        assert enc.feature_dim == 32
        assert enc.class_labels == DEFAULT_LABELS

    def test_toy_custom(self):
        enc = build_encoder(
            {"kind": "toy", "seed": 4, "feature_dim": 12, "labels": ["a", "b"]}
        )
        assert enc.seed == 4
        assert enc.feature_dim == 12
        assert enc.class_labels == ("a", "b")

    def test_toy_validation(self):
        with pytest.raises(ConfigError, match="unknown keys"):
            build_encoder({"kind": "toy", "url": "x"})
        with pytest.raises(ConfigError, match="strings"):
            build_encoder({"kind": "toy", "labels": [1, 2]})
        with pytest.raises(ConfigError, match="feature_dim"):
            build_encoder({"kind": "toy", "feature_dim": 1})

    def test_remote_validation(self):
        with pytest.raises(ConfigError, match="url"):
            build_encoder({"kind": "remote"})
        with pytest.raises(ConfigError, match="unknown keys"):
            build_encoder({"kind": "remote", "url": "http://x", "seed": 3})
        # a well-formed spec reaches the network layer and fails there
        with pytest.raises(EncoderError):
            build_encoder({"kind": "remote", "url": "http://127.0.0.1:1", "timeout": 0.2})

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="unknown encoder kind"):
            build_encoder({"kind": "clip"})
        with pytest.raises(ConfigError, match="object"):
            build_encoder("toy")


class TestDefaultConfigDoc:
    def test_doc_loads_to_shipped_defaults(self, tmp_path):
        doc = default_config_doc(seed=3, dataset="d/manifest.json",
                                 clean="d/manifest.json", out="run")
        cfg = load_run_config(_write(tmp_path, doc))
        assert cfg.seed == 3
        assert cfg.grid == GridConfig()
        assert cfg.paste == PasteConfig()
        assert cfg.augment == AugmentConfig()
        assert cfg.weights == ObjectiveWeights()
        assert cfg.search == DeConfig()
        assert cfg.synth == SynthConfig()
        assert cfg.out == str(tmp_path / "run")

    def test_encoder_override(self, tmp_path):
        doc = default_config_doc(1, "m.json", "m.json", "o",
                                 encoder={"kind": "toy", "seed": 9})
        cfg = load_run_config(_write(tmp_path, doc))
        assert build_encoder(cfg.encoder).seed == 9
