"""Flat config parsing, layered resolution, and run manifests."""

import pytest

from ppgdecay.config import (
    DEFAULTS,
    ConfigError,
    RunManifest,
    config_digest,
    file_digest,
    parse_config_file,
    read_manifest,
    resolve,
    start_manifest,
    write_manifest,
)


class TestParseFile:
    def test_comments_and_whitespace(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text(
            "# full line comment\n"
            "\n"
            "seed = 7   # trailing comment\n"
            "  family=exponential\n"
            "biomarker = LDL\n")
        assert parse_config_file(path) == {
            "seed": "7", "family": "exponential", "biomarker": "LDL"}

    def test_missing_equals_reports_line(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("seed = 1\nbroken line\n")
        with pytest.raises(ConfigError) as err:
            parse_config_file(path)
        assert ":2:" in str(err.value)


class TestResolve:
    def test_defaults_pass_through(self):
        out = resolve("train")
        assert out["epochs"] == 200
        assert out["lam"] == 0.5
        assert out["family"] == "linear"

    def test_later_sources_win(self):
        out = resolve("train", {"epochs": "50"}, {"epochs": "10"})
        assert out["epochs"] == 10

    def test_typing_follows_defaults(self):
        out = resolve("train", {"epochs": "50", "learning_rate": "0.5",
                                "bootstrap": "false", "family": "cosine"})
        assert out["epochs"] == 50 and isinstance(out["epochs"], int)
        assert out["learning_rate"] == 0.5
        assert out["bootstrap"] is False
        assert out["family"] == "cosine"

    def test_bool_spellings(self):
        for text, value in (("true", True), ("1", True), ("yes", True),
                            ("false", False), ("0", False), ("no", False)):
            assert resolve("train", {"bootstrap": text})["bootstrap"] is value
        with pytest.raises(ConfigError):
            resolve("train", {"bootstrap": "maybe"})

    def test_already_typed_values_pass_untouched(self):
        out = resolve("train", {"epochs": 12, "learning_rate": 0.25})
        assert out["epochs"] == 12
        assert out["learning_rate"] == 0.25

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError) as err:
            resolve("train", {"epochz": "5"})
        assert "epochz" in str(err.value)

    def test_uncoercible_value_rejected(self):
        with pytest.raises(ConfigError):
            resolve("train", {"epochs": "many"})

    def test_required_fields(self):
        with pytest.raises(ConfigError):
            resolve("synth")
        out = resolve("synth", {"n_subjects": "40"})
        assert out["n_subjects"] == 40

    def test_every_default_has_help_text(self):
        for key, (_, help_text) in DEFAULTS.items():
            assert isinstance(help_text, str) and help_text, key


class TestDigests:
    def test_config_digest_ignores_insertion_order(self):
        a = config_digest({"x": 1, "y": 2.0})
        b = config_digest({"y": 2.0, "x": 1})
        assert a == b

    def test_config_digest_sees_values(self):
        assert config_digest({"x": 1}) != config_digest({"x": 2})

    def test_file_digest(self, tmp_path):
        p = tmp_path / "blob.bin"
        p.write_bytes(b"abc")
        q = tmp_path / "blob2.bin"
        q.write_bytes(b"abc")
        assert file_digest(p) == file_digest(q)
        q.write_bytes(b"abd")
        assert file_digest(p) != file_digest(q)


class TestManifest:
    def test_roundtrip(self, tmp_path):
        config = resolve("synth", {"n_subjects": "25", "seed": "9"})
        manifest = start_manifest("synth", config, inputs={"labs.csv": "ff" * 32})
        manifest.outputs = ["features.csv"]
        path = tmp_path / "manifest.json"
        write_manifest(manifest, path)
        back = read_manifest(path)
        assert back.command == "synth"
        assert back.config == config
        assert back.seeds == [9]
        assert back.input_digests == {"labs.csv": "ff" * 32}
        assert back.outputs == ["features.csv"]
        assert back.digest == manifest.digest
        assert back.finished_at >= back.started_at > 0

    def test_digest_is_config_only(self):
        config = resolve("train")
        a = start_manifest("train", config)
        b = start_manifest("train", config)
        b.outputs = ["something.csv"]
        assert a.digest == b.digest
        assert RunManifest(command="x", config=dict(config),
                           seeds=[0]).digest == a.digest
