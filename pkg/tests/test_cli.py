"""End-to-end tests for the command line interface.

Every test drives ``ppgdecay.cli.main`` in-process with an argv list and
checks exit codes, artifacts on disk, and the printed progress lines.
Cohort sizes and epoch counts are kept tiny so the whole module runs in
seconds.
"""

import json
import os

import numpy as np
import pytest

from ppgdecay import cli, features, model
from ppgdecay.cli import main
from ppgdecay.config import read_manifest
from ppgdecay.decay import DecayFamily


def run(capsys, argv):
    """Invoke main() and return (exit_code, stdout, stderr)."""
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def features_csv(tmp_path_factory):
    """A small synthetic feature table shared by the training-side tests."""
    out = tmp_path_factory.mktemp("synth_features")
    code = main(["synth", "--out-dir", str(out),
                 "--set", "n_subjects=12", "--set", "seed=3"])
    assert code == 0
    return str(out / "features.csv")


@pytest.fixture(scope="module")
def waveform_dir(tmp_path_factory):
    """A small set of raw waveform streams plus a matching lab file."""
    out = tmp_path_factory.mktemp("synth_waves")
    code = main(["synth", "--out-dir", str(out),
                 "--set", "n_subjects=12", "--set", "kind=waveforms",
                 "--set", "n_streams=6", "--set", "duration_s=40"])
    assert code == 0
    return out


class TestSynthCommand:

    def test_writes_features_manifest_and_summary_line(self, capsys, tmp_path):
        code, out, _ = run(capsys, ["synth", "--out-dir", str(tmp_path),
                                    "--set", "n_subjects=12"])
        assert code == 0
        table = features.read_features_csv(str(tmp_path / "features.csv"))
        assert out.startswith(f"[synth] wrote {len(table)} segments across 12 subjects")
        manifest = read_manifest(str(tmp_path / "manifest.json"))
        assert manifest.command == "synth"
        assert manifest.config["n_subjects"] == 12
        assert manifest.outputs == [str(tmp_path / "features.csv")]
        assert manifest.finished_at is not None

    def test_manifest_replay_reproduces_bytes(self, capsys, tmp_path):
        """A run restarted from its own manifest writes identical artifacts."""
        first = tmp_path / "a"
        second = tmp_path / "b"
        code, _, _ = run(capsys, ["synth", "--out-dir", str(first),
                                  "--set", "n_subjects=12", "--set", "seed=17"])
        assert code == 0
        code, _, _ = run(capsys, ["synth", "--out-dir", str(second),
                                  "--from-manifest", str(first / "manifest.json")])
        assert code == 0
        with open(first / "features.csv", "rb") as fh:
            original = fh.read()
        with open(second / "features.csv", "rb") as fh:
            replayed = fh.read()
        assert replayed == original

    def test_missing_required_field_is_a_config_error(self, capsys, tmp_path):
        code, _, err = run(capsys, ["synth", "--out-dir", str(tmp_path)])
        assert code == 2
        assert "n_subjects" in err

    def test_unknown_kind_is_a_config_error(self, capsys, tmp_path):
        code, _, err = run(capsys, ["synth", "--out-dir", str(tmp_path),
                                    "--set", "n_subjects=12",
                                    "--set", "kind=spectra"])
        assert code == 2
        assert "kind" in err

    def test_waveform_kind_writes_streams_and_labs(self, capsys, waveform_dir):
        """The waveform branch emits a raw stream CSV and a labs CSV."""
        with open(waveform_dir / "labs.csv") as fh:
            header = fh.readline().strip()
            rows = [line.split(",") for line in fh if line.strip()]
        assert header == "subject_id,biomarker,value,drawn_at_unix"
        assert len(rows) == 6
        assert [r[0] for r in rows] == [f"W{i:03d}" for i in range(6)]
        streams_size = os.path.getsize(waveform_dir / "raw_streams.csv")
        assert streams_size > 0


class TestPipelineCommands:

    def test_preprocess_then_featurize(self, capsys, waveform_dir, tmp_path):
        """Raw streams survive the gate, get labels, and featurize cleanly."""
        pre = tmp_path / "pre"
        code, out, _ = run(capsys, [
            "preprocess", "--out-dir", str(pre),
            "--set", "n_subjects=12",
            "--raw", str(waveform_dir / "raw_streams.csv"),
            "--labs", str(waveform_dir / "labs.csv")])
        assert code == 0
        assert "[preprocess] streams=6 segments=24" in out
        assert "[preprocess] stage=sqi input=24" in out
        assert "stage=filter" in out
        assert "stage=label" in out
        assert (pre / "processed_segments.jsonl").exists()
        assert (pre / "labeled_segments.jsonl").exists()

        feat = tmp_path / "feat"
        code, out, _ = run(capsys, [
            "featurize", "--out-dir", str(feat),
            "--segments", str(pre / "processed_segments.jsonl"),
            "--labeled", str(pre / "labeled_segments.jsonl")])
        assert code == 0
        assert "[featurize] input=" in out
        table = features.read_features_csv(str(feat / "features.csv"))
        assert table.X.shape[1] == 34
        assert len(table) > 0
        assert set(np.unique(table.labels)) <= {0, 1}

    def test_preprocess_with_unmatched_labs_exits_4(self, capsys, waveform_dir,
                                                    tmp_path):
        """Labs for unknown subjects leave nothing labeled: empty result."""
        labs = tmp_path / "other_labs.csv"
        with open(labs, "w") as fh:
            fh.write("subject_id,biomarker,value,drawn_at_unix\n")
            for i in range(4):
                fh.write(f"X{i:03d},Potassium,{3.5 + 0.4 * i},1.0e9\n")
        code, _, err = run(capsys, [
            "preprocess", "--out-dir", str(tmp_path / "pre"),
            "--raw", str(waveform_dir / "raw_streams.csv"),
            "--labs", str(labs)])
        assert code == 4
        assert "empty result" in err
        assert "dropped by labeling" in err

    def test_preprocess_missing_input_exits_3(self, capsys, tmp_path):
        code, _, err = run(capsys, [
            "preprocess", "--out-dir", str(tmp_path),
            "--raw", str(tmp_path / "nope.csv"),
            "--labs", str(tmp_path / "labs.csv")])
        assert code == 3
        assert "i/o error" in err


class TestTrainCommand:

    def test_artifacts_and_summary(self, capsys, features_csv, tmp_path):
        code, out, _ = run(capsys, [
            "train", "--out-dir", str(tmp_path), "--features", features_csv,
            "--set", "epochs=3"])
        assert code == 0
        assert "[train] mode=full family=linear epochs_run=3" in out
        assert "alpha_hat=" in out

        result = model.load_checkpoint(str(tmp_path / "checkpoint.json"))
        assert result.config.mode == "full"
        assert result.params.w1.shape == (34, 32)

        with open(tmp_path / "loss_trace.csv") as fh:
            lines = fh.read().splitlines()
        assert lines[0] == "epoch,weighted_bce,mean_weight,total,alpha_hat"
        assert len(lines) == 1 + 3
        first = lines[1].split(",")
        assert first[0] == "0"
        assert np.isfinite(float(first[3]))

    def test_checkpoint_scores_new_segments(self, capsys, features_csv, tmp_path):
        """The saved model maps a feature matrix to one logit per row."""
        code, _, _ = run(capsys, [
            "train", "--out-dir", str(tmp_path), "--features", features_csv,
            "--set", "epochs=2"])
        assert code == 0
        result = model.load_checkpoint(str(tmp_path / "checkpoint.json"))
        table = features.read_features_csv(features_csv)
        logits = model.predict_logits(result, table.X[:7])
        assert logits.shape == (7,)
        assert np.all(np.isfinite(logits))

    def test_lambda_is_guarded(self, capsys, features_csv, tmp_path):
        code, _, err = run(capsys, [
            "train", "--out-dir", str(tmp_path), "--features", features_csv,
            "--set", "epochs=2", "--set", "lam=0.3"])
        assert code == 2
        assert "lam" in err

        code, _, _ = run(capsys, [
            "train", "--out-dir", str(tmp_path), "--features", features_csv,
            "--set", "epochs=2", "--set", "lam=0.3", "--unsafe-tune-lambda"])
        assert code == 0


class TestEvalCommand:

    def test_ours_writes_metrics_and_weight_curves(self, capsys, features_csv,
                                                   tmp_path):
        code, out, _ = run(capsys, [
            "eval", "--out-dir", str(tmp_path), "--features", features_csv,
            "--set", "epochs=2"])
        assert code == 0
        assert out.startswith("[eval] method=ours mean_auroc=")
        with open(tmp_path / "metrics.csv") as fh:
            lines = fh.read().splitlines()
        assert lines[0] == "biomarker,method,family,fold,auroc,auprc,alpha_hat"
        folds = [line.split(",")[3] for line in lines[1:]]
        assert folds == ["0", "1", "2", "3", "4", "mean"]
        with open(tmp_path / "weight_curves.csv") as fh:
            assert fh.readline().strip() == "method,family,fold,delta_t_days,weight"

    def test_rf_skips_weight_curves(self, capsys, features_csv, tmp_path):
        code, out, _ = run(capsys, [
            "eval", "--out-dir", str(tmp_path), "--features", features_csv,
            "--set", "method=rf", "--set", "n_trees=10", "--set", "max_depth=4"])
        assert code == 0
        assert "[eval] method=rf" in out
        assert (tmp_path / "metrics.csv").exists()
        assert not (tmp_path / "weight_curves.csv").exists()

    def test_unknown_family_is_a_config_error(self, capsys, features_csv, tmp_path):
        code, _, err = run(capsys, [
            "eval", "--out-dir", str(tmp_path), "--features", features_csv,
            "--set", "family=banana"])
        assert code == 2
        assert "banana" in err
        assert "linear" in err


class TestSweepCommands:

    def test_compare_decays_covers_every_family(self, capsys, features_csv,
                                                tmp_path):
        code, out, _ = run(capsys, [
            "compare-decays", "--out-dir", str(tmp_path),
            "--features", features_csv, "--set", "epochs=2", "--jobs", "2"])
        assert code == 0
        with open(tmp_path / "decay_comparison.csv") as fh:
            lines = fh.read().splitlines()
        assert lines[0] == "family,auroc,auprc"
        assert [line.split(",")[0] for line in lines[1:]] == \
            [fam.value for fam in DecayFamily]
        for fam in DecayFamily:
            assert f"[compare-decays] {fam.value}" in out
        assert (tmp_path / "metrics.csv").exists()

    def test_ablate_reports_named_variants(self, capsys, features_csv, tmp_path):
        code, out, _ = run(capsys, [
            "ablate", "--out-dir", str(tmp_path),
            "--features", features_csv, "--set", "epochs=2"])
        assert code == 0
        with open(tmp_path / "ablation.csv") as fh:
            lines = fh.read().splitlines()
        assert lines[0] == "method,auroc,auprc"
        assert [line.split(",")[0] for line in lines[1:]] == \
            ["full", "no_learnable_alpha", "no_time_aware_loss"]
        assert "[ablate] full" in out
        assert "[ablate] no_learnable_alpha" in out
        assert "[ablate] no_time_aware_loss" in out


class TestReportCommand:

    def test_renders_aligned_table(self, capsys, tmp_path):
        path = tmp_path / "ablation.csv"
        with open(path, "w") as fh:
            fh.write("method,auroc,auprc\nfull,0.91,0.88\nno_time_aware_loss,0.7,0.6\n")
        code, out, _ = run(capsys, ["report", str(path)])
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "ablation.csv"
        assert lines[1] == "-" * len("ablation.csv")
        assert lines[2] == "method              auroc  auprc"
        assert lines[3] == "full                0.91   0.88"
        assert lines[4] == "no_time_aware_loss  0.7    0.6"

    def test_out_flag_writes_rendered_file_and_manifest(self, capsys, tmp_path):
        path = tmp_path / "m.csv"
        with open(path, "w") as fh:
            fh.write("a,b\n1,2\n")
        rendered = tmp_path / "tables.txt"
        code, out, _ = run(capsys, ["report", str(path), "--out", str(rendered)])
        assert code == 0
        with open(rendered) as fh:
            assert fh.read() == out
        manifest = read_manifest(str(rendered) + ".manifest.json")
        assert manifest.command == "report"
        assert str(path) in manifest.input_digests

    def test_empty_inputs_exit_4(self, capsys, tmp_path):
        path = tmp_path / "empty.csv"
        path.touch()
        code, _, err = run(capsys, ["report", str(path)])
        assert code == 4
        assert "empty result" in err


class TestErrorMapping:

    def test_unknown_config_key_exits_2(self, capsys, tmp_path):
        code, _, err = run(capsys, ["synth", "--out-dir", str(tmp_path),
                                    "--set", "n_subjects=12",
                                    "--set", "epochz=3"])
        assert code == 2
        assert "epochz" in err

    def test_malformed_set_flag_exits_2(self, capsys, tmp_path):
        code, _, err = run(capsys, ["synth", "--out-dir", str(tmp_path),
                                    "--set", "n_subjects"])
        assert code == 2
        assert "config error" in err

    def test_uncoercible_value_exits_2(self, capsys, tmp_path):
        code, _, err = run(capsys, ["synth", "--out-dir", str(tmp_path),
                                    "--set", "n_subjects=many"])
        assert code == 2
        assert "many" in err

    def test_numeric_failure_exits_5(self, capsys, monkeypatch, tmp_path):
        """NumericError from a command maps to the dedicated exit code."""
        def explode(args):
            raise cli.NumericError("loss diverged")
        monkeypatch.setattr(cli, "cmd_train", explode)
        code, _, err = run(capsys, ["train", "--out-dir", str(tmp_path),
                                    "--features", "unused.csv"])
        assert code == 5
        assert "numeric failure: loss diverged" in err

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--version"])
        assert info.value.code == 0
