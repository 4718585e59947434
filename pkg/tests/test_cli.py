import json
import subprocess
import sys

import pytest

from gazehead.cli import main
from gazehead.metrics import read_report_csv
from gazehead.model import HeadMotionCVAE
from gazehead.pipeline import load_manifest


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One small synth -> prepare -> train pipeline shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    records = root / "records.jsonl"
    data = root / "data"
    model = root / "model"
    assert run(
        "synth", "--out", records, "--sequences", 40, "--frames", 36,
        "--subjects", 8, "--seed", 5, "--log-level", "warning",
    ) == 0
    assert run(
        "prepare", "--input", records, "--out", data, "--source-fps", 5,
        "--model-fps", 5, "--window", 12, "--test-fraction", 0.25, "--seed", 5,
        "--log-level", "warning",
    ) == 0
    assert run(
        "train", "--manifest", data / "train_manifest.jsonl", "--out", model,
        "--steps", 40, "--batch-size", 16, "--latent-dim", 4,
        "--encoder-hidden", 16, "--decoder-hidden", 16, "--feature-dim", 8,
        "--learning-rate", "1e-3", "--seed", 5, "--log-level", "warning",
    ) == 0
    return root


class TestEndToEnd:
    def test_artifacts_exist(self, workspace):
        assert (workspace / "records.jsonl").exists()
        assert (workspace / "records.jsonl.run.json").exists()
        assert (workspace / "data" / "train_manifest.jsonl").exists()
        assert (workspace / "data" / "test_manifest.jsonl").exists()
        assert (workspace / "data" / "rejections.jsonl").exists()
        assert (workspace / "model" / "checkpoint.pt").exists()
        assert (workspace / "model" / "training_log.csv").exists()

    def test_manifest_split_disjoint(self, workspace):
        train = load_manifest(workspace / "data" / "train_manifest.jsonl")
        test = load_manifest(workspace / "data" / "test_manifest.jsonl")
        assert train.subject_ids and test.subject_ids
        assert not (train.subject_ids & test.subject_ids)
        assert test.normalization is not None

    def test_generate_evaluate_plot(self, workspace):
        gen_dir = workspace / "generated"
        gen_dir.mkdir(exist_ok=True)
        manifest = workspace / "data" / "test_manifest.jsonl"
        ckpt = workspace / "model" / "checkpoint.pt"
        assert run(
            "generate", "--checkpoint", ckpt, "--gaze", manifest, "--k", 3,
            "--method", "cvae", "--seed", 2, "--out", gen_dir / "cvae.jsonl",
            "--log-level", "warning",
        ) == 0
        assert run(
            "generate", "--gaze", manifest, "--method", "mirror",
            "--out", gen_dir / "mirror.jsonl", "--log-level", "warning",
        ) == 0
        assert run(
            "generate", "--gaze", manifest, "--method", "constant",
            "--out", gen_dir / "constant.jsonl", "--log-level", "warning",
        ) == 0
        report = workspace / "report.csv"
        assert run(
            "evaluate", "--manifest", manifest, "--generated", gen_dir,
            "--k", 3, "--out", report, "--log-level", "warning",
        ) == 0
        reports = {r.method: r for r in read_report_csv(report)}
        assert set(reports) == {"cvae", "mirror", "constant"}
        assert reports["cvae"].k == 3 and reports["mirror"].k == 1
        assert reports["mirror"].angular_error_avg == reports["mirror"].angular_error_best
        assert reports["constant"].apd == 0.0
        assert reports["cvae"].apd > 0.0
        plots = workspace / "plots"
        assert run(
            "plot", "--report", report, "--out", plots, "--manifest", manifest,
            "--generated", gen_dir / "cvae.jsonl", "--max-inputs", 2,
            "--log-level", "warning",
        ) == 0
        assert (plots / "metric_comparison.csv").exists()
        assert list(plots.glob("*.png"))
        assert list(plots.glob("trajectory_*.csv"))

    def test_no_temporal_method_roundtrip(self, workspace, tmp_path):
        model_dir = tmp_path / "abl"
        assert run(
            "train", "--manifest", workspace / "data" / "train_manifest.jsonl",
            "--out", model_dir, "--steps", 30, "--batch-size", 16,
            "--latent-dim", 4, "--encoder-hidden", 16, "--decoder-hidden", 16,
            "--feature-dim", 8, "--temporal-modeling", "false", "--seed", 1,
            "--log-level", "warning",
        ) == 0
        ckpt = model_dir / "checkpoint.pt"
        est = HeadMotionCVAE.load(ckpt)
        assert est.config_.temporal_modeling is False
        out = tmp_path / "gen.jsonl"
        assert run(
            "generate", "--checkpoint", ckpt, "--gaze",
            workspace / "data" / "test_manifest.jsonl", "--k", 2,
            "--method", "no-temporal", "--out", out, "--log-level", "warning",
        ) == 0
        # method/checkpoint mismatch is rejected
        assert run(
            "generate", "--checkpoint", ckpt, "--gaze",
            workspace / "data" / "test_manifest.jsonl", "--method", "cvae",
            "--out", tmp_path / "bad.jsonl", "--log-level", "warning",
        ) == 1

    def test_generated_records_mirror_input_format(self, workspace):
        line = (workspace / "generated" / "cvae.jsonl").read_text().splitlines()[0]
        obj = json.loads(line)
        assert {"video_id", "subject_id", "frame_index", "gaze", "head",
                "face_count", "glasses_flag", "scene_cut_flag", "sample_index"} <= set(obj)
        assert obj["head"] is not None and obj["gaze"] is None


class TestDeterminism:
    def test_synth_reproducible(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for out in (a, b):
            assert run("synth", "--out", out, "--sequences", 5, "--frames", 24,
                       "--seed", 9, "--log-level", "warning") == 0
        assert a.read_bytes() == b.read_bytes()

    def test_prepare_reproducible(self, tmp_path):
        records = tmp_path / "r.jsonl"
        run("synth", "--out", records, "--sequences", 8, "--frames", 24,
            "--subjects", 4, "--seed", 3, "--log-level", "warning")
        outs = []
        for name in ("p1", "p2"):
            out = tmp_path / name
            assert run("prepare", "--input", records, "--out", out,
                       "--source-fps", 5, "--model-fps", 5, "--test-fraction", 0.25,
                       "--seed", 3, "--log-level", "warning") == 0
            outs.append(out)
        for fname in ("train_manifest.jsonl", "test_manifest.jsonl", "rejections.jsonl"):
            assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()

    def test_generate_reproducible(self, workspace, tmp_path):
        manifest = workspace / "data" / "test_manifest.jsonl"
        ckpt = workspace / "model" / "checkpoint.pt"
        a, b = tmp_path / "g1.jsonl", tmp_path / "g2.jsonl"
        for out in (a, b):
            assert run("generate", "--checkpoint", ckpt, "--gaze", manifest,
                       "--k", 2, "--seed", 11, "--out", out,
                       "--log-level", "warning") == 0
        assert a.read_bytes() == b.read_bytes()


class TestConfigFile:
    def test_config_supplies_values(self, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text(
            "# pipeline settings\n"
            "synth.sequences = 4\n"
            "synth.frames = 24\n"
            "synth.out = {}\n".format(json.dumps(str(tmp_path / "out.jsonl")))
        )
        assert run("synth", "--config", config, "--seed", 1, "--log-level", "warning") == 0
        lines = (tmp_path / "out.jsonl").read_text().splitlines()
        assert len(lines) == 4 * 24

    def test_flag_overrides_config(self, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text("synth.sequences = 4\nsynth.frames = 24\n")
        out = tmp_path / "o.jsonl"
        assert run("synth", "--config", config, "--sequences", 2, "--out", out,
                   "--log-level", "warning") == 0
        assert len(out.read_text().splitlines()) == 2 * 24

    def test_unknown_key_rejected(self, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text("synth.bogus_flag = 3\n")
        assert run("synth", "--config", config, "--out", tmp_path / "x.jsonl",
                   "--log-level", "warning") == 1

    def test_other_subcommand_keys_ignored(self, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text("train.steps = 10\nsynth.sequences = 3\nsynth.frames = 24\n")
        out = tmp_path / "o.jsonl"
        assert run("synth", "--config", config, "--out", out, "--log-level", "warning") == 0
        assert len(out.read_text().splitlines()) == 3 * 24

    def test_repro_record_contains_resolved_config(self, tmp_path):
        out = tmp_path / "o.jsonl"
        assert run("synth", "--out", out, "--sequences", 2, "--frames", 24,
                   "--seed", 42, "--log-level", "warning") == 0
        record = json.loads((tmp_path / "o.jsonl.run.json").read_text())
        assert record["tool"] == "gazehead"
        assert record["seed"] == 42
        assert record["resolved_config"]["sequences"] == 2
        assert "version" in record and "checkpoint_format_version" in record


class TestErrorHandling:
    def test_usage_error_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_missing_required_is_validation_failure(self, capsys):
        assert main(["synth", "--log-level", "warning"]) == 1
        err = capsys.readouterr().err
        payload = json.loads(err.strip().splitlines()[-1])
        assert payload["error"] == "ConfigurationError"

    def test_bad_input_file_machine_readable(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{this is not json\n")
        assert main(["prepare", "--input", str(bad), "--out", str(tmp_path / "o"),
                     "--log-level", "warning"]) == 1
        payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert payload["error"] == "ParseError"
        assert "line 1" in payload["message"]

    def test_version_subprocess_and_clean_stdout(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "gazehead.cli", "--version"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "gazehead" in proc.stdout and "checkpoint format" in proc.stdout

    def test_data_subcommand_keeps_stdout_clean(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "gazehead.cli", "synth", "--out",
             str(tmp_path / "o.jsonl"), "--sequences", "2", "--frames", "24"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert proc.stdout == ""
