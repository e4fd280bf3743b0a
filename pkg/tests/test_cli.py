"""Command-line interface, driven through main() so exit codes and
output land exactly as a shell user would see them."""

import os

import numpy as np
import pytest

from eegfpn import cli, gradcheck, signals
from eegfpn.ops import GradCheckReport

TINY_CONFIG = """
ch = 4
t = 32
e1 = 16
e2 = 8
z = 4
nsdru_hidden_channels = 4
k = 2
h = 4
batch_size = 8
max_epochs = 2
seed = 0
"""


@pytest.fixture
def dataset(tmp_path):
    out = tmp_path / "data"
    code = cli.main(["synth", "--out", str(out), "--n", "6",
                     "--ch", "4", "--t", "32", "--fs", "128", "--seed", "0"])
    assert code == 0
    return str(out / "manifest.txt")


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CONFIG, encoding="utf-8")
    return str(path)


class TestSynth:
    def test_writes_balanced_files_and_manifest(self, tmp_path, capsys):
        out = tmp_path / "d"
        assert cli.main(["synth", "--out", str(out), "--n", "3",
                         "--ch", "4", "--t", "32", "--fs", "128"]) == 0
        files = sorted(os.listdir(out))
        assert files.count("manifest.txt") == 1
        assert len([f for f in files if f.endswith(".eeg")]) == 6
        assert capsys.readouterr().out.strip() == str(out / "manifest.txt")
        epochs = signals.load_dataset(str(out / "manifest.txt"))
        assert sum(ep.label for ep in epochs) == 3

    def test_missing_required_flag_exits_1(self, capsys):
        assert cli.main(["synth", "--out", "/tmp/x"]) == 1
        assert "required" in capsys.readouterr().err


class TestFilter:
    def test_filter_writes_new_dataset(self, tmp_path, dataset, capsys):
        out = tmp_path / "filtered"
        assert cli.main(["filter", "--data", dataset, "--out", str(out)]) == 0
        filtered = signals.load_dataset(str(out / "manifest.txt"))
        original = signals.load_dataset(dataset)
        assert len(filtered) == len(original)
        assert filtered[0].samples.shape == original[0].samples.shape
        # The originals are untouched.
        assert not np.array_equal(filtered[0].samples, original[0].samples)

    def test_missing_manifest_exits_2(self, tmp_path, capsys):
        code = cli.main(["filter", "--data", str(tmp_path / "no.txt"),
                         "--out", str(tmp_path / "o")])
        assert code == 2
        assert "error:" in capsys.readouterr().err


class TestTrainEval:
    def test_train_writes_run_dir(self, tmp_path, dataset, config_file, capsys):
        run = tmp_path / "run"
        assert cli.main(["train", "--data", dataset, "--out", str(run),
                         "--config", config_file]) == 0
        for name in (cli.RUN_CONFIG_NAME, cli.RUN_HISTORY_NAME,
                     cli.RUN_CHECKPOINT_NAME, cli.RUN_COST_NAME):
            assert (run / name).exists(), name
        assert capsys.readouterr().out.startswith("best_epoch=")
        # The echoed config records the grid actually trained on.
        echoed = (run / cli.RUN_CONFIG_NAME).read_text()
        assert "ch = 4" in echoed and "t = 32" in echoed
        history = (run / cli.RUN_HISTORY_NAME).read_text().splitlines()
        assert history[0] == "epoch,train_loss,val_loss,val_accuracy"
        assert len(history) == 3

    def test_eval_roundtrip_stdout(self, tmp_path, dataset, config_file, capsys):
        run = tmp_path / "run"
        cli.main(["train", "--data", dataset, "--out", str(run),
                  "--config", config_file])
        capsys.readouterr()
        code = cli.main(["eval", "--ckpt", str(run / cli.RUN_CHECKPOINT_NAME),
                         "--data", dataset, "--config", config_file])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "subject_id,accuracy,precision,recall,f1"
        assert lines[1].startswith("synth,")

    def test_eval_to_file(self, tmp_path, dataset, config_file):
        run = tmp_path / "run"
        cli.main(["train", "--data", dataset, "--out", str(run),
                  "--config", config_file])
        out = tmp_path / "metrics.csv"
        code = cli.main(["eval", "--ckpt", str(run / cli.RUN_CHECKPOINT_NAME),
                         "--data", dataset, "--config", config_file,
                         "--out", str(out)])
        assert code == 0 and out.exists()

    def test_train_rerun_bitwise_identical(self, tmp_path, dataset, config_file):
        runs = []
        for name in ("a", "b"):
            run = tmp_path / name
            cli.main(["train", "--data", dataset, "--out", str(run),
                      "--config", config_file])
            runs.append(run)
        ck = [(r / cli.RUN_CHECKPOINT_NAME).read_bytes() for r in runs]
        assert ck[0] == ck[1]
        assert ((runs[0] / cli.RUN_HISTORY_NAME).read_text()
                == (runs[1] / cli.RUN_HISTORY_NAME).read_text())

    def test_bad_config_exits_2(self, tmp_path, dataset, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("k = banana\n")
        code = cli.main(["train", "--data", dataset, "--out",
                         str(tmp_path / "r"), "--config", str(bad)])
        assert code == 2


class TestGradcheck:
    def test_toy_suite_passes(self, capsys):
        assert cli.main(["gradcheck", "--toy"]) == 0
        out = capsys.readouterr().out
        assert "max_relative_error" in out
        assert "full_pipeline" in out

    def test_failure_exits_3(self, monkeypatch, capsys):
        def fake_suite(seed):
            return {"stage": GradCheckReport(max_relative_error=1.0,
                                             worst_parameter_index=0,
                                             epsilon_used=1e-5)}
        monkeypatch.setattr(cli.gradcheck, "run_suite", fake_suite)
        assert cli.main(["gradcheck", "--toy"]) == 3
        assert "failed" in capsys.readouterr().err


class TestCost:
    def test_report_to_stdout(self, capsys):
        assert cli.main(["cost", "--ch", "8", "--t", "16"]) == 0
        out = capsys.readouterr().out
        assert "trainable_params:" in out
        assert "flop_convention:" in out

    def test_invalid_override_exits_2(self, capsys):
        assert cli.main(["cost", "--ch", "1"]) == 2


class TestExport:
    def test_raw(self, tmp_path, dataset, config_file, capsys):
        out = tmp_path / "raw.csv"
        assert cli.main(["export-embeddings", "--data", dataset, "--stage", "raw",
                         "--out", str(out), "--config", config_file]) == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 12 and len(lines[0].split(",")) == 4 * 32 + 1

    def test_latent_requires_checkpoint(self, dataset, tmp_path, capsys):
        code = cli.main(["export-embeddings", "--data", dataset, "--stage",
                         "latent", "--out", str(tmp_path / "z.csv")])
        assert code == 2
        assert "ckpt" in capsys.readouterr().err

    def test_latent_from_checkpoint(self, tmp_path, dataset, config_file):
        run = tmp_path / "run"
        cli.main(["train", "--data", dataset, "--out", str(run),
                  "--config", config_file])
        out = tmp_path / "latent.csv"
        code = cli.main(["export-embeddings", "--data", dataset, "--stage",
                         "latent", "--out", str(out),
                         "--ckpt", str(run / cli.RUN_CHECKPOINT_NAME),
                         "--config", config_file])
        assert code == 0
        assert all(len(line.split(",")) == 5
                   for line in out.read_text().strip().splitlines())


class TestUsage:
    def test_no_command_exits_1(self, capsys):
        assert cli.main([]) == 1

    def test_unknown_command_exits_1(self, capsys):
        assert cli.main(["frobnicate"]) == 1

    def test_unknown_flag_exits_1(self, capsys):
        assert cli.main(["cost", "--bogus"]) == 1
