import csv
import json
from pathlib import Path

import numpy as np
import pytest

from llp_forge.bagging import gen_blobs, write_csv
from llp_forge.cli import main


@pytest.fixture()
def data_files(tmp_path):
    train = tmp_path / "train.csv"
    test = tmp_path / "test.csv"
    write_csv(gen_blobs(100, 2, 2, 8.0, seed=1), train)
    write_csv(gen_blobs(60, 2, 2, 8.0, seed=2), test)
    return train, test


def run(*argv):
    return main([str(a) for a in argv])


class TestTrainCommand:
    def test_end_to_end(self, data_files, tmp_path, capsys):
        train_csv, _ = data_files
        out = tmp_path / "run"
        code = run(
            "train", "--data", train_csv, "--loss", "tvstar", "--alpha", "1",
            "--bag-size", "8", "--epochs", "5", "--lr", "0.05", "--seed", "7",
            "--out", out,
        )
        assert code == 0
        assert (out / "checkpoint.json").exists()
        assert (out / "history.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "ok"
        for path in manifest["outputs"]:
            assert Path(path).exists()
        with (out / "history.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 5
        assert {"epoch", "train_loss", "val_loss", "seconds"} == set(rows[0])
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert Path(payload["checkpoint"]).exists()

    def test_missing_file_exit_2(self, tmp_path, capsys):
        code = run("train", "--data", tmp_path / "nope.csv", "--out", tmp_path / "o")
        assert code == 2
        assert "nope.csv" in capsys.readouterr().err

    def test_bad_alpha_exit_1(self, data_files, tmp_path):
        train_csv, _ = data_files
        code = run("train", "--data", train_csv, "--alpha", "0", "--out", tmp_path / "o")
        assert code == 1

    def test_diverged_exit_3(self, data_files, tmp_path):
        train_csv, _ = data_files
        code = run(
            "train", "--data", train_csv, "--loss", "dllp", "--optimizer", "sgd",
            "--lr", "1e6", "--bag-size", "4", "--epochs", "3", "--out", tmp_path / "o",
        )
        assert code == 3

    def test_config_file_with_cli_override(self, data_files, tmp_path):
        train_csv, _ = data_files
        cfg = tmp_path / "run.cfg"
        cfg.write_text("epochs = 2\nbag_size = 4\nseed = 3\nlearning_rate = 0.05\n")
        out = tmp_path / "run"
        code = run(
            "train", "--data", train_csv, "--config", cfg, "--epochs", "3", "--out", out
        )
        assert code == 0
        saved = json.loads((out / "checkpoint.json").read_text())["train_config"]
        assert saved["epochs"] == 3  # command line wins
        assert saved["bag_size"] == 4  # file value survives
        assert saved["seed"] == 3

    def test_seeded_rerun_reproduces_outputs(self, data_files, tmp_path):
        train_csv, _ = data_files
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            assert run(
                "train", "--data", train_csv, "--bag-size", "8", "--epochs", "3",
                "--seed", "11", "--out", out,
            ) == 0
            outs.append(out)
        a, b = outs
        assert (a / "checkpoint.json").read_bytes() == (b / "checkpoint.json").read_bytes()
        # history matches on all deterministic columns (timings necessarily differ)
        strip = lambda p: [
            line.rsplit(",", 1)[0] for line in (p / "history.csv").read_text().splitlines()
        ]
        assert strip(a) == strip(b)


class TestEvalCommand:
    def _checkpoint(self, data_files, tmp_path):
        train_csv, _ = data_files
        out = tmp_path / "trainrun"
        assert run(
            "train", "--data", train_csv, "--bag-size", "8", "--epochs", "8",
            "--lr", "0.05", "--seed", "2", "--out", out,
        ) == 0
        return out / "checkpoint.json"

    def test_metrics_emitted(self, data_files, tmp_path, capsys):
        _, test_csv = data_files
        ckpt = self._checkpoint(data_files, tmp_path)
        out = tmp_path / "evalrun"
        assert run("eval", "--checkpoint", ckpt, "--test", test_csv, "--out", out) == 0
        doc = json.loads((out / "metrics.json").read_text())
        assert set(doc) == {"w_precision", "w_recall", "w_f1", "confusion"}
        assert doc["w_f1"] > 0.95
        lines = (out / "metrics.csv").read_text().strip().splitlines()
        assert lines[0] == "w_p,w_r,w_f1"

    def test_perfect_memorization_fixture(self, tmp_path, capsys):
        # a separable set evaluated with a converged model scores exactly 1
        data = tmp_path / "d.csv"
        write_csv(gen_blobs(50, 2, 2, 10.0, seed=5), data)
        out = tmp_path / "t"
        assert run(
            "train", "--data", data, "--bag-size", "1", "--epochs", "10",
            "--lr", "0.1", "--seed", "2", "--out", out,
        ) == 0
        assert run(
            "eval", "--checkpoint", out / "checkpoint.json", "--test", data,
            "--out", tmp_path / "e",
        ) == 0
        doc = json.loads((tmp_path / "e" / "metrics.json").read_text())
        assert doc["w_precision"] == doc["w_recall"] == doc["w_f1"] == 1.0

    def test_dimension_mismatch_exit_2(self, data_files, tmp_path):
        ckpt = self._checkpoint(data_files, tmp_path)
        wide = tmp_path / "wide.csv"
        write_csv(gen_blobs(20, 2, 5, 8.0, seed=3), wide)
        assert run("eval", "--checkpoint", ckpt, "--test", wide, "--out", tmp_path / "e2") == 2

    def test_missing_checkpoint_exit_2(self, data_files, tmp_path):
        _, test_csv = data_files
        assert run(
            "eval", "--checkpoint", tmp_path / "none.json", "--test", test_csv,
            "--out", tmp_path / "e3",
        ) == 2

    def test_two_checkpoints_give_comparison_rows(self, data_files, tmp_path):
        # side-by-side evaluation of two formulations on one test set
        train_csv, test_csv = data_files
        rows = []
        for kind in ("dllp", "combined"):
            out = tmp_path / f"t-{kind}"
            assert run(
                "train", "--data", train_csv, "--loss", kind, "--bag-size", "8",
                "--epochs", "5", "--lr", "0.05", "--seed", "1", "--out", out,
            ) == 0
            ev = tmp_path / f"e-{kind}"
            assert run(
                "eval", "--checkpoint", out / "checkpoint.json", "--test", test_csv,
                "--out", ev,
            ) == 0
            rows.append((ev / "metrics.csv").read_text().strip().splitlines()[1])
        assert len(rows) == 2
        for row in rows:
            assert len(row.split(",")) == 3


class TestSweepCommand:
    def test_row_count(self, data_files, tmp_path):
        train_csv, test_csv = data_files
        out = tmp_path / "sweep"
        code = run(
            "sweep", "--axis", "bag-size", "--values", "2,4,8", "--seeds", "2",
            "--data", train_csv, "--test", test_csv, "--epochs", "2", "--out", out,
        )
        assert code == 0
        lines = (out / "sweep.csv").read_text().strip().splitlines()
        assert lines[0] == "value,seed,w_p,w_r,w_f1"
        assert len(lines) == 1 + 3 * 2

    def test_lambda_axis_inert_for_linear(self, data_files, tmp_path):
        train_csv, test_csv = data_files
        out = tmp_path / "sweep"
        code = run(
            "sweep", "--axis", "lambda", "--values", "0,0.5,1", "--seeds", "1",
            "--arch", "linear", "--loss", "combined", "--data", train_csv,
            "--test", test_csv, "--epochs", "2", "--out", out,
        )
        assert code == 0
        lines = (out / "sweep.csv").read_text().strip().splitlines()[1:]
        metrics = {line.split(",", 2)[2] for line in lines}
        assert len(metrics) == 1

    def test_bad_axis_exit_config(self, data_files, tmp_path):
        train_csv, test_csv = data_files
        assert run(
            "sweep", "--axis", "alpha", "--values", "", "--data", train_csv,
            "--test", test_csv, "--out", tmp_path / "s",
        ) == 1


class TestCheckCommand:
    def test_default_run_covers_all_audits(self, capsys):
        # full audit sweep (sample counts reduced to keep the test quick)
        assert run(
            "check", "--pairs", "20000", "--bound-pairs", "100000", "--trials", "100",
        ) == 0
        doc = json.loads(capsys.readouterr().out)
        assert set(doc) == {
            "pinsker", "bounds", "symmetry", "monotonicity",
            "lipschitz", "gradcheck", "theorem",
        }
        assert all(sub["ok"] for sub in doc.values())
        assert doc["pinsker"]["violations_C2"] == 0

    def test_single_audit_filter(self, capsys):
        assert run("check", "--only", "pinsker", "--pairs", "20000") == 0
        doc = json.loads(capsys.readouterr().out)
        assert list(doc) == ["pinsker"]
        assert doc["pinsker"]["ok"] is True
        assert doc["pinsker"]["violations_C2"] == 0

    def test_gradcheck_filter(self, capsys):
        assert run("check", "--only", "gradcheck") == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["gradcheck"]["tv_star"] <= 1e-5

    def test_theorem_flag(self, capsys):
        assert run(
            "check", "--theorem", "--m", "500", "--delta", "0.05", "--trials", "100"
        ) == 0
        doc = json.loads(capsys.readouterr().out)
        assert set(doc) == {"theorem"}
        for key, sub in doc["theorem"].items():
            if key.startswith("alpha_"):
                assert sub["violation_fraction"] <= 0.05

    def test_unknown_audit_exit_1(self):
        assert run("check", "--only", "nonsense") == 1

    def test_report_written(self, tmp_path):
        out = tmp_path / "report"
        assert run("check", "--only", "monotonicity", "--pairs", "5000", "--out", out) == 0
        doc = json.loads((out / "check_report.json").read_text())
        assert doc["monotonicity"]["ok"] is True

    def test_theorem_trial_log_written(self, tmp_path):
        out = tmp_path / "report"
        assert run(
            "check", "--theorem", "--m", "200", "--trials", "20",
            "--alphas", "1", "--out", out,
        ) == 0
        lines = (out / "theorem_trials_alpha1.0.csv").read_text().strip().splitlines()
        assert lines[0] == "trial,min_slack,violated"
        assert len(lines) == 21

    def test_audit_failure_exit_4(self, monkeypatch, capsys):
        import llp_forge.cli as cli

        monkeypatch.setitem(
            cli.__dict__, "_audit_pinsker", lambda args: ({"violations_C2": 3}, False)
        )
        assert run("check", "--only", "pinsker") == 4
        assert "pinsker" in capsys.readouterr().err


class TestOutputRoot:
    def test_env_var_default(self, data_files, tmp_path, monkeypatch):
        train_csv, _ = data_files
        root = tmp_path / "outroot"
        monkeypatch.setenv("LLP_FORGE_OUT", str(root))
        assert run(
            "train", "--data", train_csv, "--bag-size", "8", "--epochs", "2",
            "--seed", "5",
        ) == 0
        assert (root / "train-seed5" / "checkpoint.json").exists()


def test_console_entry_point():
    import subprocess
    import sys

    proc = subprocess.run(
        [sys.executable, "-m", "llp_forge", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    for cmd in ("train", "eval", "sweep", "check"):
        assert cmd in proc.stdout
