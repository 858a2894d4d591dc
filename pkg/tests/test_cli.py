import csv
import json

import pytest

from cdisent import cli as cli_module
from cdisent.cli import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, cli
from cdisent.datagen import tabular_recipe
from cdisent.verify import CheckOutcome, KLNonNegativityCheck, PropertyCheck, PropertyVerifier


def write_config(tmp_path, **overrides):
    data = {
        "kind": "train",
        "n_train": 150,
        "n_eval": 100,
        "seeds": [0],
        "models": [{
            "variant": "cdvae", "latent_dim": 2, "encoder_hidden": [6], "decoder_hidden": [6],
            "epochs": 1, "batch_size": 50, "dtype": "float64",
        }],
    }
    data.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return path


class FailingCheck(PropertyCheck):
    def __init__(self):
        super().__init__("failing", "never holds")

    def evaluate(self, seed):
        return CheckOutcome(self.name, False, "does not hold")


class TestExitCodes:
    def test_missing_config(self, tmp_path, capsys):
        path = tmp_path / "absent.json"
        assert cli(["train", "--config", str(path), "--log-level", "error"]) == EXIT_CONFIG
        assert f"cdisent: config error: Config file {path} does not exist" in capsys.readouterr().err

    def test_unknown_subcommand(self):
        assert cli(["fit"]) == EXIT_CONFIG

    def test_missing_subcommand(self):
        assert cli([]) == EXIT_CONFIG

    def test_kind_mismatch(self, tmp_path):
        path = write_config(tmp_path)
        assert cli(["ood", "--config", str(path), "--out", str(tmp_path / "out"), "--log-level", "error"]) == EXIT_CONFIG

    def test_invalid_generator_mode(self, tmp_path, capsys):
        gen = tabular_recipe().to_dict()
        gen["mode"] = "bogus"
        path = write_config(tmp_path, kind="generate", gen=gen)
        code = cli(["generate", "--config", str(path), "--out", str(tmp_path / "out"), "--log-level", "error"])
        assert code == EXIT_CONFIG
        assert "cdisent: config error" in capsys.readouterr().err

    def test_negative_seed(self, tmp_path):
        path = write_config(tmp_path)
        out = str(tmp_path / "out")
        code = cli(["train", "--config", str(path), "--seed", "-1", "--out", out, "--log-level", "error"])
        assert code == EXIT_CONFIG
        assert cli(["verify", "--seed", "-1", "--log-level", "error"]) == EXIT_CONFIG

    def test_zero_threads(self, tmp_path, monkeypatch):
        monkeypatch.delenv("CDISENT_THREADS", raising=False)
        path = write_config(tmp_path)
        out = str(tmp_path / "out")
        code = cli(["train", "--config", str(path), "--threads", "0", "--out", out, "--log-level", "error"])
        assert code == EXIT_CONFIG

    def test_failed_run(self, tmp_path):
        models = [{"variant": "cdvae", "n_labels": 2, "latent_dim": 2, "epochs": 1, "dtype": "float64"}]
        path = write_config(tmp_path, models=models)
        code = cli(["train", "--config", str(path), "--out", str(tmp_path / "out"), "--log-level", "error"])
        assert code == EXIT_FAILED


class TestReports:
    def test_csv_and_json_agree(self, tmp_path):
        path = write_config(tmp_path)
        common = ["--config", str(path), "--seed", "3", "--log-level", "error"]
        assert cli(["train", *common, "--out", str(tmp_path / "csv"), "--format", "csv"]) == EXIT_OK
        assert cli(["train", *common, "--out", str(tmp_path / "json"), "--format", "json"]) == EXIT_OK

        with open(tmp_path / "csv" / "report.csv") as handle:
            (row,) = list(csv.DictReader(handle))
        report = json.loads((tmp_path / "json" / "report.json").read_text())
        (record,) = report["records"]
        assert row["seed"] == "3" and record["seed"] == 3
        assert row["config_hash"] == record["config_hash"]
        assert float(row["loss"]) == record["metrics"]["loss"]
        assert (tmp_path / "csv" / "summary.csv").is_file()

    def test_threads_flag(self, tmp_path, monkeypatch):
        monkeypatch.delenv("CDISENT_THREADS", raising=False)
        path = write_config(tmp_path, seeds=[0, 1])
        code = cli(["train", "--config", str(path), "--out", str(tmp_path / "out"), "--threads", "2",
                    "--log-level", "error"])
        assert code == EXIT_OK


class TestVerify:
    def test_passing_suite(self, tmp_path, monkeypatch):
        monkeypatch.setattr(cli_module, "default_verifier", lambda: PropertyVerifier([KLNonNegativityCheck(n_draws=20)]))
        code = cli(["verify", "--out", str(tmp_path), "--format", "json", "--log-level", "error"])
        assert code == EXIT_OK
        (outcome,) = json.loads((tmp_path / "verify.json").read_text())
        assert outcome["name"] == "kl_nonnegative" and outcome["passed"]

    def test_failing_suite(self, tmp_path, monkeypatch):
        monkeypatch.setattr(cli_module, "default_verifier", lambda: PropertyVerifier([FailingCheck()]))
        assert cli(["verify", "--out", str(tmp_path), "--log-level", "error"]) == EXIT_FAILED
        assert (tmp_path / "verify.csv").is_file()

    @pytest.mark.slow
    def test_default_suite(self):
        assert cli(["verify", "--log-level", "error"]) == EXIT_OK
