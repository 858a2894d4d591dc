import json

import numpy as np
import pytest

from cdisent import harness as harness_module
from cdisent.constant import THREADS_ENV_VAR
from cdisent.datagen import GenSpec, read_dataset
from cdisent.gaussmix import GaussMixError
from cdisent.harness import (
    REPORT_CSV,
    REPORT_JSON,
    SUMMARY_CSV,
    ConfigError,
    ExperimentConfig,
    ExperimentResult,
    ExperimentRunner,
    RunRecord,
    TrendCheck,
    aggregate,
    model_config,
    ordering,
    resolve_threads,
    run_experiment,
    run_ood,
    run_train,
    superset_gap,
)
from cdisent.logger import LogLevel
from cdisent.trainer import CHECKPOINT_NAME

PROBES = {"n_base": 50, "n_resample": 4}


def tiny_model(variant="cdvae", **overrides):
    base = {
        "variant": variant, "latent_dim": 2, "encoder_hidden": [8], "decoder_hidden": [8],
        "epochs": 1, "batch_size": 64, "dtype": "float64",
    }
    base.update(overrides)
    return base


def small_config(kind, tmp_path, **overrides):
    data = dict(
        kind=kind, out_dir=str(tmp_path / "out"), n_train=200, n_eval=120, seeds=[0],
        models=[tiny_model()], metrics=["recon", "ioss", "irs"], probes=dict(PROBES),
    )
    data.update(overrides)
    return ExperimentConfig.from_dict(data)


def run(config, threads=1):
    return run_experiment(config, threads, LogLevel.ERROR)


def record(seed, status="ok", variant="cdvae", setting="", **metrics):
    return RunRecord("h", "compare", variant, setting, seed, status, metrics)


class TestExperimentConfig:
    """Loading and validation of experiment configs."""

    def test_unknown_keys(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"kind": "train", "epochz": 3})

    def test_missing_kind(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"seeds": [0]})

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"kind": "fit"})

    def test_missing_file_names_the_path(self, tmp_path):
        path = tmp_path / "nope.json"
        with pytest.raises(ConfigError, match="nope.json"):
            ExperimentConfig.load(path)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{kind: train")
        with pytest.raises(ConfigError):
            ExperimentConfig.load(path)

    def test_relative_paths_follow_the_config_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"kind": "eval", "model_dir": "models/m", "gen": "spec.json"}))
        config = ExperimentConfig.load(path)
        assert config.model_dir == str(tmp_path / "models" / "m")
        assert config.gen == str(tmp_path / "spec.json")

    def test_version_mismatch(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"kind": "train", "cfg_version": 2})

    def test_invalid_severity(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"kind": "ood", "severities": [0.5, 1.5]})

    def test_hash_ignores_threads_and_output(self):
        a = ExperimentConfig.from_dict({"kind": "train", "threads": 1, "out_dir": "a"})
        b = ExperimentConfig.from_dict({"kind": "train", "threads": 4, "out_dir": "b"})
        c = ExperimentConfig.from_dict({"kind": "train", "seeds": [1]})
        assert a.hash == b.hash
        assert a.hash != c.hash

    def test_default_compare_models(self):
        variants = [m["variant"] for m in ExperimentConfig(kind="compare").models]
        assert variants == ["vae", "beta-vae", "cvae", "cdvae", "cdvae-ioss", "vae-ioss"]

    def test_generator_sources(self, tmp_path, tabular_spec):
        recipe = ExperimentConfig(kind="generate", gen="tabular", gen_options={"strength": 0.5}).resolve_gen()
        assert recipe.mode == tabular_spec.mode
        inline = ExperimentConfig(kind="generate", gen=tabular_spec.to_dict()).resolve_gen()
        assert inline == tabular_spec
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(tabular_spec.to_dict()))
        assert ExperimentConfig(kind="generate", gen=str(path)).resolve_gen() == tabular_spec

    def test_invalid_inline_generator(self, tabular_spec):
        data = tabular_spec.to_dict()
        data["mode"] = "bogus"
        with pytest.raises(ConfigError):
            ExperimentConfig(kind="generate", gen=data).resolve_gen()

    def test_negative_seeds(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(kind="train", seeds=[0, -1])

    def test_missing_generator_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig(kind="generate", gen=str(tmp_path / "missing.json")).resolve_gen()

    def test_invalid_probes(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(kind="eval", probes={"n_base": 0}).probe_counts()


class TestResolveThreads:
    def test_precedence(self, monkeypatch):
        monkeypatch.delenv(THREADS_ENV_VAR, raising=False)
        assert resolve_threads(None, None) == 1
        assert resolve_threads(None, 2) == 2
        assert resolve_threads(3, 2) == 3
        monkeypatch.setenv(THREADS_ENV_VAR, "5")
        assert resolve_threads(3, 2) == 5

    def test_invalid_environment(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV_VAR, "many")
        with pytest.raises(ConfigError):
            resolve_threads(None, None)
        monkeypatch.setenv(THREADS_ENV_VAR, "0")
        with pytest.raises(ConfigError):
            resolve_threads(None, None)

    def test_zero_threads_rejected(self, monkeypatch):
        monkeypatch.delenv(THREADS_ENV_VAR, raising=False)
        with pytest.raises(ConfigError):
            resolve_threads(0, 2)
        with pytest.raises(ConfigError):
            resolve_threads(None, 0)
        monkeypatch.setenv(THREADS_ENV_VAR, "2")
        with pytest.raises(ConfigError):
            resolve_threads(0, None)


class TestModelConfig:
    def test_labels_and_seed_are_filled_in(self):
        cfg = model_config({"variant": "cdvae", "latent_dim": 3}, seed=7, n_labels=4)
        assert (cfg.n_labels, cfg.seed, cfg.latent_dim) == (4, 7, 3)

    def test_classifier_defaults(self):
        cfg = model_config({"variant": "beta-vae"}, seed=0, n_labels=4, classifier=("shape", 3))
        assert (cfg.head, cfg.target_factor, cfg.n_classes) == ("classifier", "shape", 3)

    def test_invalid_overrides(self):
        with pytest.raises(ConfigError):
            model_config({"variant": "cdvae", "depth": 2}, seed=0, n_labels=1)
        with pytest.raises(ConfigError):
            model_config({"variant": "cdvae", "latent_dim": "wide"}, seed=0, n_labels=1)


class TestAggregation:
    def test_mean_and_sample_std(self):
        records = [record(0, irs=0.2), record(1, irs=0.4), record(2, irs=0.9), record(3, status="failed")]
        (row,) = aggregate(records)
        assert (row["n_ok"], row["n_failed"]) == (3, 1)
        assert row["irs_mean"] == pytest.approx(0.5)
        assert row["irs_std"] == pytest.approx(np.std([0.2, 0.4, 0.9], ddof=1))

    def test_single_seed_has_zero_std(self):
        (row,) = aggregate([record(0, d=0.3)])
        assert row["d_std"] == 0.0

    def test_groups_by_variant_and_setting(self):
        records = [record(0, variant="vae", ioss=0.1), record(0, variant="cdvae", ioss=0.05)]
        assert {row["variant"] for row in aggregate(records)} == {"vae", "cdvae"}

    def test_missing_values_are_skipped(self):
        (row,) = aggregate([record(0, irs=0.2, uc=None), record(1, irs=0.4, uc=0.6)])
        assert row["uc_mean"] == pytest.approx(0.6)


class TestTrends:
    def test_ordering_fraction(self):
        records = []
        for seed in range(5):
            records.append(record(seed, variant="cdvae", ioss=0.1))
            records.append(record(seed, variant="vae", ioss=0.05 if seed == 0 else 0.3))
        outcome = ordering("ioss", ("cdvae", ""), ("vae", ""), "ioss", smaller=True).evaluate(records)
        assert (outcome.held, outcome.total) == (4, 5)
        assert outcome.passed

    def test_below_fraction_fails(self):
        records = [record(0, variant="a", m=1.0), record(0, variant="b", m=2.0)]
        outcome = ordering("m", ("a", ""), ("b", ""), "m").evaluate(records)
        assert not outcome.passed

    def test_non_strict_accepts_ties(self):
        records = [record(0, variant="a", m=1.0), record(0, variant="b", m=1.0)]
        assert ordering("m", ("a", ""), ("b", ""), "m", strict=False).evaluate(records).passed

    def test_missing_values_are_not_evaluable(self):
        outcome = ordering("m", ("a", ""), ("b", ""), "m").evaluate([record(0, variant="a", m=1.0)])
        assert outcome.total == 0
        assert not outcome.passed

    def test_custom_check_is_soft(self):
        check = TrendCheck("always", lambda table: True, soft=True)
        outcome = check.evaluate([record(0, m=1.0)])
        assert outcome.passed and outcome.soft

    def test_superset_gap(self):
        records = [
            record(0, setting="full", acc_t=0.8), record(1, setting="full", acc_t=0.9),
            record(0, setting="superset", acc_t=0.82), record(1, setting="superset", acc_t=0.84),
        ]
        assert superset_gap(records) == pytest.approx(0.02)
        assert superset_gap(records[:2]) is None


class TestResultFiles:
    def test_csv_and_json(self, tmp_path):
        config = ExperimentConfig(kind="train", out_dir=str(tmp_path))
        records = [record(0, irs=0.5), record(1, status="failed")]
        result = ExperimentResult(config, records, aggregate(records), [])
        assert result.n_failed == 1

        lines = result.records_csv().splitlines()
        assert lines[0] == "config_hash,experiment,variant,setting,seed,status,irs"
        assert lines[1].endswith(",ok,0.5")
        assert lines[2].endswith(",failed,")

        assert result.write("csv") == [tmp_path / REPORT_CSV, tmp_path / SUMMARY_CSV]
        (path,) = result.write("json")
        assert path == tmp_path / REPORT_JSON
        data = json.loads(path.read_text())
        assert data["counts"] == {"total": 2, "failed": 1}
        assert data["records"][0]["metrics"] == {"irs": 0.5}

    def test_compare_writes_summary_and_detail(self, tmp_path):
        config = ExperimentConfig(kind="compare", out_dir=str(tmp_path))
        records = [record(0, irs=0.5), record(1, irs=0.7)]
        result = ExperimentResult(config, records, aggregate(records), [])
        expected = [tmp_path / REPORT_CSV, tmp_path / SUMMARY_CSV, tmp_path / REPORT_JSON]
        assert result.write("csv") == expected
        assert result.write("json") == expected
        assert len(json.loads((tmp_path / REPORT_JSON).read_text())["records"]) == 2


class TestRunner:
    """Small end-to-end runs of every experiment kind."""

    def test_generate(self, tmp_path):
        config = small_config("generate", tmp_path, seeds=[0, 1])
        result = run(config)
        assert [r.status for r in result.records] == ["ok", "ok"]
        path = tmp_path / "out" / "datasets" / f"{config.hash}-s1"
        assert result.records[1].artifacts["dataset"] == str(path)
        assert len(read_dataset(path)) == 200
        assert result.records[0].metrics == {"n": 200.0}

    def test_train_then_eval(self, tmp_path):
        trained = run(small_config("train", tmp_path))
        (train_record,) = trained.records
        assert train_record.ok, train_record.message
        assert np.isfinite(train_record.metrics["loss"])
        assert train_record.metrics["epochs"] == 1.0
        model_dir = train_record.artifacts["model"]
        assert (tmp_path / "out" / "runs" / trained.config.hash / "cdvae-s0" / CHECKPOINT_NAME).is_file()

        evaluated = run(small_config("eval", tmp_path, models=[], model_dir=model_dir))
        (eval_record,) = evaluated.records
        assert eval_record.ok, eval_record.message
        assert eval_record.metrics["recon"] is not None
        assert eval_record.metrics["ioss"] is not None
        assert eval_record.report["approx"] == ["uc", "cg"]

    def test_eval_needs_model_dir(self, tmp_path):
        with pytest.raises(ConfigError):
            run(small_config("eval", tmp_path, models=[]))

    def test_missing_model_dir(self, tmp_path):
        with pytest.raises(ConfigError):
            run(small_config("eval", tmp_path, models=[], model_dir=str(tmp_path / "none")))

    def test_compare(self, tmp_path):
        config = small_config("compare", tmp_path, models=[tiny_model("cdvae"), tiny_model("vae")])
        result = run(config)
        assert [r.variant for r in result.records] == ["cdvae", "vae"]
        for r in result.records:
            assert r.ok, r.message
            assert r.setting == ""
            assert r.metrics["lc"] is not None
            assert r.metrics["irs"] is not None
        assert len(result.summary) == 2
        assert [t.name for t in result.trends][:2] == ["ioss_cdvae_lt_vae", "irs_cdvae_ge_vae"]

    def test_compare_l2_assignment(self, tmp_path):
        config = small_config("compare", tmp_path, seeds=[0, 1, 2], models=[tiny_model("cdvae", pi_policy="l2")])
        result = run(config)
        assert [r.seed for r in result.records] == [0, 1, 2]
        for r in result.records:
            assert r.ok, r.message
            assert r.metrics["lc"] >= 0.0

    def test_mixture_errors_fail_the_seed_only(self, tmp_path, monkeypatch):
        def broken(model, ds):
            raise GaussMixError("weights must be a probability vector")

        monkeypatch.setattr(harness_module, "latent_mixture_lc", broken)
        config = small_config("compare", tmp_path, seeds=[0, 1])
        result = run(config)
        assert [r.status for r in result.records] == ["failed", "failed"]
        assert "probability vector" in result.records[0].message

    def test_compare_rejects_classifiers(self, tmp_path):
        config = small_config("compare", tmp_path, models=[tiny_model("classifier")])
        with pytest.raises(ConfigError):
            run(config)

    def test_ood(self, tmp_path):
        config = small_config("ood", tmp_path, severities=[0.5], models=[tiny_model("cdvae")])
        (r,) = run(config).records
        assert r.ok, r.message
        assert r.setting == "0.5"
        assert 0.0 <= r.metrics["acc_s"] <= 1.0 and 0.0 <= r.metrics["acc_t"] <= 1.0
        assert r.metrics["drop"] == pytest.approx(r.metrics["acc_s"] - r.metrics["acc_t"])

    def test_ablate(self, tmp_path):
        config = small_config("ablate-c", tmp_path, severities=[0.5], label_choices=["empty", "full", "superset"])
        result = run(config)
        assert [r.setting for r in result.records] == ["empty", "full", "superset"]
        for r in result.records:
            assert r.ok, r.message
            assert 0.0 <= r.metrics["acc_t"] <= 1.0
            assert "irs" in r.metrics
        assert result.extras["superset_full_gap"] is not None

    def test_reproducible_reports(self, tmp_path):
        first = run(small_config("train", tmp_path / "a", seeds=[0, 1]))
        second = run(small_config("train", tmp_path / "b", seeds=[0, 1]), threads=2)
        assert first.records_csv() == second.records_csv()

    def test_failed_jobs_are_recorded(self, tmp_path):
        config = small_config("train", tmp_path, models=[tiny_model(n_labels=2), tiny_model("vae")])
        result = run(config)
        assert [r.status for r in result.records] == ["failed", "ok"]
        assert "labels" in result.records[0].message
        assert result.n_failed == 1
        assert result.summary[0]["n_failed"] == 1

    def test_unknown_variant(self, tmp_path):
        with pytest.raises(ConfigError):
            run(small_config("train", tmp_path, models=[{"variant": "flow"}]))

    def test_kind_mismatch(self, tmp_path):
        with pytest.raises(ConfigError):
            run_ood(small_config("train", tmp_path))

    def test_entry_point_runs(self, tmp_path):
        result = run_train(small_config("train", tmp_path), log_level=LogLevel.ERROR)
        assert result.n_failed == 0

    def test_run_dir(self, tmp_path):
        config = small_config("train", tmp_path)
        assert ExperimentRunner(config).run_dir == tmp_path / "out" / "runs" / config.hash
