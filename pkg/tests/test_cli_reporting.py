import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

import audit_alloc.suites as suites_module
from audit_alloc.allocation import Allocation
from audit_alloc.cli import main
from audit_alloc.errors import ConfigurationError
from audit_alloc.experiment import ExperimentConfig, run_experiment
from audit_alloc.fairness import DisparityReport
from audit_alloc.population import load_population
from audit_alloc.reporting import config_hash, read_manifest, read_metrics_csv, read_rates_csv
from audit_alloc.scoring import ScoreVector


def small_config(seed=3, **overrides):
    cfg = {
        "population": {"generate": {"n_records": 3000, "seed": 7}},
        "model": {"family": "logistic", "target": "classification", "label": "logit"},
        "budget": {"rate": 0.00644},
        "tau": 200.0,
        "seed": seed,
    }
    cfg.update(overrides)
    return cfg


def csv_hashes(out_dir):
    return {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in Path(out_dir).iterdir()
        if p.suffix == ".csv"
    }


class TestRunExperiment:
    def test_oracle_config_metrics(self, tmp_path):
        cfg = ExperimentConfig.from_dict(small_config(model={"family": "oracle", "label": "oracle-scores"}))
        result = run_experiment(cfg, tmp_path / "run")
        assert result.model_report.oracle_overlap == pytest.approx(1.0)
        assert result.model_report.no_change_rate == 0.0
        rows = read_metrics_csv(tmp_path / "run" / "metrics.csv")
        assert rows[0]["oracle_overlap"] == pytest.approx(1.0)
        assert rows[0]["no_change_rate"] == 0.0

    def test_byte_identical_reruns(self, tmp_path):
        cfg = ExperimentConfig.from_dict(small_config())
        run_experiment(cfg, tmp_path / "a")
        run_experiment(cfg, tmp_path / "b")
        assert csv_hashes(tmp_path / "a") == csv_hashes(tmp_path / "b")

    def test_outputs_reparse_through_readers(self, tmp_path):
        cfg = ExperimentConfig.from_dict(small_config())
        out = tmp_path / "run"
        run_experiment(cfg, out)
        assert len(read_metrics_csv(out / "metrics.csv")) == 2
        rates = read_rates_csv(out / "audit_rate_by_bucket.csv")
        assert [r["bucket"] for r in rates] == list(range(1, 11))
        Allocation.load_csv(out / "allocation.csv")
        Allocation.load_csv(out / "allocation__oracle.csv")
        ScoreVector.load_csv(out / "scores.csv")
        DisparityReport.load_csv(out / "disparity.csv")
        DisparityReport.load_csv(out / "disparity_predictions.csv")
        manifest = read_manifest(out / "manifest.json")
        assert manifest["config_hash"] == config_hash(cfg.to_dict())
        assert (out / "audit_rate_by_bucket.png").exists()
        assert (out / "disparity.png").exists()

    def test_manifest_hash_tracks_config_fields(self):
        a = ExperimentConfig.from_dict(small_config(seed=3))
        b = ExperimentConfig.from_dict(small_config(seed=4))
        c = ExperimentConfig.from_dict(small_config(seed=3))
        assert config_hash(a.to_dict()) != config_hash(b.to_dict())
        assert config_hash(a.to_dict()) == config_hash(c.to_dict())

    def test_dollar_budget_with_table_costs(self, tmp_path):
        cfg = ExperimentConfig.from_dict(small_config(budget={"dollars": 5000.0}))
        result = run_experiment(cfg, tmp_path / "roi")
        spent = float(np.sum(result.allocation.alpha * result.test.weight * result.test.cost))
        assert spent <= 5000.0 * (1 + 1e-9)
        assert result.model_report.oracle_overlap is None

    def test_monotone_requires_rate_budget(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict(small_config(
                budget={"dollars": 1000.0}, fairness={"method": "monotone_lp"}))

    def test_exactly_one_budget(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict(small_config(budget={"rate": 0.1, "dollars": 5.0}))

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict(small_config(bogus=1))

    def test_reduction_config_runs(self, tmp_path):
        cfg = ExperimentConfig.from_dict(small_config(
            population={"generate": {"n_records": 2000, "seed": 5}},
            fairness={"method": "reduction", "constraint": "demographic_parity", "max_iters": 5},
        ))
        result = run_experiment(cfg, tmp_path / "red")
        assert (tmp_path / "red" / "disparity.csv").exists()

    def test_postprocess_config_runs(self, tmp_path):
        cfg = ExperimentConfig.from_dict(small_config(
            population={"generate": {"n_records": 2000, "seed": 5}},
            fairness={"method": "postprocess", "constraint": "equal_tpr"},
        ))
        run_experiment(cfg, tmp_path / "post")

    def test_loaded_population_source(self, tmp_path):
        from audit_alloc.population import PopulationConfig, generate_population, save_population

        csv_path = tmp_path / "pop.csv"
        save_population(generate_population(PopulationConfig(n_records=2000, seed=9)), csv_path)
        cfg = ExperimentConfig.from_dict(small_config(population={"load": str(csv_path)}))
        result = run_experiment(cfg, tmp_path / "loaded")
        assert (tmp_path / "loaded" / "metrics.csv").exists()
        assert len(result.test) + len(result.test) > 0


class TestCli:
    def test_gen_then_load(self, tmp_path):
        cfg_path = tmp_path / "pop.json"
        cfg_path.write_text(json.dumps({"n_records": 500, "seed": 2}))
        out_csv = tmp_path / "pop.csv"
        assert main(["gen", "--config", str(cfg_path), "--out", str(out_csv)]) == 0
        pop = load_population(out_csv)
        assert len(pop) == 500

    def test_run_roundtrip(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(small_config()))
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg_path), "--out", str(out)]) == 0
        assert (out / "metrics.csv").exists()

    def test_bad_config_exits_1(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"population": {"load": "x.csv"}}))
        assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 1

    def test_missing_config_exits_1(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 1

    def test_unknown_suite_exits_1(self, tmp_path):
        assert main(["suite", "not-a-suite", "--out", str(tmp_path / "s")]) == 1

    def test_lemma_suite_passes(self, tmp_path, capsys):
        code = main(["suite", "lemma-properties", "--out", str(tmp_path / "s")])
        out = capsys.readouterr().out
        assert code == 0
        assert "PASS" in out
        rows = suites_module.read_suite_summary(tmp_path / "s" / "summary.csv")
        assert rows and all(passed for _, passed, _ in rows)

    def test_failing_suite_exits_2(self, tmp_path, monkeypatch):
        monkeypatch.setattr(
            suites_module, "_lemma_properties",
            lambda out, seed: [("forced failure", False, "test hook")],
        )
        assert main(["suite", "lemma-properties", "--out", str(tmp_path / "s")]) == 2

    def test_threshold_sweep_suite(self, tmp_path):
        code = main(["suite", "threshold-sweep", "--out", str(tmp_path / "s")])
        assert code == 0
        text = (tmp_path / "s" / "threshold_sweep.csv").read_text()
        assert text.startswith("tau,no_change_rate")
