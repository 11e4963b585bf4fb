import json

import numpy as np
import pytest

from latentgoals.cli import main as cli_main
from latentgoals.errors import ConfigError
from latentgoals.harness import (ExperimentConfig, MetricSeries,
                                 run_arm_experiment, run_arm_trial,
                                 run_recommender_experiment)


def tiny_arm_config(**overrides):
    base = dict(experiment="arm", seed=3, trials=1, samples=2000,
                epoch_size=500, consolidation_buffer=1000,
                consolidation_passes=2)
    base.update(overrides)
    return ExperimentConfig(**base)


class TestConfig:
    def test_round_trip_file(self, tmp_path):
        cfg = tiny_arm_config(gb_noise=0.2, metrics_noiseless=True)
        path = tmp_path / "exp.cfg"
        cfg.to_file(path)
        loaded = ExperimentConfig.from_file(path)
        assert loaded == cfg

    def test_unknown_key_rejected_with_line(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("seed = 4\nbogus_knob = 1\n", encoding="utf-8")
        with pytest.raises(ConfigError, match=":2:"):
            ExperimentConfig.from_file(path)

    def test_bad_value_rejected(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("trials = many\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(path)

    def test_validation(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(experiment="maze")
        with pytest.raises(ConfigError):
            ExperimentConfig(decay=1.5)

    def test_comments_and_blanks_ignored(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("# a comment\n\nseed = 9\n", encoding="utf-8")
        assert ExperimentConfig.from_file(path).seed == 9


class TestMetricSeries:
    def test_csv_round_trip(self, tmp_path):
        rows = [(1, 0.5, 0.6, 0.7, 0.8, 0.1, 0.2, 0.85, 0.05),
                (2, 0.4, 0.5, 0.6, 0.7, 0.3, 0.4, 0.9, 0.04)]
        series = MetricSeries(rows=rows)
        path = tmp_path / "trial.csv"
        series.write_csv(path)
        loaded = MetricSeries.read_csv(path)
        assert loaded.rows == rows
        assert loaded.column("hand_contact_rate").tolist() == [0.1, 0.3]


class TestArmExperiment:
    def test_zero_samples_empty_series(self):
        series = run_arm_trial(tiny_arm_config(samples=0), trial_seed=1)
        assert series.rows == []

    def test_deterministic_csv_bytes(self, tmp_path):
        cfg = tiny_arm_config()
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            run_arm_experiment(cfg, out_dir=out)
            outs.append((out / "trial_000.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_manifest_written(self, tmp_path):
        cfg = tiny_arm_config(samples=500, epoch_size=500)
        run_arm_experiment(cfg, out_dir=tmp_path)
        doc = json.loads((tmp_path / "manifest.json").read_text())
        assert doc["package"] == "latentgoals"
        assert doc["config"]["samples"] == 500
        assert len(doc["trial_seeds"]) == 1

    def test_metric_rows_sane(self):
        series = run_arm_trial(tiny_arm_config(samples=1000, epoch_size=500),
                               trial_seed=7)
        assert len(series.rows) == 2
        for row in series.rows:
            assert 0.0 <= row[5] <= 1.0  # hand contact rate
            assert 0.0 <= row[6] <= 1.0  # any contact rate
            assert row[5] <= row[6]
            assert row[1] >= 0.0 and row[3] >= 0.0


def tiny_rec_config(**overrides):
    base = dict(experiment="recommender", seed=1, trials=2,
                rec_articles=10, rec_context_dims=16, rec_pool_size=4,
                rec_events=6000, rec_informative_bits=4,
                rec_target_ctr=0.15, rec_methods="LGA,BLR-SVD",
                rec_components="0,1,2", rec_epochs_main=40)
    base.update(overrides)
    return ExperimentConfig(**base)


class TestRecommenderExperiment:
    def test_rows_and_csv_schema(self, tmp_path):
        cfg = tiny_rec_config()
        rows = run_recommender_experiment(cfg, out_dir=tmp_path)
        methods = {r[0] for r in rows}
        assert methods == {"LGA", "BLR-SVD", "random"}
        lga_ns = sorted(n for m, n, _, _ in rows if m == "LGA")
        assert lga_ns == [0, 1, 2, 0, 1, 2]
        text = (tmp_path / "recommender.csv").read_text().splitlines()
        assert text[0] == "method,n,nctr,seed"
        assert len(text) == 1 + len(rows)

    def test_deterministic(self, tmp_path):
        cfg = tiny_rec_config(trials=1)
        a = run_recommender_experiment(cfg)
        b = run_recommender_experiment(cfg)
        assert a == b


class TestCli:
    def run(self, *argv):
        return cli_main(list(argv))

    def test_rec_synth_and_eval_round_trip(self, tmp_path):
        cfg = tiny_rec_config(trials=1)
        cfg_path = tmp_path / "exp.cfg"
        cfg.to_file(cfg_path)
        out = tmp_path / "synth"
        assert self.run("rec-synth", "--config", str(cfg_path),
                        "--out", str(out)) == 0
        assert (out / "events.tsv").exists()
        out2 = tmp_path / "eval"
        assert self.run("rec-eval", "--config", str(cfg_path),
                        "--log", str(out / "events.tsv"),
                        "--out", str(out2)) == 0
        lines = (out2 / "recommender.csv").read_text().splitlines()
        assert lines[0] == "method,n,nctr,seed"
        assert len(lines) > 1

    def test_fit_and_decompose(self, tmp_path):
        cfg = tiny_rec_config(trials=1, rec_events=3000)
        cfg_path = tmp_path / "exp.cfg"
        cfg.to_file(cfg_path)
        synth = tmp_path / "synth"
        self.run("rec-synth", "--config", str(cfg_path), "--out", str(synth))
        fit = tmp_path / "fit"
        assert self.run("fit-quadratic", "--config", str(cfg_path),
                        "--log", str(synth / "events.tsv"),
                        "--out", str(fit)) == 0
        dec = tmp_path / "dec"
        assert self.run("decompose", "--model", str(fit / "model.json"),
                        "--components", "2", "--out", str(dec)) == 0
        assert (dec / "decomposition.json").exists()

    def test_arm_run_determinism_and_metrics(self, tmp_path):
        cfg = tiny_arm_config(samples=1000, epoch_size=500)
        cfg_path = tmp_path / "exp.cfg"
        cfg.to_file(cfg_path)
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            assert self.run("arm-run", "--config", str(cfg_path),
                            "--out", str(out)) == 0
            outs.append((out / "trial_000.csv").read_bytes())
        assert outs[0] == outs[1]
        summ = tmp_path / "summary"
        assert self.run("arm-metrics", "--input",
                        str(tmp_path / "r1" / "trial_000.csv"),
                        "--out", str(summ)) == 0
        assert (summ / "summary.csv").exists()

    def test_error_category_on_bad_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("nonsense = 1\n", encoding="utf-8")
        code = self.run("arm-run", "--config", str(bad), "--out", str(tmp_path))
        assert code == 2
        err = capsys.readouterr().err
        assert err.startswith("error:config-error:")

    def test_missing_out_dir(self, capsys):
        code = self.run("rec-synth")
        assert code == 2
        assert "error:config-error" in capsys.readouterr().err
