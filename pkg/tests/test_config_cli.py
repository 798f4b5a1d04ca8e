import json
import os

import numpy as np
import pytest
import yaml

from metakg import cli, config as config_mod
from metakg.meta import ConfigError


def small_experiment_dict():
    return {
        "schema_version": 1,
        "seed": 3,
        "out_dir": "run_a",
        "distribution": {
            "n_datasets": 1,
            "classes_per_dataset": 10,
            "input_dim": 6,
            "n_modes": 2,
        },
        "train": {
            "n_way": 2,
            "k_shot": 1,
            "q_per_class": 3,
            "kg_dim": 6,
            "kg_nodes": 2,
            "embed_hidden": [8],
            "task_hidden": [8],
            "inner_steps": 1,
            "meta_batch": 2,
            "iterations": 2,
            "checkpoint_interval": 0,
        },
        "eval": {"n_episodes": 4},
        "analysis": {"n_tasks": 8, "k": 3},
    }


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump(small_experiment_dict()))
    return path


class TestConfig:
    def test_round_trip_fixpoint(self, config_file):
        cfg = config_mod.load(config_file)
        once = config_mod.dumps(cfg)
        twice = config_mod.dumps(config_mod.from_dict(yaml.safe_load(once)))
        assert once == twice

    def test_unknown_key_rejected_with_name(self, tmp_path):
        data = small_experiment_dict()
        data["train"]["bogus_field"] = 1
        path = tmp_path / "bad.yaml"
        path.write_text(yaml.safe_dump(data))
        with pytest.raises(ConfigError, match="train.bogus_field"):
            config_mod.load(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="nope.yaml"):
            config_mod.load(tmp_path / "nope.yaml")

    def test_overrides(self, config_file):
        cfg = config_mod.load(config_file)
        cfg = config_mod.apply_overrides(cfg, ["train.inner_lr=0.125", "seed=9"])
        assert cfg.train.inner_lr == 0.125
        assert cfg.seed == 9

    def test_override_unknown_key(self, config_file):
        cfg = config_mod.load(config_file)
        with pytest.raises(ConfigError, match="train.nonsense"):
            config_mod.apply_overrides(cfg, ["train.nonsense=1"])

    def test_schema_version_check(self, config_file):
        cfg = config_mod.load(config_file)
        with pytest.raises(ConfigError):
            config_mod.apply_overrides(cfg, ["schema_version=42"])


class TestCli:
    def run_cli(self, *argv):
        return cli.main(list(argv))

    def test_missing_config_exits_2(self, capsys):
        assert self.run_cli("train", "/no/such/config.yaml") == 2
        assert "/no/such/config.yaml" in capsys.readouterr().err

    def test_train_writes_artifacts(self, config_file, tmp_path, monkeypatch):
        monkeypatch.setenv("METAKG_OUT_ROOT", str(tmp_path))
        assert self.run_cli("train", str(config_file)) == 0
        out = tmp_path / "run_a"
        assert (out / "config.yaml").exists()
        assert (out / "metrics.jsonl").exists()
        assert (out / "ckpt_final.npz").exists()
        lines = (out / "metrics.jsonl").read_text().strip().split("\n")
        assert len(lines) == 2
        assert set(json.loads(lines[0])) == {
            "iteration", "mean_query_acc", "mean_query_loss", "mean_ckd",
        }

    def test_zero_iterations_initial_checkpoint_only(self, config_file, tmp_path, monkeypatch):
        monkeypatch.setenv("METAKG_OUT_ROOT", str(tmp_path))
        rc = self.run_cli("train", str(config_file), "-o", "train.iterations=0",
                          "-o", "out_dir=run_zero")
        assert rc == 0
        out = tmp_path / "run_zero"
        assert (out / "ckpt_final.npz").exists()
        assert (out / "metrics.jsonl").read_text() == ""

    def test_metrics_byte_identical_across_reruns(self, config_file, tmp_path, monkeypatch):
        monkeypatch.setenv("METAKG_OUT_ROOT", str(tmp_path))
        assert self.run_cli("train", str(config_file), "-o", "out_dir=r1") == 0
        assert self.run_cli("train", str(config_file), "-o", "out_dir=r2") == 0
        m1 = (tmp_path / "r1" / "metrics.jsonl").read_bytes()
        m2 = (tmp_path / "r2" / "metrics.jsonl").read_bytes()
        assert m1 == m2

    def test_eval_deterministic_and_kg_column(self, config_file, tmp_path, monkeypatch):
        monkeypatch.setenv("METAKG_OUT_ROOT", str(tmp_path))
        assert self.run_cli("train", str(config_file)) == 0
        ckpt = tmp_path / "run_a" / "ckpt_final.npz"
        assert self.run_cli("eval", str(config_file), "--checkpoint", str(ckpt),
                            "-o", "out_dir=ev1", "-o", "eval.kg_at_test=true") == 0
        assert self.run_cli("eval", str(config_file), "--checkpoint", str(ckpt),
                            "-o", "out_dir=ev2", "-o", "eval.kg_at_test=true") == 0
        r1 = (tmp_path / "ev1" / "eval_report.csv").read_bytes()
        r2 = (tmp_path / "ev2" / "eval_report.csv").read_bytes()
        assert r1 == r2
        assert b"kg_at_test" in r1

    def test_ablate_grid_rows(self, config_file, tmp_path, monkeypatch):
        monkeypatch.setenv("METAKG_OUT_ROOT", str(tmp_path))
        rc = self.run_cli("ablate", str(config_file), "--alphas", "0.1", "0.2",
                          "--lambdas", "0.0", "0.05", "-o", "out_dir=ab")
        assert rc == 0
        csv = (tmp_path / "ab" / "ablation_grid.csv").read_text().strip().split("\n")
        assert len(csv) == 1 + 4  # header + 2x2 grid

    def test_analyze_on_untrained_checkpoint(self, config_file, tmp_path, monkeypatch):
        monkeypatch.setenv("METAKG_OUT_ROOT", str(tmp_path))
        assert self.run_cli("train", str(config_file), "-o", "train.iterations=0",
                            "-o", "out_dir=rz") == 0
        ckpt = tmp_path / "rz" / "ckpt_final.npz"
        rc = self.run_cli("analyze", str(config_file), "--checkpoint", str(ckpt),
                          "-o", "out_dir=an")
        assert rc == 0
        assert (tmp_path / "an" / "encodings.jsonl").exists()
        assert (tmp_path / "an" / "spectrum.csv").exists()

    def test_compare_baselines_cmd(self, config_file, tmp_path, monkeypatch):
        monkeypatch.setenv("METAKG_OUT_ROOT", str(tmp_path))
        rc = self.run_cli("compare-baselines", str(config_file), "-o", "out_dir=cb")
        assert rc == 0
        text = (tmp_path / "cb" / "baseline_comparison.txt").read_text()
        for name in ("maml", "modulated_maml", "full"):
            assert name in text

    def test_config_snapshot_in_every_output_dir(self, config_file, tmp_path, monkeypatch):
        monkeypatch.setenv("METAKG_OUT_ROOT", str(tmp_path))
        assert self.run_cli("train", str(config_file), "-o", "out_dir=snap") == 0
        snap = yaml.safe_load((tmp_path / "snap" / "config.yaml").read_text())
        assert snap["out_dir"] == "snap"
        assert snap["train"]["iterations"] == 2
