import json
from pathlib import Path

import numpy as np
import pytest

from spikekit import bptt, cli
from spikekit.cli import load_config, main, thread_limit, validate_config
from spikekit.data import load_dataset_cache
from spikekit.errors import ConfigError, TrainingDiverged

EVENTS_MANIFEST = Path(__file__).parent / "data" / "events" / "manifest.json"

# Small enough that a full train run takes well under a second.
TINY = {
    "seed": 11,
    "timesteps": 3,
    "network": {"hidden": [6]},
    "train": {"epochs": 2, "batch_size": 4},
    "dataset": {
        "kind": "poisson",
        "class_count": 2,
        "neurons": 8,
        "rate_lo": 0.1,
        "rate_hi": 0.9,
        "train_per_class": 5,
        "test_per_class": 3,
    },
}


def _write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def _run_dirs(out):
    return sorted(p for p in Path(out).iterdir() if p.is_dir())


def _train_tiny(tmp_path, *extra, out="runs"):
    cfg = _write_config(tmp_path, TINY)
    out_dir = tmp_path / out
    rc = main(["train", "--config", cfg, "--out", str(out_dir), *extra])
    assert rc == 0
    return _run_dirs(out_dir)[-1]


class TestConfigValidation:
    def test_empty_config_fills_every_default(self):
        cfg = validate_config({})
        assert cfg["train"]["epochs"] == 20
        assert cfg["network"]["hidden"] == [32]
        assert cfg["dataset"]["kind"] == "poisson"
        assert cfg["model"] == "lif"
        assert cfg["timesteps"] == 10

    def test_unknown_nested_key_named_by_dotted_path(self):
        with pytest.raises(ConfigError, match=r"train\.lerning_rate"):
            validate_config({"train": {"lerning_rate": 1e-3}})

    def test_unknown_top_level_key_named(self):
        with pytest.raises(ConfigError, match="'lerning_rate'"):
            validate_config({"lerning_rate": 1e-3})

    def test_type_errors(self):
        with pytest.raises(ConfigError, match=r"train\.epochs"):
            validate_config({"train": {"epochs": "5"}})
        with pytest.raises(ConfigError, match=r"network\.leak"):
            validate_config({"network": {"leak": 1.5}})
        with pytest.raises(ConfigError, match="model"):
            validate_config({"model": "gru"})
        with pytest.raises(ConfigError, match="seed"):
            validate_config({"seed": True})

    def test_rate_window_must_be_increasing(self):
        with pytest.raises(ConfigError, match="rate_lo"):
            validate_config({"dataset": {"rate_lo": 0.5, "rate_hi": 0.5}})

    def test_events_dataset_requires_manifest(self):
        with pytest.raises(ConfigError, match="manifest"):
            validate_config({"dataset": {"kind": "events"}})

    def test_load_config_rejects_bad_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{nope")
        with pytest.raises(ConfigError, match="JSON"):
            load_config(path)
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError, match="object"):
            load_config(path)

    def test_load_config_none_is_empty(self):
        assert load_config(None) == {}


class TestThreadLimit:
    def test_default_is_one(self, monkeypatch):
        monkeypatch.delenv(cli.ENV_THREADS, raising=False)
        assert thread_limit() == 1

    def test_valid_value(self, monkeypatch):
        monkeypatch.setenv(cli.ENV_THREADS, "4")
        assert thread_limit() == 4

    @pytest.mark.parametrize("bad", ["abc", "0", "-3", "1.5"])
    def test_invalid_values(self, monkeypatch, bad):
        monkeypatch.setenv(cli.ENV_THREADS, bad)
        with pytest.raises(ConfigError, match="AIA_THREADS"):
            thread_limit()

    def test_invalid_value_maps_to_exit_2(self, monkeypatch, capsys):
        monkeypatch.setenv(cli.ENV_THREADS, "zero")
        assert main(["gradcheck"]) == 2
        assert "AIA_THREADS" in capsys.readouterr().err


class TestArgumentErrors:
    def test_no_command(self, capsys):
        assert main([]) == 2
        capsys.readouterr()

    def test_unknown_command(self, capsys):
        assert main(["florble"]) == 2
        capsys.readouterr()

    def test_unknown_flag(self, capsys):
        assert main(["train", "--bogus"]) == 2
        capsys.readouterr()

    def test_config_typo_maps_to_exit_2(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, {"train": {"lerning_rate": 1e-3}})
        assert main(["train", "--config", cfg, "--out", str(tmp_path / "runs")]) == 2
        assert "train.lerning_rate" in capsys.readouterr().err

    def test_missing_config_file_maps_to_exit_2(self, tmp_path, capsys):
        missing = str(tmp_path / "nope.json")
        assert main(["train", "--config", missing]) == 2
        capsys.readouterr()


class TestTrainCommand:
    def test_writes_run_artifacts(self, tmp_path, capsys):
        run_dir = _train_tiny(tmp_path, "--seed", "3")
        out = capsys.readouterr().out
        assert f"run directory: {run_dir}" in out
        assert "test accuracy" in out
        for name in ("effective_config.json", "checkpoint.json", "metrics.csv",
                     "metrics.json"):
            assert (run_dir / name).is_file(), name

    def test_effective_config_reflects_flag_overrides(self, tmp_path, capsys):
        run_dir = _train_tiny(tmp_path, "--seed", "42", "--model", "aia")
        capsys.readouterr()
        echoed = json.loads((run_dir / "effective_config.json").read_text())
        assert echoed["seed"] == 42
        assert echoed["model"] == "aia"
        assert echoed["train"]["epochs"] == 2
        # defaults absent from the file are echoed too
        assert echoed["train"]["adam_beta1"] == 0.9

    def test_same_seed_twice_gives_identical_metrics_bytes(self, tmp_path, capsys):
        a = _train_tiny(tmp_path, "--seed", "5", out="runs_a")
        b = _train_tiny(tmp_path, "--seed", "5", out="runs_b")
        capsys.readouterr()
        assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
        assert (a / "checkpoint.json").read_bytes() == (b / "checkpoint.json").read_bytes()

    def test_run_directories_are_never_reused(self, tmp_path, capsys):
        _train_tiny(tmp_path)
        _train_tiny(tmp_path)
        capsys.readouterr()
        assert len(_run_dirs(tmp_path / "runs")) == 2

    def test_events_dataset_trains(self, tmp_path, capsys):
        doc = {
            "timesteps": 3,
            "network": {"hidden": [4]},
            "train": {"epochs": 1, "batch_size": 4},
            "dataset": {"kind": "events", "manifest": str(EVENTS_MANIFEST)},
        }
        cfg = _write_config(tmp_path, doc)
        rc = main(["train", "--config", cfg, "--out", str(tmp_path / "runs")])
        captured = capsys.readouterr()
        assert rc == 0
        assert "train accuracy" in captured.out
        assert "skipped 1 empty" in captured.err
        run_dir = _run_dirs(tmp_path / "runs")[-1]
        rows = (run_dir / "metrics.csv").read_text().splitlines()
        assert all(",test," not in row for row in rows[1:])

    def test_divergence_maps_to_exit_3(self, tmp_path, monkeypatch, capsys):
        def blow_up(*args, **kwargs):
            raise TrainingDiverged("layer0.w")

        monkeypatch.setattr(cli, "train", blow_up)
        cfg = _write_config(tmp_path, TINY)
        rc = main(["train", "--config", cfg, "--out", str(tmp_path / "runs")])
        assert rc == 3
        assert "layer0.w" in capsys.readouterr().err


def _stdout_value(out, prefix):
    for line in out.splitlines():
        if line.startswith(prefix):
            return line[len(prefix):].strip()
    raise AssertionError(f"no line starting with {prefix!r} in:\n{out}")


class TestEvalCommand:
    def test_reproduces_final_test_metrics(self, tmp_path, capsys):
        run_dir = _train_tiny(tmp_path, "--seed", "3")
        capsys.readouterr()
        cfg = _write_config(tmp_path, TINY)
        rc = main(["eval", "--config", cfg, "--seed", "3",
                   "--checkpoint", str(run_dir / "checkpoint.json")])
        out = capsys.readouterr().out
        assert rc == 0
        doc = json.loads((run_dir / "metrics.json").read_text())
        final = doc["epochs"][-1]
        assert _stdout_value(out, "accuracy ") == f"{final['test_accuracy']:.4f}"
        assert _stdout_value(out, "loss ") == f"{final['test_loss']:.6f}"

    def test_missing_checkpoint_is_config_error(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, TINY)
        assert main(["eval", "--config", cfg]) == 2
        assert "checkpoint" in capsys.readouterr().err

    @pytest.mark.parametrize("model,expect_zero", [("lif", True), ("cached-aia", False)])
    def test_merge_beta_deviation_is_tiny(self, tmp_path, capsys, model, expect_zero):
        run_dir = _train_tiny(tmp_path, "--seed", "3", "--model", model)
        capsys.readouterr()
        cfg = _write_config(tmp_path, TINY)
        rc = main(["eval", "--config", cfg, "--seed", "3", "--merge-beta",
                   "--checkpoint", str(run_dir / "checkpoint.json")])
        out = capsys.readouterr().out
        assert rc == 0
        deviation = float(_stdout_value(out, "max readout deviation "))
        assert deviation <= 1e-9
        if expect_zero:
            assert deviation == 0.0


class TestGradcheckCommand:
    def test_all_models_pass(self, capsys):
        rc = main(["gradcheck", "--seed", "2"])
        out = capsys.readouterr().out
        assert rc == 0
        for model in ("lif", "if", "plif", "aia", "cached-aia"):
            assert f"model {model}" in out
        assert "gradcheck: pass" in out

    def test_corrupted_backward_fails(self, monkeypatch, capsys):
        true_backward = bptt._backward

        def skewed(tape, upstream, net, smoothed=False):
            grads = true_backward(tape, upstream, net, smoothed=smoothed)
            for g in grads.d_w:
                g *= 1.01
            return grads

        monkeypatch.setattr(bptt, "_backward", skewed)
        rc = main(["gradcheck", "--seed", "2"])
        out = capsys.readouterr().out
        assert rc == 1
        assert "gradcheck: FAIL" in out


class TestAnalyzeCommand:
    def test_compares_two_checkpoints(self, tmp_path, capsys):
        ckpt_a = _train_tiny(tmp_path, "--seed", "3", out="runs_a") / "checkpoint.json"
        ckpt_b = _train_tiny(tmp_path, "--seed", "3", "--model", "aia",
                             out="runs_b") / "checkpoint.json"
        capsys.readouterr()
        cfg = _write_config(tmp_path, TINY)
        out_dir = tmp_path / "analysis"
        rc = main(["analyze", "--config", cfg, "--seed", "3", "--out", str(out_dir),
                   "--checkpoint-a", str(ckpt_a), "--checkpoint-b", str(ckpt_b)])
        out = capsys.readouterr().out
        assert rc == 0
        run_dir = _run_dirs(out_dir)[-1]
        assert (run_dir / "weight_shift.csv").is_file()
        assert (run_dir / "spike_counts.csv").is_file()
        deltas_sum = float(_stdout_value(out, "weight-shift deltas sum "))
        assert abs(deltas_sum) <= 1e-12

    def test_missing_checkpoints_rejected(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, TINY)
        assert main(["analyze", "--config", cfg]) == 2
        assert "checkpoint" in capsys.readouterr().err


class TestGenDataCommand:
    def test_poisson_caches_round_trip(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, TINY)
        out_dir = tmp_path / "gen"
        rc = main(["gen-data", "--config", cfg, "--seed", "11", "--out", str(out_dir)])
        capsys.readouterr()
        assert rc == 0
        run_dir = _run_dirs(out_dir)[-1]
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["kind"] == "poisson"
        assert manifest["train_samples"] == 10
        assert manifest["test_samples"] == 6
        effective = json.loads((run_dir / "effective_config.json").read_text())
        params = {"dataset": effective["dataset"], "timesteps": 3, "seed": 11,
                  "split": "train"}
        loaded = load_dataset_cache(run_dir / "train.cache", params)
        assert loaded.split == "train"
        assert len(loaded) == 10
        assert loaded.neurons == 8 and loaded.timesteps == 3

    def test_same_seed_gives_identical_cache_bytes(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, TINY)
        for out in ("gen_a", "gen_b"):
            assert main(["gen-data", "--config", cfg, "--seed", "11",
                         "--out", str(tmp_path / out)]) == 0
        capsys.readouterr()
        a = _run_dirs(tmp_path / "gen_a")[-1]
        b = _run_dirs(tmp_path / "gen_b")[-1]
        assert (a / "train.cache").read_bytes() == (b / "train.cache").read_bytes()
        assert (a / "test.cache").read_bytes() == (b / "test.cache").read_bytes()

    def test_events_mode_reports_skips(self, tmp_path, capsys):
        doc = {
            "timesteps": 4,
            "dataset": {"kind": "events", "manifest": str(EVENTS_MANIFEST)},
        }
        cfg = _write_config(tmp_path, doc)
        out_dir = tmp_path / "gen"
        rc = main(["gen-data", "--config", cfg, "--out", str(out_dir)])
        out = capsys.readouterr().out
        assert rc == 0
        assert "skipped 1 empty" in out
        run_dir = _run_dirs(out_dir)[-1]
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["labels"] == [0, 1, 0]
        assert manifest["class_count"] == 2
        assert manifest["skipped_empty"] == 1
        assert (run_dir / "events.cache").is_file()
