"""Command-line surface: train, eval, gradcheck, analyze, gen-data.

Configuration is a strict JSON file: every key is checked against the
schema and unknown keys are rejected by their dotted path, so a typo like
"lerning_rate" fails loudly instead of silently using a default. Flags
override file values; the merged effective config is echoed into the run
directory. Each invocation that writes artifacts gets a fresh timestamped
subdirectory under --out, never reusing an existing one.

Exit codes: 0 success, 1 check failure, 2 usage/config/data error,
3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from . import bptt
from .data import (
    Dataset,
    bin_events,
    gen_poisson_patterns,
    load_events_csv,
    save_dataset_cache,
)
from .errors import ConfigError, DataError, EmptySampleError, SpikeKitError, TrainingDiverged
from .network import init_network, load_checkpoint, merge_beta, save_checkpoint
from .neurons import MODELS
from .training import (
    TrainConfig,
    covering_bin_edges,
    evaluate,
    spike_count_report,
    train,
    weight_shift_report,
    write_metrics_csv,
    write_metrics_json,
    write_spike_counts_csv,
    write_weight_shift_csv,
)

ENV_THREADS = "AIA_THREADS"


def thread_limit() -> int:
    """Parallelism bound from the environment; execution is sequential, which
    trivially honors any bound >= 1."""
    raw = os.environ.get(ENV_THREADS, "1")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{ENV_THREADS} must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"{ENV_THREADS} must be a positive integer, got {raw!r}")
    return value


# ---------------------------------------------------------------------------
# config schema

def _chk_int(path, value, lo=None, hi=None):
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"config key {path} must be an integer")
    if lo is not None and value < lo:
        raise ConfigError(f"config key {path} must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(f"config key {path} must be <= {hi}, got {value}")
    return value


def _chk_number(path, value, lo=None, hi=None, lo_strict=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"config key {path} must be a number")
    value = float(value)
    if lo is not None and (value <= lo if lo_strict else value < lo):
        op = ">" if lo_strict else ">="
        raise ConfigError(f"config key {path} must be {op} {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(f"config key {path} must be <= {hi}, got {value}")
    return value


def _chk_str(path, value, options=None):
    if not isinstance(value, str):
        raise ConfigError(f"config key {path} must be a string")
    if options is not None and value not in options:
        raise ConfigError(f"config key {path} must be one of {options}, got {value!r}")
    return value


def _chk_int_list(path, value, lo=1):
    if not isinstance(value, list) or not all(
        isinstance(v, int) and not isinstance(v, bool) and v >= lo for v in value
    ):
        raise ConfigError(f"config key {path} must be a list of integers >= {lo}")
    return list(value)


def _apply_schema(section: dict, schema: dict, prefix: str) -> dict:
    for key in section:
        if key not in schema:
            dotted = f"{prefix}.{key}" if prefix else key
            raise ConfigError(f"unknown config key {dotted!r}")
    out = {}
    for key, (default, check) in schema.items():
        dotted = f"{prefix}.{key}" if prefix else key
        value = section.get(key, default)
        # Defaults go through the checker too, so absent sections come back
        # fully filled in rather than as bare {}.
        out[key] = value if value is None else check(dotted, value)
    return out


def _chk_network(path, value):
    if not isinstance(value, dict):
        raise ConfigError(f"config key {path} must be an object")
    return _apply_schema(value, {
        "hidden": ([32], _chk_int_list),
        "v_th": (1.0, lambda p, v: _chk_number(p, v)),
        "leak": (0.5, lambda p, v: _chk_number(p, v, lo=0.0, hi=1.0)),
        "surrogate_width": (1.0, lambda p, v: _chk_number(p, v, lo=0.0, lo_strict=True)),
    }, path)


def _chk_train(path, value):
    if not isinstance(value, dict):
        raise ConfigError(f"config key {path} must be an object")
    return _apply_schema(value, {
        "epochs": (20, lambda p, v: _chk_int(p, v, lo=1)),
        "batch_size": (20, lambda p, v: _chk_int(p, v, lo=1)),
        "learning_rate": (1e-3, lambda p, v: _chk_number(p, v, lo=0.0)),
        "adam_beta1": (0.9, lambda p, v: _chk_number(p, v, lo=0.0, hi=1.0)),
        "adam_beta2": (0.999, lambda p, v: _chk_number(p, v, lo=0.0, hi=1.0)),
        "adam_eps": (1e-8, lambda p, v: _chk_number(p, v, lo=0.0, lo_strict=True)),
    }, path)


_POISSON_SCHEMA = {
    "kind": ("poisson", lambda p, v: _chk_str(p, v, options=("poisson", "events"))),
    "class_count": (4, lambda p, v: _chk_int(p, v, lo=1)),
    "neurons": (64, lambda p, v: _chk_int(p, v, lo=1)),
    "rate_lo": (0.05, lambda p, v: _chk_number(p, v, lo=0.0, hi=1.0)),
    "rate_hi": (0.5, lambda p, v: _chk_number(p, v, lo=0.0, hi=1.0)),
    "train_per_class": (50, lambda p, v: _chk_int(p, v, lo=1)),
    "test_per_class": (25, lambda p, v: _chk_int(p, v, lo=0)),
}

_EVENTS_SCHEMA = {
    "kind": ("events", lambda p, v: _chk_str(p, v, options=("poisson", "events"))),
    "manifest": (None, _chk_str),
    "grid_width": (8, lambda p, v: _chk_int(p, v, lo=1)),
    "grid_height": (8, lambda p, v: _chk_int(p, v, lo=1)),
    "class_count": (0, lambda p, v: _chk_int(p, v, lo=0)),
}


def _chk_dataset(path, value):
    if not isinstance(value, dict):
        raise ConfigError(f"config key {path} must be an object")
    kind = value.get("kind", "poisson")
    _chk_str(f"{path}.kind", kind, options=("poisson", "events"))
    schema = _POISSON_SCHEMA if kind == "poisson" else _EVENTS_SCHEMA
    out = _apply_schema(value, schema, path)
    if kind == "events" and out["manifest"] is None:
        raise ConfigError(f"config key {path}.manifest is required for events datasets")
    return out


def _chk_gradcheck(path, value):
    if not isinstance(value, dict):
        raise ConfigError(f"config key {path} must be an object")
    return _apply_schema(value, {
        "batch": (2, lambda p, v: _chk_int(p, v, lo=1)),
        "input_width": (4, lambda p, v: _chk_int(p, v, lo=1)),
        "hidden": ([6], _chk_int_list),
        "class_count": (3, lambda p, v: _chk_int(p, v, lo=2)),
        "timesteps": (3, lambda p, v: _chk_int(p, v, lo=1)),
        "tolerance": (1e-3, lambda p, v: _chk_number(p, v, lo=0.0, lo_strict=True)),
        "step_size": (1e-4, lambda p, v: _chk_number(p, v, lo=0.0, lo_strict=True)),
    }, path)


def _chk_optional_str(path, value):
    if value is None:
        return None
    return _chk_str(path, value)


_TOP_SCHEMA = {
    "seed": (0, lambda p, v: _chk_int(p, v, lo=0)),
    "model": ("lif", lambda p, v: _chk_str(p, v, options=MODELS)),
    "timesteps": (10, lambda p, v: _chk_int(p, v, lo=1)),
    "checkpoint": (None, _chk_optional_str),
    "checkpoint_a": (None, _chk_optional_str),
    "checkpoint_b": (None, _chk_optional_str),
    "network": ({}, _chk_network),
    "train": ({}, _chk_train),
    "dataset": ({}, _chk_dataset),
    "gradcheck": ({}, _chk_gradcheck),
}


def validate_config(raw: dict) -> dict:
    """Apply defaults and type checks; unknown keys fail by dotted path."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    effective = _apply_schema(raw, _TOP_SCHEMA, "")
    ds = effective["dataset"]
    if ds["kind"] == "poisson" and not ds["rate_lo"] < ds["rate_hi"]:
        raise ConfigError(
            f"config key dataset.rate_lo must be < dataset.rate_hi, "
            f"got [{ds['rate_lo']}, {ds['rate_hi']}]"
        )
    return effective


def load_config(path) -> dict:
    if path is None:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return raw


@dataclass
class RunSpec:
    """A parsed invocation: command, config source, and flag overrides."""

    command: str
    config_path: str | None = None
    out_dir: str = "runs"
    overrides: dict = field(default_factory=dict)
    merge_beta: bool = False
    checkpoint: str | None = None
    checkpoint_a: str | None = None
    checkpoint_b: str | None = None

    def effective_config(self) -> dict:
        raw = load_config(self.config_path)
        merged = dict(raw)
        merged.update(self.overrides)
        cfg = validate_config(merged)
        if self.checkpoint is not None:
            cfg["checkpoint"] = self.checkpoint
        if self.checkpoint_a is not None:
            cfg["checkpoint_a"] = self.checkpoint_a
        if self.checkpoint_b is not None:
            cfg["checkpoint_b"] = self.checkpoint_b
        return cfg


def _make_run_dir(out_dir, command: str) -> Path:
    base = Path(out_dir)
    base.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S-%f")
    candidate = base / f"{stamp}-{command}"
    suffix = 1
    while candidate.exists():
        candidate = base / f"{stamp}-{command}-{suffix}"
        suffix += 1
    candidate.mkdir()
    return candidate


def _echo_config(cfg: dict, run_dir: Path) -> None:
    with open(run_dir / "effective_config.json", "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _build_datasets(cfg: dict):
    """Returns (train dataset, test dataset or None) per the dataset section."""
    ds = cfg["dataset"]
    if ds["kind"] == "poisson":
        common = dict(
            class_count=ds["class_count"],
            neurons=ds["neurons"],
            timesteps=cfg["timesteps"],
            rate_lo=ds["rate_lo"],
            rate_hi=ds["rate_hi"],
            seed=cfg["seed"],
        )
        train_ds = gen_poisson_patterns(
            n_per_class=ds["train_per_class"], split="train", **common
        )
        test_ds = None
        if ds["test_per_class"] > 0:
            test_ds = gen_poisson_patterns(
                n_per_class=ds["test_per_class"], split="test", **common
            )
        return train_ds, test_ds

    frames = []
    labels = []
    skipped = 0
    for records, label in load_events_csv(ds["manifest"]):
        try:
            frames.append(bin_events(records, ds["grid_width"], ds["grid_height"],
                                     cfg["timesteps"]))
            labels.append(label)
        except EmptySampleError:
            skipped += 1
    if not frames:
        raise DataError(f"no usable samples in {ds['manifest']} ({skipped} empty)")
    if skipped:
        print(f"skipped {skipped} empty sample(s)", file=sys.stderr)
    class_count = ds["class_count"] or max(labels) + 1
    dataset = Dataset(
        data=np.stack(frames),
        labels=np.asarray(labels, dtype=np.int64),
        class_count=class_count,
        split="train",
    )
    return dataset, None


def _eval_split(cfg: dict) -> Dataset:
    train_ds, test_ds = _build_datasets(cfg)
    return test_ds if test_ds is not None else train_ds


def _train_config(cfg: dict) -> TrainConfig:
    tr = cfg["train"]
    return TrainConfig(
        epochs=tr["epochs"],
        batch_size=tr["batch_size"],
        learning_rate=tr["learning_rate"],
        adam_beta1=tr["adam_beta1"],
        adam_beta2=tr["adam_beta2"],
        adam_eps=tr["adam_eps"],
        seed=cfg["seed"],
        model=cfg["model"],
        timesteps=cfg["timesteps"],
        dataset=cfg["dataset"],
    )


def cmd_train(spec: RunSpec) -> int:
    cfg = spec.effective_config()
    train_ds, test_ds = _build_datasets(cfg)
    widths = [train_ds.neurons] + cfg["network"]["hidden"] + [train_ds.class_count]
    net = init_network(
        widths,
        model=cfg["model"],
        timesteps=cfg["timesteps"],
        seed=cfg["seed"],
        v_th=cfg["network"]["v_th"],
        leak=cfg["network"]["leak"],
        surrogate_width=cfg["network"]["surrogate_width"],
    )
    run_dir = _make_run_dir(spec.out_dir, "train")
    _echo_config(cfg, run_dir)
    print(f"run directory: {run_dir}")

    trained, metrics = train(net, train_ds, _train_config(cfg), test_ds)
    save_checkpoint(trained, run_dir / "checkpoint.json", seed=cfg["seed"])
    write_metrics_csv(metrics, run_dir / "metrics.csv")
    write_metrics_json(metrics, run_dir / "metrics.json")

    last = metrics.epoch_count - 1
    print(f"model {cfg['model']}: train accuracy {metrics.train_accuracy[last]:.4f}")
    if metrics.test_accuracy:
        print(f"model {cfg['model']}: test accuracy {metrics.test_accuracy[last]:.4f}")
    print(f"spike counts {metrics.spike_counts}")
    return 0


def cmd_eval(spec: RunSpec) -> int:
    cfg = spec.effective_config()
    if cfg["checkpoint"] is None:
        raise ConfigError("eval needs a checkpoint (--checkpoint or config key)")
    net, _ = load_checkpoint(cfg["checkpoint"])
    dataset = _eval_split(cfg)

    if spec.merge_beta:
        merged = merge_beta(net)
        _, plain_readout = bptt.forward_record(net, dataset.data)
        _, merged_readout = bptt.forward_record(merged, dataset.data)
        deviation = float(np.max(np.abs(plain_readout - merged_readout)))
        net = merged

    result = evaluate(net, dataset)
    print(f"loss {result.loss:.6f}")
    print(f"accuracy {result.accuracy:.4f}")
    for i, count in enumerate(result.spike_counts):
        print(f"layer {i} spikes {count}")
    if spec.merge_beta:
        print(f"max readout deviation {deviation:.3e}")
    return 0


def cmd_gradcheck(spec: RunSpec) -> int:
    cfg = spec.effective_config()
    gc = cfg["gradcheck"]
    widths = [gc["input_width"]] + gc["hidden"] + [gc["class_count"]]
    rng = np.random.default_rng(np.random.SeedSequence(cfg["seed"], spawn_key=(9,)))
    inputs = (rng.random((gc["batch"], gc["input_width"], gc["timesteps"])) < 0.5
              ).astype(np.float64)
    labels = rng.integers(0, gc["class_count"], size=gc["batch"])

    all_passed = True
    for model in MODELS:
        net = init_network(widths, model=model, timesteps=gc["timesteps"], seed=cfg["seed"])
        report = bptt.gradcheck(net, inputs, labels, step_size=gc["step_size"],
                                tolerance=gc["tolerance"])
        print(f"model {model}")
        print(report.render())
        all_passed = all_passed and report.passed

    print(f"gradcheck: {'pass' if all_passed else 'FAIL'}")
    return 0 if all_passed else 1


def cmd_analyze(spec: RunSpec) -> int:
    cfg = spec.effective_config()
    if cfg["checkpoint_a"] is None or cfg["checkpoint_b"] is None:
        raise ConfigError("analyze needs checkpoint_a and checkpoint_b")
    net_a, _ = load_checkpoint(cfg["checkpoint_a"])
    net_b, _ = load_checkpoint(cfg["checkpoint_b"])
    dataset = _eval_split(cfg)

    edges = covering_bin_edges(net_a, net_b)
    deltas = weight_shift_report(net_a, net_b, edges)
    counts_a = spike_count_report(net_a, dataset)
    counts_b = spike_count_report(net_b, dataset)

    run_dir = _make_run_dir(spec.out_dir, "analyze")
    _echo_config(cfg, run_dir)
    write_weight_shift_csv(edges, deltas, run_dir / "weight_shift.csv")
    write_spike_counts_csv({"checkpoint_a": counts_a, "checkpoint_b": counts_b},
                           run_dir / "spike_counts.csv")
    print(f"run directory: {run_dir}")
    print(f"weight-shift deltas sum {float(np.sum(deltas)):.3e}")
    print(f"spikes checkpoint_a {counts_a}")
    print(f"spikes checkpoint_b {counts_b}")
    return 0


def cmd_gen_data(spec: RunSpec) -> int:
    cfg = spec.effective_config()
    ds = cfg["dataset"]
    run_dir = _make_run_dir(spec.out_dir, "gen-data")
    _echo_config(cfg, run_dir)
    print(f"run directory: {run_dir}")

    if ds["kind"] == "poisson":
        train_ds, test_ds = _build_datasets(cfg)
        files = {}
        params = {"dataset": ds, "timesteps": cfg["timesteps"], "seed": cfg["seed"],
                  "split": "train"}
        save_dataset_cache(train_ds, run_dir / "train.cache", params)
        files["train"] = "train.cache"
        if test_ds is not None:
            params = dict(params, split="test")
            save_dataset_cache(test_ds, run_dir / "test.cache", params)
            files["test"] = "test.cache"
        manifest = {
            "kind": "poisson",
            "class_count": train_ds.class_count,
            "train_samples": len(train_ds),
            "test_samples": 0 if test_ds is None else len(test_ds),
            "files": files,
        }
        with open(run_dir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"classes {train_ds.class_count}, train samples {len(train_ds)}, "
              f"test samples {manifest['test_samples']}")
        return 0

    frames = []
    labels = []
    skipped = 0
    for records, label in load_events_csv(ds["manifest"]):
        try:
            frames.append(bin_events(records, ds["grid_width"], ds["grid_height"],
                                     cfg["timesteps"]))
            labels.append(label)
        except EmptySampleError:
            skipped += 1
    if not frames:
        raise DataError(f"no usable samples in {ds['manifest']} ({skipped} empty)")
    class_count = ds["class_count"] or max(labels) + 1
    dataset = Dataset(np.stack(frames), np.asarray(labels, dtype=np.int64),
                      class_count, split="train")
    params = {"dataset": ds, "timesteps": cfg["timesteps"], "seed": cfg["seed"],
              "split": "train"}
    save_dataset_cache(dataset, run_dir / "events.cache", params)
    manifest = {
        "kind": "events",
        "class_count": class_count,
        "labels": labels,
        "samples": len(dataset),
        "skipped_empty": skipped,
        "files": {"train": "events.cache"},
    }
    with open(run_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"classes {class_count}, samples {len(dataset)}, skipped {skipped} empty")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "analyze": cmd_analyze,
    "gen-data": cmd_gen_data,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikekit",
        description="Train and inspect small spiking networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH", default=None)
        sp.add_argument("--out", metavar="DIR", default="runs")
        sp.add_argument("--seed", type=int, default=None, metavar="N")
        sp.add_argument("--model", choices=MODELS, default=None)
        sp.add_argument("--merge-beta", action="store_true")
        if name == "eval":
            sp.add_argument("--checkpoint", metavar="PATH", default=None)
        if name == "analyze":
            sp.add_argument("--checkpoint-a", metavar="PATH", default=None)
            sp.add_argument("--checkpoint-b", metavar="PATH", default=None)
    return parser


def _spec_from_args(args: argparse.Namespace) -> RunSpec:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.model is not None:
        overrides["model"] = args.model
    return RunSpec(
        command=args.command,
        config_path=args.config,
        out_dir=args.out,
        overrides=overrides,
        merge_beta=args.merge_beta,
        checkpoint=getattr(args, "checkpoint", None),
        checkpoint_a=getattr(args, "checkpoint_a", None),
        checkpoint_b=getattr(args, "checkpoint_b", None),
    )


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        thread_limit()
        spec = _spec_from_args(args)
        return _COMMANDS[spec.command](spec)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (SpikeKitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))
