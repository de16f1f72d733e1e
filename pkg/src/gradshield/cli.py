"""Command-line front end: train, attack, advtrain, sweep, report.

A single JSON config file drives every command; its defaults reproduce the
experimental protocol shape (FGSM epsilon 0.2; PGD epsilon 0.3, alpha 0.2,
50 iterations; fractions 0.2/0.4/0.6/0.8 over three strategies) on a
synthetic dataset, so `gradshield sweep` works with no arguments at all.

Seeding: one global seed (--seed flag > GSH_SEED env > config "seed")
deterministically derives every stream (data synthesis, splitting, weight
init, shuffling, selection, attacks). Per-seed sections in the config are
rejected so the global seed is the single authority.

Exit status: 0 success, 1 user/config error, 2 internal error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
import traceback
from dataclasses import asdict, replace
from datetime import datetime, timezone

from . import __version__
from .attacks import AttackConfig, attack_dataset
from .data import load_csv, oversample, save_csv, split, synthesize_toy
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    GraphError,
    InvariantError,
    ShapeError,
)
from .model import ModelConfig, build_model, load_checkpoint, save_checkpoint
from .training import (
    STRATEGIES,
    AugmentationPlan,
    ExperimentReport,
    TrainConfig,
    adversarial_train,
    collect_metrics,
    evaluate,
    sweep,
    train,
)

DEFAULT_CONFIG = {
    "seed": 0,
    "out": "runs/latest",
    # desk-scale protocol: small enough that the full default sweep finishes
    # on a laptop core within the hour, large enough to learn the textures
    "dataset": {"synthetic": {"train_per_class": 60, "test_per_class": 15, "classes": 7}},
    "model": {},
    "train": {"epochs": 12},
    "fgsm": {"epsilon": 0.2},
    "pgd": {"epsilon": 0.3, "alpha": 0.2, "iterations": 50},
    "plan": {"strategy": "pgd_only", "fraction": 0.8},
    "sweep": {"strategies": list(STRATEGIES), "fractions": [0.2, 0.4, 0.6, 0.8]},
}

# sections where the user's dict replaces the default instead of merging into it
_REPLACE_SECTIONS = ("dataset",)

_SEEDED_FIELDS = {
    "train": ("init_seed", "shuffle_seed"),
    "fgsm": ("seed",),
    "pgd": ("seed",),
    "plan": ("selection_seed",),
    "model": ("init_seed",),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); bad flags are a user error
        raise ConfigError(message)


def _load_config(path) -> dict:
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is None:
        return config
    with open(path, "r", encoding="utf-8") as fh:
        try:
            user = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON (line {e.lineno}, column {e.colno}: {e.msg})")
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    for key, value in user.items():
        if key not in config:
            raise ConfigError(f"{path}: unknown config field {key!r}")
        if isinstance(config[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: field {key!r} must be an object")
            if key in _REPLACE_SECTIONS:
                config[key] = value
            else:
                config[key].update(value)
        else:
            config[key] = value
    for section, banned in _SEEDED_FIELDS.items():
        for name in banned:
            if name in config.get(section, {}):
                raise ConfigError(
                    f"{path}: {section}.{name} is derived from the global seed; set 'seed' instead"
                )
    return config


def _effective_seed(config, args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("GSH_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"GSH_SEED must be an integer, got {env!r}")
    seed = config["seed"]
    if not isinstance(seed, int):
        raise ConfigError(f"config field 'seed' must be an integer, got {seed!r}")
    return seed


def _derived_seeds(seed: int) -> dict:
    return {
        "synth_train": seed,
        "synth_test": seed + 1,
        "split": seed + 2,
        "oversample": seed + 3,
        "init": seed + 10,
        "shuffle": seed + 11,
        "selection": seed + 12,
        "fgsm": seed + 13,
        "pgd": seed + 14,
    }


def _check_keys(section: dict, allowed, where: str):
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)} (allowed: {sorted(allowed)})")


def _build_datasets(config, seeds):
    ds = config["dataset"]
    _check_keys(ds, ("synthetic", "csv"), "dataset")
    if ("synthetic" in ds) == ("csv" in ds):
        raise ConfigError("dataset must specify exactly one of 'synthetic' or 'csv'")
    if "synthetic" in ds:
        section = ds["synthetic"]
        _check_keys(section, ("train_per_class", "test_per_class", "classes"), "dataset.synthetic")
        classes = int(section.get("classes", 7))
        train_set = synthesize_toy(int(section.get("train_per_class", 80)), classes, seed=seeds["synth_train"])
        test_set = synthesize_toy(int(section.get("test_per_class", 20)), classes, seed=seeds["synth_test"])
        return train_set, test_set
    section = ds["csv"]
    _check_keys(section, ("path", "test_fraction", "oversample"), "dataset.csv")
    if "path" not in section:
        raise ConfigError("dataset.csv.path is required")
    full = load_csv(section["path"])
    train_set, test_set = split(full, float(section.get("test_fraction", 0.2)), seed=seeds["split"])
    if section.get("oversample", True):
        train_set = oversample(train_set, seed=seeds["oversample"])
    return train_set, test_set


def _attack_config(config, which: str, seeds) -> AttackConfig:
    section = dict(config[which])
    allowed = ("epsilon", "clip_min", "clip_max", "random_start")
    if which == "pgd":
        allowed += ("alpha", "iterations")
    _check_keys(section, allowed, which)
    return AttackConfig(kind=which, seed=seeds[which], **section)


def _train_config(config, seeds) -> TrainConfig:
    _check_keys(
        config["train"],
        ("epochs", "batch_size", "learning_rate", "beta1", "beta2", "adam_eps", "warmup_epochs", "dry_run"),
        "train",
    )
    return TrainConfig(init_seed=seeds["init"], shuffle_seed=seeds["shuffle"], **config["train"])


def _model_config(config, seeds) -> ModelConfig:
    mc = ModelConfig.from_dict(config["model"])
    return replace(mc, init_seed=seeds["init"])


def _plan(config, seeds, fgsm_cfg, pgd_cfg) -> AugmentationPlan:
    _check_keys(config["plan"], ("strategy", "fraction"), "plan")
    return AugmentationPlan(
        strategy=config["plan"].get("strategy", "pgd_only"),
        fraction=float(config["plan"].get("fraction", 0.8)),
        fgsm_cfg=fgsm_cfg,
        pgd_cfg=pgd_cfg,
        selection_seed=seeds["selection"],
    )


def _provenance(config, seed: int) -> dict:
    effective = copy.deepcopy(config)
    effective["seed"] = seed
    effective.pop("out", None)  # the destination does not change the experiment
    canonical = json.dumps(effective, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return {
        "config_hash": hashlib.sha256(canonical).hexdigest(),
        "seed": seed,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "version": __version__,
    }


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prepare(args):
    config = _load_config(args.config)
    if args.out is not None:
        config["out"] = args.out
    seed = _effective_seed(config, args)
    seeds = _derived_seeds(seed)
    out = config["out"]
    os.makedirs(out, exist_ok=True)
    return config, seed, seeds, out


def _metrics_payload(metrics, provenance) -> dict:
    return {"schema": 1, "provenance": provenance, "metrics": metrics.to_dict()}


def _print_metrics(metrics):
    print(f"clean accuracy: {metrics.clean_accuracy:.4f}")
    print(f"fgsm accuracy:  {metrics.fgsm_accuracy:.4f}")
    print(f"pgd accuracy:   {metrics.pgd_accuracy:.4f}")


def cmd_train(args) -> int:
    config, seed, seeds, out = _prepare(args)
    train_set, test_set = _build_datasets(config, seeds)
    tc = _train_config(config, seeds)
    mc = _model_config(config, seeds)
    if mc.classes != train_set.num_classes:
        raise ConfigError(f"model has {mc.classes} classes but the dataset has {train_set.num_classes}")
    fgsm_cfg = _attack_config(config, "fgsm", seeds)
    pgd_cfg = _attack_config(config, "pgd", seeds)

    model, history = train(build_model(mc), train_set, tc)
    metrics = collect_metrics(model, test_set, fgsm_cfg, pgd_cfg, history)

    ckpt = os.path.join(out, "checkpoint.gsh")
    save_checkpoint(model, ckpt)
    _write_json(os.path.join(out, "metrics.json"), _metrics_payload(metrics, _provenance(config, seed)))
    print(f"checkpoint: {ckpt}")
    print(f"metrics: {os.path.join(out, 'metrics.json')}")
    _print_metrics(metrics)
    return 0


def cmd_attack(args) -> int:
    config, seed, seeds, out = _prepare(args)
    _, test_set = _build_datasets(config, seeds)
    model = load_checkpoint(args.checkpoint)
    cfg = _attack_config(config, args.which, seeds)

    before = evaluate(model, test_set)
    attacked = attack_dataset(model, test_set, cfg)
    after = evaluate(model, attacked)

    csv_path = os.path.join(out, f"attacked_{args.which}.csv")
    save_csv(attacked, csv_path)
    provenance = _provenance(config, seed)
    provenance["attack"] = asdict(cfg)
    payload = {
        "schema": 1,
        "provenance": provenance,
        "before_accuracy": before.accuracy,
        "after_accuracy": after.accuracy,
    }
    _write_json(os.path.join(out, f"attack_{args.which}.json"), payload)
    print(f"attacked dataset: {csv_path}")
    print(f"before accuracy: {before.accuracy:.4f}")
    print(f"after accuracy:  {after.accuracy:.4f}")
    return 0


def cmd_advtrain(args) -> int:
    config, seed, seeds, out = _prepare(args)
    train_set, test_set = _build_datasets(config, seeds)
    tc = _train_config(config, seeds)
    mc = _model_config(config, seeds)
    fgsm_cfg = _attack_config(config, "fgsm", seeds)
    pgd_cfg = _attack_config(config, "pgd", seeds)
    plan = _plan(config, seeds, fgsm_cfg, pgd_cfg)

    model, metrics = adversarial_train(train_set, plan, tc, test_set, mc)

    ckpt = os.path.join(out, "checkpoint.gsh")
    save_checkpoint(model, ckpt)
    _write_json(os.path.join(out, "metrics.json"), _metrics_payload(metrics, _provenance(config, seed)))
    print(f"checkpoint: {ckpt}")
    print(f"plan: strategy={plan.strategy} fraction={plan.fraction}")
    _print_metrics(metrics)
    return 0


def cmd_sweep(args) -> int:
    config, seed, seeds, out = _prepare(args)
    train_set, test_set = _build_datasets(config, seeds)
    tc = _train_config(config, seeds)
    mc = _model_config(config, seeds)
    fgsm_cfg = _attack_config(config, "fgsm", seeds)
    pgd_cfg = _attack_config(config, "pgd", seeds)
    _check_keys(config["sweep"], ("strategies", "fractions"), "sweep")
    strategies = config["sweep"]["strategies"]
    fractions = [float(f) for f in config["sweep"]["fractions"]]

    report = sweep(
        train_set,
        test_set,
        strategies,
        fractions,
        tc,
        model_config=mc,
        fgsm_cfg=fgsm_cfg,
        pgd_cfg=pgd_cfg,
        workers=args.workers,
    )
    report.provenance = _provenance(config, seed)

    report_path = os.path.join(out, "report.json")
    _write_json(report_path, report.to_dict())

    csv_path = os.path.join(out, "sweep.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("strategy,fraction,eval_set,accuracy\n")
        for name, acc in (
            ("clean", report.baseline.clean_accuracy),
            ("fgsm", report.baseline.fgsm_accuracy),
            ("pgd", report.baseline.pgd_accuracy),
        ):
            fh.write(f"baseline,0.0,{name},{acc:.6f}\n")
        for s in strategies:
            for f in fractions:
                m = report.cells[(s, f)]
                for name, acc in (
                    ("clean", m.clean_accuracy),
                    ("fgsm", m.fgsm_accuracy),
                    ("pgd", m.pgd_accuracy),
                ):
                    fh.write(f"{s},{f},{name},{acc:.6f}\n")

    print(f"report: {report_path}")
    print(f"plot data: {csv_path}")
    for s in strategies:
        f = report.best_fraction[s]
        m = report.cells[(s, f)]
        print(
            f"best {s}: fraction={f} clean={m.clean_accuracy:.4f} "
            f"fgsm={m.fgsm_accuracy:.4f} pgd={m.pgd_accuracy:.4f}"
        )
    return 0


def _render_report(report: ExperimentReport) -> str:
    lines = []
    lines.append("Baseline (clean training)")
    lines.append(f"  {'eval set':<10} accuracy")
    for name, acc in (
        ("clean", report.baseline.clean_accuracy),
        ("fgsm", report.baseline.fgsm_accuracy),
        ("pgd", report.baseline.pgd_accuracy),
    ):
        lines.append(f"  {name:<10} {acc:.4f}")
    if report.cells:
        lines.append("")
        lines.append("Strategy grid")
        lines.append(f"  {'strategy':<16} {'fraction':<9} {'clean':<8} {'fgsm':<8} pgd")
        for (s, f), m in sorted(report.cells.items()):
            lines.append(
                f"  {s:<16} {f:<9.2f} {m.clean_accuracy:<8.4f} "
                f"{m.fgsm_accuracy:<8.4f} {m.pgd_accuracy:.4f}"
            )
        lines.append("")
        lines.append("Best fraction per strategy (by clean accuracy)")
        lines.append(f"  {'strategy':<16} {'fraction':<9} {'clean':<8} {'fgsm':<8} pgd")
        for s in sorted(report.best_fraction):
            f = report.best_fraction[s]
            m = report.cells[(s, f)]
            lines.append(
                f"  {s:<16} {f:<9.2f} {m.clean_accuracy:<8.4f} "
                f"{m.fgsm_accuracy:<8.4f} {m.pgd_accuracy:.4f}"
            )
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    with open(args.report, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{args.report}: not valid JSON ({e.msg})")
    report = ExperimentReport.from_dict(payload)
    sys.stdout.write(_render_report(report))
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="gradshield", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (defaults reproduce the protocol shape)")
        p.add_argument("--seed", type=int, help="global seed (overrides GSH_SEED and the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--workers", type=int, default=1, help="parallel sweep cells (default 1)")

    p = sub.add_parser("train", help="train on clean data, write checkpoint + metrics")
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("attack", help="attack the test set against a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True, help="model checkpoint to attack")
    p.add_argument("--which", required=True, choices=("fgsm", "pgd"), help="attack kind")
    p.set_defaults(fn=cmd_attack)

    p = sub.add_parser("advtrain", help="adversarial training per the config plan")
    common(p)
    p.set_defaults(fn=cmd_advtrain)

    p = sub.add_parser("sweep", help="strategy x fraction grid plus baseline")
    common(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("report", help="render a report JSON as text tables")
    p.add_argument("report", help="report JSON produced by sweep")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except (ConfigError, DataError, CheckpointError, ShapeError, FileNotFoundError, IsADirectoryError, PermissionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (InvariantError, GraphError):
        traceback.print_exc()
        return 2
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
