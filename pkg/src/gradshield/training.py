"""Training, evaluation, and the adversarial-augmentation experiment harness.

Adversarial training here is static dataset augmentation: a short warm-up
run provides a non-degenerate attack target, the selected training examples
are attacked against that snapshot, the weights are re-randomized, and the
final model trains on original + attacked data. Fraction zero reduces to
plain training, checkpoint-identical given the same seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .attacks import AttackConfig, attack_dataset
from .data import LabeledDataset, concatenate
from .errors import ConfigError, DataError
from .model import Model, ModelConfig, build_model
from .tensor import Tensor

__all__ = [
    "FGSM_ONLY",
    "PGD_ONLY",
    "MIXED_HALF_HALF",
    "STRATEGIES",
    "TrainConfig",
    "AugmentationPlan",
    "EvalResult",
    "Metrics",
    "Adam",
    "train",
    "evaluate",
    "build_adversarial_augmentation",
    "adversarial_train",
    "collect_metrics",
    "sweep",
    "ExperimentReport",
]

FGSM_ONLY = "fgsm_only"
PGD_ONLY = "pgd_only"
MIXED_HALF_HALF = "mixed_half_half"
STRATEGIES = (FGSM_ONLY, PGD_ONLY, MIXED_HALF_HALF)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    shuffle_seed: int = 0
    init_seed: int = 0
    warmup_epochs: int = 5  # clean epochs before crafting training-time attacks
    dry_run: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {b}")
        if self.warmup_epochs < 0:
            raise ConfigError(f"warmup_epochs must be >= 0, got {self.warmup_epochs}")


@dataclass(frozen=True)
class AugmentationPlan:
    strategy: str = FGSM_ONLY
    fraction: float = 0.0
    fgsm_cfg: AttackConfig = field(default_factory=AttackConfig.fgsm_default)
    pgd_cfg: AttackConfig = field(default_factory=AttackConfig.pgd_default)
    selection_seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if not 0.0 <= self.fraction <= 1.0:
            raise ConfigError(f"fraction must lie in [0, 1], got {self.fraction}")
        if self.fgsm_cfg.kind != "fgsm" or self.pgd_cfg.kind != "pgd":
            raise ConfigError("plan attack configs have mismatched kinds")


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # true class x predicted class counts

    def to_dict(self):
        return {"accuracy": self.accuracy, "confusion": self.confusion.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(accuracy=float(d["accuracy"]), confusion=np.asarray(d["confusion"], dtype=np.int64))


@dataclass
class Metrics:
    clean: EvalResult
    fgsm: EvalResult
    pgd: EvalResult
    loss_history: list

    @property
    def clean_accuracy(self):
        return self.clean.accuracy

    @property
    def fgsm_accuracy(self):
        return self.fgsm.accuracy

    @property
    def pgd_accuracy(self):
        return self.pgd.accuracy

    def to_dict(self):
        return {
            "clean": self.clean.to_dict(),
            "fgsm": self.fgsm.to_dict(),
            "pgd": self.pgd.to_dict(),
            "loss_history": [float(v) for v in self.loss_history],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            clean=EvalResult.from_dict(d["clean"]),
            fgsm=EvalResult.from_dict(d["fgsm"]),
            pgd=EvalResult.from_dict(d["pgd"]),
            loss_history=[float(v) for v in d["loss_history"]],
        )


class Adam:
    """Adaptive-moment gradient descent with bias correction."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}
        self.t = 0

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p in self.params:
            g = p.grad
            if g is None:
                continue
            m = self.m[p.name] = b1 * self.m[p.name] + (1 - b1) * g
            v = self.v[p.name] = b2 * self.v[p.name] + (1 - b2) * g * g
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            p.assign(p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))


def _check_labels(data: LabeledDataset, classes: int):
    if len(data) == 0:
        raise DataError("dataset is empty")
    if data.labels.max() >= classes:
        raise DataError(f"label {data.labels.max()} out of range for {classes} classes")


def train(model: Model, data: LabeledDataset, cfg: TrainConfig):
    """Mini-batch cross-entropy minimization; returns (model, per-epoch mean loss).

    One seeded generator drives both the shuffle and the dropout masks, so a
    rerun with the same seeds is bit-identical. The model is left in eval mode.
    """
    _check_labels(data, model.config.classes)
    history: list[float] = []
    if cfg.dry_run:
        model.eval()
        return model, history
    rng = np.random.default_rng(cfg.shuffle_seed)
    opt = Adam(model.parameters(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    n = len(data)
    model.train()
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            model.zero_grad()
            loss = model.loss(Tensor(data.images[idx]), data.labels[idx], rng=rng)
            loss.backward()
            opt.step()
            total += float(loss.data) * len(idx)
        history.append(total / n)
    model.eval()
    return model, history


def evaluate(model: Model, data: LabeledDataset, batch_size: int = 256) -> EvalResult:
    """Accuracy and confusion counts in eval mode; the model is not touched."""
    if len(data) == 0:
        raise DataError("evaluate needs a non-empty dataset")
    k = model.config.classes
    confusion = np.zeros((k, k), dtype=np.int64)
    for start in range(0, len(data), batch_size):
        xb = data.images[start : start + batch_size]
        yb = data.labels[start : start + batch_size]
        _, pred = model.predict(xb)
        np.add.at(confusion, (yb, pred), 1)
    accuracy = float(np.trace(confusion)) / len(data)
    return EvalResult(accuracy=accuracy, confusion=confusion)


def _selection_count(fraction: float, n: int) -> int:
    # floor(f*n), tolerating float representation of exact products
    return int(math.floor(fraction * n + 1e-9))


def build_adversarial_augmentation(
    model: Model, train_data: LabeledDataset, plan: AugmentationPlan
) -> LabeledDataset:
    """Append attacked copies of floor(fraction * N) randomly selected examples.

    The originals are retained verbatim. MIXED_HALF_HALF splits the selection
    into an FGSM half and a PGD half; an odd selection gives FGSM the extra
    example.
    """
    n = len(train_data)
    k = _selection_count(plan.fraction, n)
    if k == 0:
        return train_data
    rng = np.random.default_rng(plan.selection_seed)
    selected = rng.choice(n, size=k, replace=False)
    if plan.strategy == FGSM_ONLY:
        attacked = [attack_dataset(model, train_data.subset(selected), plan.fgsm_cfg)]
    elif plan.strategy == PGD_ONLY:
        attacked = [attack_dataset(model, train_data.subset(selected), plan.pgd_cfg)]
    else:
        n_fgsm = (k + 1) // 2
        attacked = []
        if n_fgsm:
            attacked.append(attack_dataset(model, train_data.subset(selected[:n_fgsm]), plan.fgsm_cfg))
        if k - n_fgsm:
            attacked.append(attack_dataset(model, train_data.subset(selected[n_fgsm:]), plan.pgd_cfg))
    return concatenate([train_data] + attacked)


def collect_metrics(
    model: Model,
    test_data: LabeledDataset,
    fgsm_cfg: AttackConfig,
    pgd_cfg: AttackConfig,
    history=(),
) -> Metrics:
    """Clean/FGSM/PGD test metrics, attack sets crafted against this model."""
    clean = evaluate(model, test_data)
    fgsm_set = attack_dataset(model, test_data, fgsm_cfg)
    pgd_set = attack_dataset(model, test_data, pgd_cfg)
    return Metrics(
        clean=clean,
        fgsm=evaluate(model, fgsm_set),
        pgd=evaluate(model, pgd_set),
        loss_history=list(history),
    )


def adversarial_train(
    data: LabeledDataset,
    plan: AugmentationPlan,
    cfg: TrainConfig,
    test_data: LabeledDataset,
    model_config: ModelConfig | None = None,
):
    """Warm up, attack the selected fraction, re-randomize, retrain, evaluate.

    Returns (model, Metrics); the metrics always come from the held-out
    ``test_data``, attacked per the plan's configs against the final model.
    The harness seeds weight init from ``cfg.init_seed``.
    """
    base = replace(model_config or ModelConfig(), init_seed=cfg.init_seed)
    if _selection_count(plan.fraction, len(data)) == 0:
        model, history = train(build_model(base), data, cfg)
        return model, collect_metrics(model, test_data, plan.fgsm_cfg, plan.pgd_cfg, history)

    target = build_model(base)
    if cfg.warmup_epochs > 0:
        train(target, data, replace(cfg, epochs=cfg.warmup_epochs))
    augmented = build_adversarial_augmentation(target, data, plan)
    # fresh weights for the real run; only the crafted examples carry over
    model, history = train(build_model(base), augmented, cfg)
    return model, collect_metrics(model, test_data, plan.fgsm_cfg, plan.pgd_cfg, history)


@dataclass
class ExperimentReport:
    """Accuracy grid over (strategy, fraction) plus the vanilla baseline."""

    baseline: Metrics
    cells: dict  # (strategy, fraction) -> Metrics
    best_fraction: dict  # strategy -> fraction with the best clean accuracy
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "schema": 1,
            "baseline": self.baseline.to_dict(),
            "cells": [
                {"strategy": s, "fraction": f, "metrics": m.to_dict()}
                for (s, f), m in self.cells.items()
            ],
            "best_fraction": dict(self.best_fraction),
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("schema") != 1:
            raise ConfigError(f"unsupported report schema {d.get('schema')!r}")
        return cls(
            baseline=Metrics.from_dict(d["baseline"]),
            cells={
                (c["strategy"], float(c["fraction"])): Metrics.from_dict(c["metrics"])
                for c in d["cells"]
            },
            best_fraction={s: float(f) for s, f in d["best_fraction"].items()},
            provenance=dict(d.get("provenance", {})),
        )


def _run_cell(args):
    data, plan, cfg, test_data, model_config = args
    _, metrics = adversarial_train(data, plan, cfg, test_data, model_config)
    return metrics


def _collect_cells(jobs, runners):
    """Gather cell results in grid order, naming the failing cell on error."""
    results = []
    for (key, _, _), run in zip(jobs, runners):
        try:
            results.append(run())
        except Exception as e:
            where = "baseline" if key[0] is None else f"strategy={key[0]}, fraction={key[1]}"
            raise type(e)(f"sweep cell ({where}) failed: {e}") from e
    return results


def sweep(
    train_data: LabeledDataset,
    test_data: LabeledDataset,
    strategies,
    fractions,
    cfg: TrainConfig,
    model_config: ModelConfig | None = None,
    fgsm_cfg: AttackConfig | None = None,
    pgd_cfg: AttackConfig | None = None,
    workers: int = 1,
) -> ExperimentReport:
    """Run adversarial_train per (strategy, fraction) cell plus the baseline.

    Each cell gets fresh seeds derived from the base config so no two cells
    share weight-init or shuffle streams. Cells are independent; with
    workers > 1 they fan out across processes and merge in grid order.
    """
    strategies = list(strategies)
    fractions = list(fractions)
    if not strategies or not fractions:
        raise ConfigError("sweep needs at least one strategy and one fraction")
    unknown = [s for s in strategies if s not in STRATEGIES]
    if unknown:
        raise ConfigError(f"unknown strategies {unknown}; expected {STRATEGIES}")
    fgsm_cfg = fgsm_cfg or AttackConfig.fgsm_default()
    pgd_cfg = pgd_cfg or AttackConfig.pgd_default()

    def cell_cfg(offset: int) -> TrainConfig:
        return replace(
            cfg,
            init_seed=cfg.init_seed + 1000 * offset,
            shuffle_seed=cfg.shuffle_seed + 1000 * offset,
        )

    baseline_plan = AugmentationPlan(
        strategy=FGSM_ONLY, fraction=0.0, fgsm_cfg=fgsm_cfg, pgd_cfg=pgd_cfg, selection_seed=0
    )
    jobs = [((None, 0.0), baseline_plan, cell_cfg(0))]
    offset = 1
    for s in strategies:
        for f in fractions:
            plan = AugmentationPlan(
                strategy=s, fraction=f, fgsm_cfg=fgsm_cfg, pgd_cfg=pgd_cfg, selection_seed=offset
            )
            jobs.append(((s, f), plan, cell_cfg(offset)))
            offset += 1

    args = [(train_data, plan, c, test_data, model_config) for _, plan, c in jobs]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            runners = [fut.result for fut in [pool.submit(_run_cell, a) for a in args]]
            results = _collect_cells(jobs, runners)
    else:
        results = _collect_cells(jobs, [lambda a=a: _run_cell(a) for a in args])

    baseline = results[0]
    cells = {key: m for (key, _, _), m in zip(jobs[1:], results[1:])}
    best_fraction = {}
    for s in strategies:
        best_f, best_acc = None, -1.0
        for f in sorted(fractions):
            acc = cells[(s, f)].clean_accuracy
            if acc > best_acc:
                best_f, best_acc = f, acc
        best_fraction[s] = best_f
    return ExperimentReport(baseline=baseline, cells=cells, best_fraction=best_fraction)
