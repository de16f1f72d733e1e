"""White-box input attacks: fast gradient sign and projected gradient descent.

Both are untargeted: they push the loss of the true label upward. All balls
are L-infinity, so projection is elementwise clamping, first into the ball
around the original image and then into the valid pixel range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .errors import ConfigError, DataError, GradShieldError, ShapeError
from .model import Model, input_gradient
from .tensor import Tensor

__all__ = ["AttackConfig", "sign", "fgsm", "project", "pgd", "attack_dataset", "linf_distance"]

ATTACK_BATCH = 32


@dataclass(frozen=True)
class AttackConfig:
    kind: str  # "fgsm" | "pgd"
    epsilon: float
    alpha: float | None = None
    iterations: int = 0
    norm: str = "inf"
    random_start: bool = False
    clip_min: float = 0.0
    clip_max: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("fgsm", "pgd"):
            raise ConfigError(f"attack kind must be 'fgsm' or 'pgd', got {self.kind!r}")
        if self.norm != "inf":
            raise ConfigError(f"only the L-infinity ball is supported, got norm {self.norm!r}")
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be non-negative, got {self.epsilon}")
        if not self.clip_min < self.clip_max:
            raise ConfigError(f"clip range is empty: [{self.clip_min}, {self.clip_max}]")
        if self.kind == "pgd":
            if self.alpha is None or self.alpha <= 0:
                raise ConfigError(f"pgd needs a positive step size, got {self.alpha}")
            if self.iterations < 0:
                raise ConfigError(f"pgd iterations must be >= 0, got {self.iterations}")

    @classmethod
    def fgsm_default(cls, **overrides):
        kw = dict(kind="fgsm", epsilon=0.2)
        kw.update(overrides)
        return cls(**kw)

    @classmethod
    def pgd_default(cls, **overrides):
        kw = dict(kind="pgd", epsilon=0.3, alpha=0.2, iterations=50)
        kw.update(overrides)
        return cls(**kw)


def sign(t: Tensor) -> Tensor:
    """Elementwise -1/0/+1; sign(0) = 0."""
    return Tensor(np.sign(t.data))


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _project_array(candidate, origin, cfg: AttackConfig) -> np.ndarray:
    lo = origin - cfg.epsilon
    hi = origin + cfg.epsilon
    return np.clip(np.clip(candidate, lo, hi), cfg.clip_min, cfg.clip_max)


def project(candidate: Tensor, origin: Tensor, cfg: AttackConfig) -> Tensor:
    """Nearest point of the intersection of the epsilon ball and the pixel box."""
    c, o = _as_array(candidate), _as_array(origin)
    if c.shape != o.shape:
        raise ShapeError(f"project shapes disagree: {c.shape} vs {o.shape}")
    return Tensor(_project_array(c, o, cfg))


def fgsm(model: Model, x, y, cfg: AttackConfig) -> Tensor:
    """x + epsilon * sign of the loss gradient, clipped to the pixel range."""
    origin = _as_array(x)
    if cfg.epsilon == 0.0:
        return Tensor(np.array(origin))
    g = input_gradient(model, origin, y)
    return Tensor(np.clip(origin + cfg.epsilon * np.sign(g.data), cfg.clip_min, cfg.clip_max))


def pgd(model: Model, x, y, cfg: AttackConfig, return_iterates: bool = False, rng=None):
    """Iterated sign steps of size alpha, re-projected into the ball each time.

    Runs exactly ``cfg.iterations`` steps; no convergence test. With
    ``return_iterates`` the full trajectory (post-projection states) comes
    back alongside the final tensor.
    """
    if cfg.kind != "pgd":
        raise ConfigError(f"pgd called with a {cfg.kind!r} config")
    origin = _as_array(x)
    current = np.array(origin)
    iterates = []
    if cfg.epsilon > 0.0 and cfg.random_start:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        current = _project_array(
            current + rng.uniform(-cfg.epsilon, cfg.epsilon, current.shape), origin, cfg
        )
        iterates.append(np.array(current))
    if cfg.epsilon > 0.0:
        for _ in range(cfg.iterations):
            g = input_gradient(model, current, y)
            current = _project_array(current + cfg.alpha * np.sign(g.data), origin, cfg)
            iterates.append(np.array(current))
    adv = Tensor(current)
    return (adv, iterates) if return_iterates else adv


def attack_dataset(model: Model, data: LabeledDataset, cfg: AttackConfig) -> LabeledDataset:
    """Replace every image by its attacked version; labels and order preserved.

    Work proceeds in fixed-size batches; eval-mode normalization makes the
    result independent of the batching. With random_start each batch draws
    from a seed derived from (cfg.seed, batch start), so reruns are
    bit-identical.
    """
    images = data.images
    lo, hi = images.min(initial=cfg.clip_min), images.max(initial=cfg.clip_max)
    if lo < cfg.clip_min or hi > cfg.clip_max:
        raise DataError(
            f"images must lie within the clip range [{cfg.clip_min}, {cfg.clip_max}], "
            f"found values in [{lo}, {hi}]"
        )
    chunks = []
    for start in range(0, len(data), ATTACK_BATCH):
        stop = min(start + ATTACK_BATCH, len(data))
        xb, yb = images[start:stop], data.labels[start:stop]
        try:
            if cfg.kind == "fgsm":
                adv = fgsm(model, xb, yb, cfg)
            else:
                adv = pgd(model, xb, yb, cfg, rng=np.random.default_rng([cfg.seed, start]))
        except GradShieldError as e:
            raise type(e)(f"attack failed on examples {start}..{stop - 1}: {e}") from e
        chunks.append(adv.data)
    attacked = np.concatenate(chunks) if chunks else images.copy()
    return LabeledDataset(
        images=attacked,
        labels=data.labels.copy(),
        provenance=[cfg.kind] * len(data),
        class_names=data.class_names,
    )


def linf_distance(a, b) -> float:
    """Largest per-pixel absolute difference; the perturbation bound check."""
    da, db = _as_array(a), _as_array(b)
    if da.shape != db.shape:
        raise ShapeError(f"linf_distance shapes disagree: {da.shape} vs {db.shape}")
    if da.size == 0:
        return 0.0
    return float(np.abs(da - db).max())
