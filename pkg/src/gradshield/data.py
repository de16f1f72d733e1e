"""Dataset plumbing: CSV ingestion, splitting, class balancing, synthesis.

The on-disk layout is one row per image: an integer class label followed by
2352 integer pixels (0..255) in height x width x channel raster order for a
28x28 RGB image. A sidecar JSON (same filename with ".json" appended) carries
class names and per-example provenance tags.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

__all__ = [
    "ORIGINAL",
    "PROVENANCE_TAGS",
    "HAM10000_CLASSES",
    "LabeledDataset",
    "concatenate",
    "load_csv",
    "save_csv",
    "split",
    "oversample",
    "synthesize_toy",
]

ORIGINAL = "original"
PROVENANCE_TAGS = ("original", "fgsm", "pgd")

# the seven HAM10000 lesion categories, in the distribution's label order
HAM10000_CLASSES = ("akiec", "bcc", "bkl", "df", "mel", "nv", "vasc")

IMAGE_SHAPE = (3, 28, 28)
PIXELS_PER_IMAGE = 3 * 28 * 28
CSV_COLUMNS = 1 + PIXELS_PER_IMAGE


@dataclass
class LabeledDataset:
    """Images in [0,1] with integer labels and per-example provenance tags."""

    images: np.ndarray  # N x C x H x W float64
    labels: np.ndarray  # N int64
    provenance: tuple = ()
    class_names: tuple = field(default_factory=lambda: HAM10000_CLASSES)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.class_names = tuple(str(c) for c in self.class_names)
        n = len(self.images)
        if self.images.ndim != 4:
            raise DataError(f"images must be N x C x H x W, got {self.images.shape}")
        if self.labels.shape != (n,):
            raise DataError(f"{n} images but {self.labels.shape} labels")
        if not self.provenance:
            self.provenance = (ORIGINAL,) * n
        self.provenance = tuple(self.provenance)
        if len(self.provenance) != n:
            raise DataError(f"{n} images but {len(self.provenance)} provenance tags")
        bad = set(self.provenance) - set(PROVENANCE_TAGS)
        if bad:
            raise DataError(f"unknown provenance tags {sorted(bad)}; expected {PROVENANCE_TAGS}")
        k = len(self.class_names)
        if n and (self.labels.min() < 0 or self.labels.max() >= k):
            raise DataError(f"labels must lie in [0, {k}), saw {self.labels.min()}..{self.labels.max()}")
        if n and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise DataError(
                f"pixels must lie in [0, 1], saw {self.images.min():.6g}..{self.images.max():.6g}"
            )

    def __len__(self):
        return len(self.images)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            images=self.images[idx],
            labels=self.labels[idx],
            provenance=tuple(self.provenance[i] for i in idx),
            class_names=self.class_names,
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


def concatenate(datasets) -> LabeledDataset:
    datasets = list(datasets)
    if not datasets:
        raise DataError("concatenate needs at least one dataset")
    names = datasets[0].class_names
    if any(d.class_names != names for d in datasets):
        raise DataError("cannot concatenate datasets with different class names")
    return LabeledDataset(
        images=np.concatenate([d.images for d in datasets]),
        labels=np.concatenate([d.labels for d in datasets]),
        provenance=tuple(t for d in datasets for t in d.provenance),
        class_names=names,
    )


def _sidecar_path(path) -> str:
    return str(path) + ".json"


def load_csv(path, class_names=None) -> LabeledDataset:
    """Parse "label, p0..p2351" rows; header auto-detected, pixels rescaled to [0,1]."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
    if not first.strip():
        raise DataError(f"{path}: empty file")
    token = first.split(",")[0].strip()
    try:
        int(token)
        skip = 0
    except ValueError:
        skip = 1
    try:
        # parse as float first: loadtxt's int path truncates "0.5" silently
        raw = np.loadtxt(path, delimiter=",", skiprows=skip, dtype=np.float64, ndmin=2)
    except ValueError as e:
        raise DataError(f"{path}: unparseable value in CSV ({e})") from e
    if raw.size == 0:
        raise DataError(f"{path}: no data rows")
    if not np.array_equal(raw, np.rint(raw)):
        raise DataError(f"{path}: non-integer value in CSV")
    raw = raw.astype(np.int64)
    if raw.shape[1] != CSV_COLUMNS:
        raise DataError(f"{path}: rows must have {CSV_COLUMNS} columns (label + pixels), got {raw.shape[1]}")
    labels = raw[:, 0]
    pixels = raw[:, 1:]
    if pixels.min() < 0 or pixels.max() > 255:
        raise DataError(f"{path}: pixel outside 0..255, saw {pixels.min()}..{pixels.max()}")
    if labels.min() < 0:
        raise DataError(f"{path}: negative label {labels.min()}")
    n = len(raw)
    # rows are H x W x C raster order
    images = pixels.reshape(n, 28, 28, 3).transpose(0, 3, 1, 2) / 255.0

    provenance = ()
    sidecar = _sidecar_path(path)
    if class_names is None and os.path.exists(sidecar):
        with open(sidecar, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        class_names = meta.get("class_names")
        provenance = tuple(meta.get("provenance", ()))
    if class_names is None:
        class_names = HAM10000_CLASSES
    return LabeledDataset(images=images, labels=labels, provenance=provenance, class_names=class_names)


def save_csv(data: LabeledDataset, path):
    """Write the CSV layout plus the provenance/class-name sidecar.

    Pixels are quantized to the nearest 1/255 step; images produced by
    ``load_csv`` or ``synthesize_toy`` sit on that grid, so they round-trip
    exactly.
    """
    pixels = np.rint(data.images * 255.0).astype(np.int64)
    rows = np.hstack([data.labels[:, None], pixels.transpose(0, 2, 3, 1).reshape(len(data), -1)])
    np.savetxt(path, rows, fmt="%d", delimiter=",")
    meta = {
        "schema": 1,
        "class_names": list(data.class_names),
        "provenance": list(data.provenance),
    }
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def split(data: LabeledDataset, test_fraction: float, seed: int):
    """Seeded uniform partition into (train, test); test size = round(fraction * N)."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must lie strictly between 0 and 1, got {test_fraction}")
    n = len(data)
    n_test = int(round(test_fraction * n))
    perm = np.random.default_rng(seed).permutation(n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return data.subset(train_idx), data.subset(test_idx)


def oversample(data: LabeledDataset, seed: int) -> LabeledDataset:
    """Duplicate minority-class examples (with replacement) until all class
    counts equal the majority count. Originals are all retained."""
    counts = data.class_counts()
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        names = [data.class_names[i] for i in empty]
        raise DataError(f"cannot oversample: classes with no examples: {names}")
    target = int(counts.max())
    rng = np.random.default_rng(seed)
    extra = []
    for k in range(data.num_classes):
        deficit = target - int(counts[k])
        if deficit:
            pool = np.flatnonzero(data.labels == k)
            extra.append(rng.choice(pool, size=deficit, replace=True))
    if not extra:
        return data
    idx = np.concatenate([np.arange(len(data)), np.concatenate(extra)])
    return data.subset(idx)


# synthetic texture knobs, balanced so the classes are learnable yet
# attackable at the epsilon scales the attack defaults use
TOY_COLOR_CONTRAST = 0.22
TOY_GRATING_AMP = 0.18
TOY_NOISE_AMP = 0.10
TOY_FREQUENCIES = (3, 4, 5)


def synthesize_toy(n_per_class: int, classes: int = 7, seed: int = 0) -> LabeledDataset:
    """Seeded 28x28x3 toy images: one parametric texture per class.

    Class k gets a distinct mean color (hue wheel), an oriented sinusoidal
    grating with class-specific angle and frequency (random phase per image),
    and uniform pixel noise. Pixels are clipped to [0,1] and quantized to the
    1/255 grid so the CSV round trip is lossless.
    """
    if n_per_class < 1:
        raise ConfigError(f"n_per_class must be >= 1, got {n_per_class}")
    if classes < 2:
        raise ConfigError(f"classes must be >= 2, got {classes}")
    rng = np.random.default_rng(seed)
    h = w = 28
    u, v = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")

    images = np.empty((n_per_class * classes, 3, h, w))
    labels = np.repeat(np.arange(classes), n_per_class)
    row = 0
    for k in range(classes):
        theta = np.pi * k / classes
        freq = TOY_FREQUENCIES[k % len(TOY_FREQUENCIES)]
        axis = (u * np.cos(theta) + v * np.sin(theta)) / h
        color = 0.5 + TOY_COLOR_CONTRAST * np.cos(2 * np.pi * (k / classes - np.arange(3) / 3.0))
        for _ in range(n_per_class):
            phase = rng.uniform(0.0, 2 * np.pi)
            grating = TOY_GRATING_AMP * np.sin(2 * np.pi * freq * axis + phase)
            noise = rng.uniform(-TOY_NOISE_AMP, TOY_NOISE_AMP, (3, h, w))
            img = color[:, None, None] + grating[None, :, :] + noise
            images[row] = np.clip(img, 0.0, 1.0)
            row += 1
    images = np.rint(images * 255.0) / 255.0
    names = HAM10000_CLASSES if classes == 7 else tuple(f"class{k}" for k in range(classes))
    return LabeledDataset(images=images, labels=labels, class_names=names)
