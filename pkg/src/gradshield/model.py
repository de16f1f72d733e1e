"""A small configurable CNN classifier and its portable checkpoint format.

Architecture per block: conv -> batchnorm -> relu (-> maxpool at configured
blocks) -> dropout; then flatten -> dropout -> dense. Softmax happens in
``predict``/``loss``, not in the layer stack.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import CheckpointError, ConfigError, ShapeError
from .ops import (
    batchnorm2d,
    conv2d,
    dense,
    dropout,
    flatten,
    maxpool2d,
    relu,
    softmax,
    softmax_cross_entropy,
)
from .tensor import Parameter, Tensor

__all__ = [
    "ModelConfig",
    "Model",
    "build_model",
    "input_gradient",
    "save_checkpoint",
    "load_checkpoint",
    "parameter_fingerprint",
]

BN_MOMENTUM = 0.1
BN_VARIANCE_FLOOR = 1e-5

CHECKPOINT_MAGIC = b"GSH1"
CHECKPOINT_VERSION = 1
RUNNING_STAT_PREFIX = "bn_running_"


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 3
    height: int = 28
    width: int = 28
    conv_widths: tuple = (16, 32, 64, 64, 128)
    kernel_size: int = 3
    pool_after: tuple = (2, 4)  # 1-based block indices
    conv_dropout: float = 0.25
    head_dropout: float = 0.5
    classes: int = 7
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "conv_widths", tuple(int(v) for v in self.conv_widths))
        object.__setattr__(self, "pool_after", tuple(sorted(int(v) for v in self.pool_after)))
        self.validate()

    def validate(self):
        if len(self.conv_widths) != 5:
            raise ConfigError(f"conv_widths must list exactly 5 block widths, got {len(self.conv_widths)}")
        if any(v < 1 for v in self.conv_widths):
            raise ConfigError(f"conv widths must be positive, got {self.conv_widths}")
        if self.classes < 2:
            raise ConfigError(f"classes must be >= 2, got {self.classes}")
        if self.in_channels < 1 or self.height < 1 or self.width < 1:
            raise ConfigError(f"invalid input shape {self.in_channels}x{self.height}x{self.width}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if len(set(self.pool_after)) != len(self.pool_after) or any(
            i < 1 or i > 5 for i in self.pool_after
        ):
            raise ConfigError(f"pool_after must be distinct block indices in 1..5, got {self.pool_after}")
        for name in ("conv_dropout", "head_dropout"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {rate}")
        self.spatial_extents()

    def spatial_extents(self):
        """(height, width) after each block; raises if pooling hits an odd extent."""
        h, w = self.height, self.width
        extents = []
        for i in range(1, 6):
            if i in self.pool_after:
                if h % 2 or w % 2:
                    raise ConfigError(
                        f"pooling after block {i} needs even extents, got {h}x{w} "
                        f"(pool_after={self.pool_after})"
                    )
                h, w = h // 2, w // 2
            extents.append((h, w))
        return extents

    def head_features(self) -> int:
        h, w = self.spatial_extents()[-1]
        return self.conv_widths[-1] * h * w

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


class Model:
    """Layer stack plus parameter store; built via ``build_model``."""

    def __init__(self, config: ModelConfig, params: dict, running: dict, order: list):
        self.config = config
        self.params = params
        self.running = running
        self._order = order  # checkpoint entry order: params, then running stats
        self.mode = "train"

    def train(self):
        self.mode = "train"
        return self

    def eval(self):
        self.mode = "eval"
        return self

    def parameters(self):
        return [self.params[n] for n in self._order if n in self.params]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def forward(self, x: Tensor, rng: np.random.Generator | None = None, frozen: bool = False) -> Tensor:
        """Logits for a batch. ``frozen`` feeds parameters as constants so no
        parameter gradients are computed or accumulated."""
        cfg = self.config
        expected = (cfg.in_channels, cfg.height, cfg.width)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ShapeError(f"model input must be N x {expected}, got {x.shape}")
        training = self.mode == "train"
        p = lambda name: self.params[name].as_input(frozen)

        h = x
        for i in range(1, 6):
            h = conv2d(h, p(f"block{i}_conv_w"), p(f"block{i}_conv_b"), stride=1, padding=cfg.kernel_size // 2)
            h = batchnorm2d(
                h,
                p(f"block{i}_bn_gamma"),
                p(f"block{i}_bn_beta"),
                self.running[f"{RUNNING_STAT_PREFIX}mean_block{i}"],
                self.running[f"{RUNNING_STAT_PREFIX}var_block{i}"],
                training,
                momentum=BN_MOMENTUM,
                variance_floor=BN_VARIANCE_FLOOR,
            )
            h = relu(h)
            if i in cfg.pool_after:
                h = maxpool2d(h)
            h = dropout(h, cfg.conv_dropout, training, rng)
        h = flatten(h)
        h = dropout(h, cfg.head_dropout, training, rng)
        return dense(h, p("head_w"), p("head_b"))

    def predict(self, x):
        """Eval-mode class probabilities and argmax labels (ties to lowest index)."""
        xt = x if isinstance(x, Tensor) else Tensor(x)
        prev = self.mode
        self.eval()
        try:
            logits = self.forward(xt, frozen=True)
        finally:
            self.mode = prev
        probs = softmax(logits.data)
        return probs, probs.argmax(axis=1)

    def loss(self, x, y, rng: np.random.Generator | None = None, frozen: bool = False) -> Tensor:
        xt = x if isinstance(x, Tensor) else Tensor(x)
        logits = self.forward(xt, rng=rng, frozen=frozen)
        return softmax_cross_entropy(logits, y)

    def checkpoint_entries(self):
        """Ordered (name, live array) pairs covering parameters and running stats."""
        out = []
        for name in self._order:
            if name in self.params:
                out.append((name, self.params[name].tensor.data))
            else:
                out.append((name, self.running[name]))
        return out


def build_model(config: ModelConfig) -> Model:
    """Deterministic function of ``config.init_seed``: He-scaled normal conv and
    dense weights, zero biases, unit-gamma batchnorm."""
    rng = np.random.default_rng(config.init_seed)
    params: dict[str, Parameter] = {}
    running: dict[str, np.ndarray] = {}
    order: list[str] = []

    def add(name, value):
        params[name] = Parameter(name, value)
        order.append(name)

    k = config.kernel_size
    c_in = config.in_channels
    for i, width in enumerate(config.conv_widths, start=1):
        fan_in = c_in * k * k
        add(f"block{i}_conv_w", rng.normal(0.0, np.sqrt(2.0 / fan_in), (width, c_in, k, k)))
        add(f"block{i}_conv_b", np.zeros(width))
        add(f"block{i}_bn_gamma", np.ones(width))
        add(f"block{i}_bn_beta", np.zeros(width))
        running[f"{RUNNING_STAT_PREFIX}mean_block{i}"] = np.zeros(width)
        running[f"{RUNNING_STAT_PREFIX}var_block{i}"] = np.ones(width)
        c_in = width

    feats = config.head_features()
    add("head_w", rng.normal(0.0, np.sqrt(2.0 / feats), (feats, config.classes)))
    add("head_b", np.zeros(config.classes))
    order.extend(sorted(running))
    return Model(config, params, running, order)


def input_gradient(model: Model, x, y) -> Tensor:
    """Gradient of the mean loss with respect to the input batch.

    Always evaluated against the deployed inference function: batchnorm uses
    running stats and dropout is off, whatever mode the model is in. Parameter
    gradient accumulators are left untouched.
    """
    data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    xt = Tensor(np.array(data), requires_grad=True)
    prev = model.mode
    model.eval()
    try:
        loss = model.loss(xt, y, frozen=True)
    finally:
        model.mode = prev
    loss.backward()
    return Tensor(xt.grad)


def _canonical_config_bytes(config: ModelConfig) -> bytes:
    return json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(model: Model, path):
    entries = model.checkpoint_entries()
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    cfg = _canonical_config_bytes(model.config)
    blob += struct.pack("<I", len(cfg))
    blob += cfg
    blob += struct.pack("<I", len(entries))
    for name, arr in entries:
        nb = name.encode("utf-8")
        blob += struct.pack("<I", len(nb))
        blob += nb
        blob += struct.pack("<I", arr.ndim)
        for extent in arr.shape:
            blob += struct.pack("<I", extent)
        blob += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(blob)


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError(
                f"truncated checkpoint: wanted {n} bytes at offset {self.pos}, have {len(self.raw)}"
            )
        out = self.raw[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path) -> Model:
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(4) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic: {path} is not a recognized checkpoint")
    version = r.u32()
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})")
    try:
        cfg_dict = json.loads(r.take(r.u32()).decode("utf-8"))
        config = ModelConfig.from_dict(cfg_dict)
    except (ValueError, TypeError, ConfigError) as e:
        raise CheckpointError(f"unreadable embedded config: {e}") from e

    model = build_model(config)
    expected = dict(model.checkpoint_entries())
    count = r.u32()
    if count != len(expected):
        raise CheckpointError(f"checkpoint lists {count} entries, config implies {len(expected)}")
    seen = set()
    for _ in range(count):
        name = r.take(r.u32()).decode("utf-8")
        if name not in expected:
            raise CheckpointError(f"unexpected entry {name!r} for this config")
        if name in seen:
            raise CheckpointError(f"duplicate entry {name!r}")
        seen.add(name)
        rank = r.u32()
        shape = tuple(r.u32() for _ in range(rank))
        target = expected[name]
        if shape != target.shape:
            raise CheckpointError(f"entry {name!r} has shape {shape}, config implies {target.shape}")
        n_values = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(r.take(4 * n_values), dtype="<f4").reshape(shape)
        np.copyto(target, values.astype(np.float64))
    if r.pos != len(r.raw):
        raise CheckpointError(f"{len(r.raw) - r.pos} trailing bytes after last entry")
    return model.eval()


def parameter_fingerprint(model: Model) -> str:
    """Hex digest over every parameter and running stat; cheap mutation check."""
    h = hashlib.sha256()
    for name, arr in model.checkpoint_entries():
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return h.hexdigest()
