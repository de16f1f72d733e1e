"""Layer kernels: forward arithmetic plus the backward closures autodiff replays.

Every function takes and returns ``Tensor`` and records what the backward
pass needs. Gradient work is gated on ``requires_grad`` of each argument at
recording time, so e.g. a frozen-parameter forward pass (attack mode) never
computes or stores weight-gradient intermediates.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DataError, ShapeError
from .tensor import Tensor, snap32

__all__ = [
    "conv2d",
    "maxpool2d",
    "batchnorm2d",
    "dense",
    "relu",
    "dropout",
    "flatten",
    "softmax",
    "softmax_cross_entropy",
]


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate NCHW input with OIHW filters (im2col + matmul)."""
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be NCHW, got {x.ndim} dims {x.shape}")
    if w.ndim != 4:
        raise ShapeError(f"conv2d weight must be OIHW, got {w.ndim} dims {w.shape}")
    n, c, h, wd = x.shape
    f, ci, kh, kw = w.shape
    if ci != c:
        raise ShapeError(f"conv2d channel mismatch: input has {c}, weight expects {ci}")
    if b.shape != (f,):
        raise ShapeError(f"conv2d bias must have shape ({f},), got {b.shape}")
    if stride < 1 or padding < 0:
        raise ConfigError(f"conv2d stride must be >= 1 and padding >= 0, got {stride}/{padding}")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(
            f"conv2d output extent not positive: {h}x{wd} input, kernel {kh}x{kw}, "
            f"stride {stride}, padding {padding}"
        )

    xp = x.data
    if padding:
        xp = np.pad(xp, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # rows ordered (n, oh, ow), columns (c, kh, kw)
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    wmat = w.data.reshape(f, c * kh * kw)
    out = (cols @ wmat.T + b.data).reshape(n, ho, wo, f).transpose(0, 3, 1, 2)

    need_x, need_w, need_b = x.requires_grad, w.requires_grad, b.requires_grad
    saved_cols = cols if need_w else None
    hp, wp = h + 2 * padding, wd + 2 * padding

    def input_grad(g):
        if stride == 1:
            # full correlation of g with flipped kernels, channel axes swapped;
            # one matmul instead of a kh*kw scatter loop
            gp = np.pad(g, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
            gw = sliding_window_view(gp, (kh, kw), axis=(2, 3))
            gcols = gw.transpose(0, 2, 3, 1, 4, 5).reshape(n * hp * wp, f * kh * kw)
            wflip = w.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(c, f * kh * kw)
            dxp = (gcols @ wflip.T).reshape(n, hp, wp, c).transpose(0, 3, 1, 2)
        else:
            gmat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, f)
            dcols = (gmat @ wmat).reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
            dxp = np.zeros((n, c, hp, wp))
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[
                        :, :, :, :, i, j
                    ]
        return dxp[:, :, padding : padding + h, padding : padding + wd] if padding else dxp

    def grad_fn(g):
        dx = input_grad(g) if need_x else None
        dw = db = None
        if need_w or need_b:
            gmat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, f)
            if need_w:
                dw = (gmat.T @ saved_cols).reshape(f, c, kh, kw)
            if need_b:
                db = gmat.sum(axis=0)
        return dx, dw, db

    return Tensor.result(out, (x, w, b), grad_fn, "conv2d")


def maxpool2d(x: Tensor, window: int = 2, stride: int = 2) -> Tensor:
    """2x2/stride-2 max pooling; gradient flows to each window's first maximum."""
    if window != 2 or stride != 2:
        raise ConfigError(f"maxpool2d supports window=2 stride=2 only, got {window}/{stride}")
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d input must be NCHW, got {x.ndim} dims {x.shape}")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2d needs even spatial extents, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    # each trailing-axis group of 4 is one window, in row-major scan order
    grouped = x.data.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    idx = grouped.argmax(axis=-1)
    out = np.take_along_axis(grouped, idx[..., None], axis=-1)[..., 0]

    def grad_fn(g):
        dg = np.zeros((n, c, h2, w2, 4))
        np.put_along_axis(dg, idx[..., None], g[..., None], axis=-1)
        dx = dg.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return (dx,)

    return Tensor.result(out, (x,), grad_fn, "maxpool2d")


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray | None,
    running_var: np.ndarray | None,
    training: bool,
    momentum: float = 0.1,
    variance_floor: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization over an NCHW batch.

    Training mode normalizes by the batch mean and biased variance (floored
    by ``variance_floor``) and folds them into the running statistics in
    place. Eval mode normalizes by the running statistics only.
    """
    if x.ndim != 4:
        raise ShapeError(f"batchnorm2d input must be NCHW, got {x.ndim} dims {x.shape}")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batchnorm2d affine terms must have shape ({c},), got {gamma.shape}/{beta.shape}")
    if not training and (running_mean is None or running_var is None):
        raise ConfigError("batchnorm2d eval mode requires running statistics")

    def per_channel(a):
        return a.reshape(1, c, 1, 1)

    axes = (0, 2, 3)
    need_x, need_g, need_b = x.requires_grad, gamma.requires_grad, beta.requires_grad
    count = n * h * w

    if not training:
        # eval mode folds to a per-channel affine map
        mean = np.asarray(running_mean, dtype=np.float64)
        inv = 1.0 / np.sqrt(np.maximum(np.asarray(running_var, dtype=np.float64), variance_floor))
        scale = per_channel(gamma.data * inv)
        shift = per_channel(beta.data - gamma.data * inv * mean)
        out = x.data * scale + shift

        def eval_grad_fn(g):
            dx = g * scale if need_x else None
            dgamma = ((g * x.data).sum(axis=axes) - mean * g.sum(axis=axes)) * inv if need_g else None
            dbeta = g.sum(axis=axes) if need_b else None
            return dx, dgamma, dbeta

        return Tensor.result(out, (x, gamma, beta), eval_grad_fn, "batchnorm2d")

    mean = x.data.mean(axis=axes)
    var = x.data.var(axis=axes)
    if running_mean is not None:
        running_mean[...] = snap32((1.0 - momentum) * running_mean + momentum * mean)
        running_var[...] = snap32((1.0 - momentum) * running_var + momentum * var)

    var_f = np.maximum(var, variance_floor)
    inv = per_channel(1.0 / np.sqrt(var_f))
    xc = x.data - per_channel(mean)
    xhat = xc * inv
    out = per_channel(gamma.data) * xhat + per_channel(beta.data)

    def grad_fn(g):
        dx = dgamma = dbeta = None
        if need_x:
            dxhat = g * per_channel(gamma.data)
            # d var is zero on channels pinned at the floor
            floor_mask = per_channel((var > variance_floor).astype(np.float64))
            dvar = (dxhat * xc).sum(axis=axes, keepdims=True) * (-0.5) * inv**3 * floor_mask
            dmean = -(dxhat * inv).sum(axis=axes, keepdims=True) + dvar * (-2.0 / count) * xc.sum(
                axis=axes, keepdims=True
            )
            dx = dxhat * inv + dvar * (2.0 / count) * xc + dmean / count
        if need_g:
            dgamma = (g * xhat).sum(axis=axes)
        if need_b:
            dbeta = g.sum(axis=axes)
        return dx, dgamma, dbeta

    return Tensor.result(out, (x, gamma, beta), grad_fn, "batchnorm2d")


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map: (N,F) @ (F,K) + (K,)."""
    if x.ndim != 2 or w.ndim != 2:
        raise ShapeError(f"dense expects 2-D input and weight, got {x.shape} and {w.shape}")
    n, fin = x.shape
    fw, k = w.shape
    if fin != fw:
        raise ShapeError(f"dense inner extents disagree: input has {fin} features, weight expects {fw}")
    if b.shape != (k,):
        raise ShapeError(f"dense bias must have shape ({k},), got {b.shape}")
    out = x.data @ w.data + b.data
    need_x, need_w, need_b = x.requires_grad, w.requires_grad, b.requires_grad

    def grad_fn(g):
        dx = g @ w.data.T if need_x else None
        dw = x.data.T @ g if need_w else None
        db = g.sum(axis=0) if need_b else None
        return dx, dw, db

    return Tensor.result(out, (x, w, b), grad_fn, "dense")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0  # subgradient at 0 is 0
    return Tensor.result(np.maximum(x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, scale survivors by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return Tensor.result(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def flatten(x: Tensor) -> Tensor:
    """Collapse all but the leading batch axis."""
    return x.reshape(x.shape[0], -1)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax of a plain 2-D array."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log softmax probability of the true class."""
    if logits.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy expects N x K logits, got {logits.shape}")
    n, k = logits.shape
    y = np.asarray(labels)
    if y.shape != (n,):
        raise ShapeError(f"labels must have shape ({n},), got {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        raise DataError(f"labels must be integers, got dtype {y.dtype}")
    if n < 1:
        raise DataError("softmax_cross_entropy needs at least one example")
    if y.min() < 0 or y.max() >= k:
        raise DataError(f"label out of range [0, {k}): saw {y.min()}..{y.max()}")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    loss = -logp[np.arange(n), y].mean()

    def grad_fn(g):
        dlogits = np.exp(logp)
        dlogits[np.arange(n), y] -= 1.0
        dlogits *= float(g) / n
        return (dlogits,)

    return Tensor.result(np.asarray(loss), (logits,), grad_fn, "softmax_cross_entropy")
