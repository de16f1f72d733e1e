"""Brute-force reference implementations used to check the fast kernels.

Everything here is written the slow, obvious way (explicit Python loops,
direct formulas) and must stay independent of the library internals: the
only allowed import is numpy.
"""

import numpy as np


def conv2d_forward(x, w, b, stride=1, padding=0):
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, f, ho, wo))
    for ni in range(n):
        for fi in range(f):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[ni, :, i * stride : i * stride + kh, j * stride : j * stride + kw]
                    out[ni, fi, i, j] = (patch * w[fi]).sum() + b[fi]
    return out


def conv2d_backward(x, w, g, stride=1, padding=0):
    """Gradients of sum(conv * g) w.r.t. x, w, b by scattering each product."""
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    db = np.zeros(f)
    ho, wo = g.shape[2], g.shape[3]
    for ni in range(n):
        for fi in range(f):
            for i in range(ho):
                for j in range(wo):
                    gij = g[ni, fi, i, j]
                    patch = xp[ni, :, i * stride : i * stride + kh, j * stride : j * stride + kw]
                    dw[fi] += gij * patch
                    dxp[ni, :, i * stride : i * stride + kh, j * stride : j * stride + kw] += gij * w[fi]
                    db[fi] += gij
    if padding:
        dx = dxp[:, :, padding:-padding, padding:-padding]
    else:
        dx = dxp
    return dx, dw, db


def maxpool2x2_forward(x):
    n, c, h, w = x.shape
    out = np.zeros((n, c, h // 2, w // 2))
    for ni in range(n):
        for ci in range(c):
            for i in range(h // 2):
                for j in range(w // 2):
                    out[ni, ci, i, j] = x[ni, ci, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2].max()
    return out


def maxpool2x2_backward(x, g):
    """Routes each upstream value to the first maximum in its window."""
    n, c, h, w = x.shape
    dx = np.zeros_like(x)
    for ni in range(n):
        for ci in range(c):
            for i in range(h // 2):
                for j in range(w // 2):
                    win = x[ni, ci, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2]
                    k = int(np.argmax(win))  # first occurrence on ties
                    dx[ni, ci, 2 * i + k // 2, 2 * j + k % 2] += g[ni, ci, i, j]
    return dx


def dense_forward(x, w, b):
    n, d = x.shape
    k = w.shape[1]
    out = np.zeros((n, k))
    for ni in range(n):
        for ki in range(k):
            s = b[ki]
            for di in range(d):
                s += x[ni, di] * w[di, ki]
            out[ni, ki] = s
    return out


def dense_backward(x, w, g):
    n, d = x.shape
    k = w.shape[1]
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    db = np.zeros(k)
    for ni in range(n):
        for ki in range(k):
            gik = g[ni, ki]
            db[ki] += gik
            for di in range(d):
                dx[ni, di] += gik * w[di, ki]
                dw[di, ki] += gik * x[ni, di]
    return dx, dw, db


def batchnorm_forward(x, gamma, beta, mean, var, floor=1e-5):
    """Normalization from given statistics; biased variance is the caller's job."""
    c = x.shape[1]
    out = np.zeros_like(x)
    for ci in range(c):
        inv = 1.0 / np.sqrt(max(var[ci], floor))
        out[:, ci] = gamma[ci] * (x[:, ci] - mean[ci]) * inv + beta[ci]
    return out


def batch_statistics(x):
    c = x.shape[1]
    mean = np.zeros(c)
    var = np.zeros(c)
    for ci in range(c):
        vals = x[:, ci].ravel()
        mean[ci] = vals.mean()
        var[ci] = ((vals - mean[ci]) ** 2).mean()
    return mean, var


def softmax_rows(z):
    out = np.zeros_like(z)
    for i in range(z.shape[0]):
        e = np.exp(z[i] - z[i].max())
        out[i] = e / e.sum()
    return out


def cross_entropy_mean(logits, labels):
    n = logits.shape[0]
    p = softmax_rows(logits)
    total = 0.0
    for i in range(n):
        total += -np.log(p[i, labels[i]])
    return total / n


def cross_entropy_dlogits(logits, labels):
    n = logits.shape[0]
    d = softmax_rows(logits)
    for i in range(n):
        d[i, labels[i]] -= 1.0
    return d / n


def relu_forward(x):
    return np.where(x > 0, x, 0.0)


def adam_step_reference(p, g, m, v, t, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """One textbook Adam update; returns new (p, m, v)."""
    m = b1 * m + (1 - b1) * g
    v = b2 * v + (1 - b2) * g * g
    mh = m / (1 - b1**t)
    vh = v / (1 - b2**t)
    return p - lr * mh / (np.sqrt(vh) + eps), m, v
