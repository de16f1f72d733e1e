import numpy as np
import pytest

from gradshield import ConfigError, DataError, ShapeError, Tensor
from gradshield.ops import (
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

import oracles


def backprop_ones(out):
    """Sum the output and backward, so every grad is w.r.t. sum(out)."""
    out.sum().backward()


def test_conv2d_forward_matches_loop_oracle(rng):
    for _ in range(30):
        n, c, f = rng.integers(1, 4, size=3)
        k = int(rng.choice([1, 3]))
        pad = int(rng.choice([0, 1]))
        stride = int(rng.choice([1, 2]))
        h = int(rng.integers(k, 8))
        w_ = int(rng.integers(k, 8))
        x = rng.normal(size=(n, c, h, w_))
        w = rng.normal(size=(f, c, k, k))
        b = rng.normal(size=f)
        got = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=pad).data
        want = oracles.conv2d_forward(x, w, b, stride=stride, padding=pad)
        assert np.abs(got - want).max() <= 1e-5


def test_conv2d_backward_matches_loop_oracle(rng):
    for _ in range(15):
        n, c, f = rng.integers(1, 3, size=3)
        k = int(rng.choice([1, 3]))
        pad = int(rng.choice([0, 1]))
        stride = int(rng.choice([1, 2]))
        h = int(rng.integers(k + 1, 7))
        w_ = int(rng.integers(k + 1, 7))
        x = rng.normal(size=(n, c, h, w_))
        w = rng.normal(size=(f, c, k, k))
        b = rng.normal(size=f)
        xt = Tensor(x, requires_grad=True)
        wt, bt = Tensor(w, requires_grad=True), Tensor(b, requires_grad=True)
        out = conv2d(xt, wt, bt, stride=stride, padding=pad)
        backprop_ones(out)
        g = np.ones(out.data.shape)
        dx, dw, db = oracles.conv2d_backward(x, w, g, stride=stride, padding=pad)
        assert np.abs(xt.grad - dx).max() <= 1e-5
        assert np.abs(wt.grad - dw).max() <= 1e-5
        assert np.abs(bt.grad - db).max() <= 1e-5


def test_conv2d_backward_weighted_upstream(rng):
    # nonuniform upstream gradient catches transposed-kernel mistakes
    x = rng.normal(size=(2, 3, 6, 6))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    r = rng.normal(size=(2, 4, 6, 6))
    xt = Tensor(x, requires_grad=True)
    wt = Tensor(w, requires_grad=True)
    out = conv2d(xt, wt, Tensor(b), stride=1, padding=1)
    (out * Tensor(r)).sum().backward()
    dx, dw, _ = oracles.conv2d_backward(x, w, r, stride=1, padding=1)
    assert np.abs(xt.grad - dx).max() <= 1e-5
    assert np.abs(wt.grad - dw).max() <= 1e-5


def test_maxpool_forward_and_backward_match_oracle(rng):
    for _ in range(20):
        n, c = rng.integers(1, 4, size=2)
        h = int(rng.integers(1, 5)) * 2
        w_ = int(rng.integers(1, 5)) * 2
        x = rng.normal(size=(n, c, h, w_))
        xt = Tensor(x, requires_grad=True)
        out = maxpool2d(xt)
        assert np.abs(out.data - oracles.maxpool2x2_forward(x)).max() <= 1e-5
        backprop_ones(out)
        want = oracles.maxpool2x2_backward(x, np.ones(out.data.shape))
        assert np.abs(xt.grad - want).max() <= 1e-5


def test_maxpool_breaks_ties_toward_first_index():
    x = np.zeros((1, 1, 2, 2))  # all equal: gradient goes to position (0, 0)
    xt = Tensor(x, requires_grad=True)
    backprop_ones(maxpool2d(xt))
    want = np.zeros((1, 1, 2, 2))
    want[0, 0, 0, 0] = 1.0
    assert np.array_equal(xt.grad, want)


def test_maxpool_rejects_odd_extents():
    with pytest.raises(ShapeError):
        maxpool2d(Tensor(np.zeros((1, 1, 3, 4))))
    with pytest.raises(ConfigError):
        maxpool2d(Tensor(np.zeros((1, 1, 4, 4))), window=3)


def test_dense_matches_loop_oracle(rng):
    for _ in range(20):
        n = int(rng.integers(1, 5))
        d = int(rng.integers(1, 8))
        k = int(rng.integers(1, 6))
        x = rng.normal(size=(n, d))
        w = rng.normal(size=(d, k))
        b = rng.normal(size=k)
        xt = Tensor(x, requires_grad=True)
        wt, bt = Tensor(w, requires_grad=True), Tensor(b, requires_grad=True)
        out = dense(xt, wt, bt)
        assert np.abs(out.data - oracles.dense_forward(x, w, b)).max() <= 1e-5
        backprop_ones(out)
        dx, dw, db = oracles.dense_backward(x, w, np.ones((n, k)))
        assert np.abs(xt.grad - dx).max() <= 1e-5
        assert np.abs(wt.grad - dw).max() <= 1e-5
        assert np.abs(bt.grad - db).max() <= 1e-5


def test_batchnorm_train_mode_matches_formula_oracle(rng):
    x = rng.normal(loc=2.0, scale=3.0, size=(4, 5, 3, 3))
    gamma = rng.normal(size=5)
    beta = rng.normal(size=5)
    out = batchnorm2d(Tensor(x), Tensor(gamma), Tensor(beta), None, None, training=True)
    mean, var = oracles.batch_statistics(x)
    want = oracles.batchnorm_forward(x, gamma, beta, mean, var)
    assert np.abs(out.data - want).max() <= 1e-5


def test_batchnorm_eval_mode_uses_running_stats(rng):
    x = rng.normal(size=(2, 3, 4, 4))
    gamma = np.array([1.0, 2.0, 0.5])
    beta = np.array([0.0, -1.0, 3.0])
    rm = np.array([0.1, -0.2, 0.3])
    rv = np.array([1.5, 0.7, 2.0])
    out = batchnorm2d(
        Tensor(x), Tensor(gamma), Tensor(beta), running_mean=rm, running_var=rv, training=False
    )
    want = oracles.batchnorm_forward(x, gamma, beta, rm, rv)
    assert np.abs(out.data - want).max() <= 1e-5


def test_batchnorm_running_stats_update(rng):
    x = rng.normal(loc=1.0, size=(8, 2, 4, 4))
    rm = np.zeros(2)
    rv = np.ones(2)
    batchnorm2d(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), running_mean=rm, running_var=rv, training=True)
    mean, var = oracles.batch_statistics(x)
    f32 = lambda a: a.astype(np.float32).astype(np.float64)
    assert np.allclose(rm, f32(0.9 * 0.0 + 0.1 * mean))
    assert np.allclose(rv, f32(0.9 * 1.0 + 0.1 * var))


def test_batchnorm_variance_floor_blocks_blowup():
    x = np.full((2, 1, 2, 2), 5.0)  # zero variance channel
    out = batchnorm2d(Tensor(x), Tensor(np.ones(1)), Tensor(np.zeros(1)), None, None, training=True)
    assert np.all(np.isfinite(out.data))
    assert np.abs(out.data).max() <= 1e-5 * 1e5  # centered values are 0 / sqrt(floor)


def test_batchnorm_eval_without_stats_is_an_error():
    with pytest.raises(ConfigError):
        batchnorm2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.ones(1)), Tensor(np.zeros(1)), None, None, training=False)


def test_batchnorm_eval_gradients_match_affine_form(rng):
    x = rng.normal(size=(3, 2, 4, 4))
    r = rng.normal(size=(3, 2, 4, 4))
    gamma, beta = rng.normal(size=2), rng.normal(size=2)
    rm, rv = rng.normal(size=2), rng.uniform(0.5, 2.0, size=2)
    xt = Tensor(x, requires_grad=True)
    gt, bt = Tensor(gamma, requires_grad=True), Tensor(beta, requires_grad=True)
    out = batchnorm2d(xt, gt, bt, running_mean=rm, running_var=rv, training=False)
    (out * Tensor(r)).sum().backward()
    inv = 1.0 / np.sqrt(np.maximum(rv, 1e-5))
    xhat = (x - rm.reshape(1, 2, 1, 1)) * inv.reshape(1, 2, 1, 1)
    assert np.abs(xt.grad - r * (gamma * inv).reshape(1, 2, 1, 1)).max() <= 1e-5
    assert np.abs(gt.grad - (r * xhat).sum(axis=(0, 2, 3))).max() <= 1e-5
    assert np.abs(bt.grad - r.sum(axis=(0, 2, 3))).max() <= 1e-5


def test_relu_forward_and_mask_gradient(rng):
    x = rng.normal(size=(3, 4))
    xt = Tensor(x, requires_grad=True)
    out = relu(xt)
    assert np.array_equal(out.data, oracles.relu_forward(x))
    backprop_ones(out)
    assert np.array_equal(xt.grad, (x > 0).astype(float))


def test_dropout_eval_mode_is_identity(rng):
    x = Tensor(rng.normal(size=(2, 3)))
    assert dropout(x, 0.5, training=False) is x
    assert dropout(x, 0.0, training=True, rng=rng) is x


def test_dropout_train_mode_scales_survivors(rng):
    x = np.ones((1000,))
    out = dropout(Tensor(x), 0.25, training=True, rng=rng)
    vals = np.unique(out.data)
    assert set(np.round(vals, 10)) <= {0.0, round(1 / 0.75, 10)}
    # survivor rate concentrates near 0.75
    assert 0.68 <= (out.data > 0).mean() <= 0.82


def test_dropout_gradient_matches_mask(rng):
    x = Tensor(np.ones((50,)), requires_grad=True)
    out = dropout(x, 0.5, training=True, rng=rng)
    backprop_ones(out)
    assert np.array_equal(x.grad, np.where(out.data > 0, 2.0, 0.0))


def test_dropout_validates_rate_and_rng(rng):
    with pytest.raises(ConfigError):
        dropout(Tensor(np.ones(3)), 1.0, training=True, rng=rng)
    with pytest.raises(ConfigError):
        dropout(Tensor(np.ones(3)), -0.1, training=True, rng=rng)
    with pytest.raises(ConfigError):
        dropout(Tensor(np.ones(3)), 0.5, training=True)


def test_flatten_keeps_batch_dimension(rng):
    x = Tensor(rng.normal(size=(4, 2, 3, 3)), requires_grad=True)
    out = flatten(x)
    assert out.data.shape == (4, 18)
    backprop_ones(out)
    assert x.grad.shape == (4, 2, 3, 3)


def test_softmax_matches_oracle_and_is_stable(rng):
    z = rng.normal(size=(5, 7)) * 3
    assert np.abs(softmax(z) - oracles.softmax_rows(z)).max() <= 1e-5
    big = softmax(np.array([[1e4, 0.0, -1e4]]))
    assert np.all(np.isfinite(big))
    assert big.sum() == pytest.approx(1.0)


def test_cross_entropy_matches_oracle(rng):
    for _ in range(20):
        n = int(rng.integers(1, 6))
        k = int(rng.integers(2, 8))
        z = rng.normal(size=(n, k)) * 2
        y = rng.integers(0, k, size=n)
        zt = Tensor(z, requires_grad=True)
        loss = softmax_cross_entropy(zt, y)
        assert abs(loss.data.item() - oracles.cross_entropy_mean(z, y)) <= 1e-5
        loss.backward()
        assert np.abs(zt.grad - oracles.cross_entropy_dlogits(z, y)).max() <= 1e-5


def test_cross_entropy_rejects_bad_labels():
    z = Tensor(np.zeros((2, 3)))
    with pytest.raises(DataError):
        softmax_cross_entropy(z, np.array([0, 3]))
    with pytest.raises(DataError):
        softmax_cross_entropy(z, np.array([-1, 0]))
    with pytest.raises(ShapeError):
        softmax_cross_entropy(z, np.array([0]))  # length mismatch
