import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unkadf.errors import DimensionError, EvaluationError
from unkadf.nn import (Adam, Dense, Param, adam_step, dense_backward, dense_forward,
                       grad_check, make_param, mse, mse_grad)


def test_dense_matches_scalar_loops(rng):
    W = rng.normal(size=(3, 4))
    b = rng.normal(size=3)
    x = rng.normal(size=4)
    y = dense_forward(x, W, b)
    for i in range(3):
        s = b[i]
        for j in range(4):
            s += W[i, j] * x[j]
        assert y[i] == pytest.approx(np.tanh(s), abs=1e-15)


def test_dense_batched_equals_per_vector(rng):
    W = rng.normal(size=(3, 4))
    b = rng.normal(size=3)
    X = rng.normal(size=(2, 5, 4))
    Y = dense_forward(X, W, b)
    for bi in range(2):
        for t in range(5):
            np.testing.assert_allclose(Y[bi, t], dense_forward(X[bi, t], W, b), atol=1e-15)


def test_dense_dimension_mismatch():
    with pytest.raises(DimensionError):
        dense_forward(np.ones(3), np.ones((2, 4)), np.ones(2))
    with pytest.raises(DimensionError):
        dense_forward(np.ones(4), np.ones((2, 4)), np.ones(3))


def test_dense_backward_central_differences(rng):
    W = rng.normal(size=(3, 4))
    b = rng.normal(size=3)
    x = rng.normal(size=(2, 4))
    dy = rng.normal(size=(2, 3))
    y = dense_forward(x, W, b)
    dx, dW, db = dense_backward(x, y, dy, W)

    def f(W_, b_, x_):
        return float(np.sum(dense_forward(x_, W_, b_) * dy))

    h = 1e-6
    for arr, grad in ((W, dW), (b, db), (x, dx)):
        flat = arr.reshape(-1)
        num = np.empty_like(flat)
        for k in range(flat.size):
            o = flat[k]
            flat[k] = o + h
            lp = f(W, b, x)
            flat[k] = o - h
            lm = f(W, b, x)
            flat[k] = o
            num[k] = (lp - lm) / (2 * h)
        np.testing.assert_allclose(grad.reshape(-1), num, rtol=1e-6, atol=1e-9)


def test_mse_and_gradient():
    p = np.array([[1.0, 2.0], [3.0, 5.0]])
    a = np.array([[1.0, 1.0], [1.0, 1.0]])
    assert mse(p, a) == pytest.approx((0 + 1 + 4 + 16) / 4)
    np.testing.assert_allclose(mse_grad(p, a), 2 * (p - a) / 4)
    with pytest.raises(DimensionError):
        mse(np.ones(3), np.ones(4))


def _adam_reference(values, grads, lr, b1, b2, eps):
    """Scalar-loop Adam on a list of per-step gradients."""
    x = list(values)
    m = [0.0] * len(x)
    v = [0.0] * len(x)
    for t, g in enumerate(grads, start=1):
        for k in range(len(x)):
            m[k] = b1 * m[k] + (1 - b1) * g[k]
            v[k] = b2 * v[k] + (1 - b2) * g[k] * g[k]
            mh = m[k] / (1 - b1 ** t)
            vh = v[k] / (1 - b2 ** t)
            x[k] -= lr * mh / (vh ** 0.5 + eps)
    return x


def test_adam_matches_scalar_reference(rng):
    p = Param("w", rng.normal(size=5))
    start = p.value.copy()
    grads = [rng.normal(size=5) for _ in range(7)]
    opt = Adam([p], lr=0.01)
    for g in grads:
        p.grad[...] = g
        opt.step()
    expected = _adam_reference(start, grads, 0.01, 0.9, 0.999, 1e-8)
    np.testing.assert_allclose(p.value, expected, rtol=0, atol=1e-14)


def test_adam_first_step_moves_by_lr():
    # bias correction makes the first step lr * sign(g) (up to eps)
    p = Param("w", np.zeros(3))
    p.grad[...] = [2.0, -0.5, 1e-3]
    adam_step([p], 0.1, 0.9, 0.999, 1e-8, 1)
    np.testing.assert_allclose(p.value, [-0.1, 0.1, -0.1], rtol=1e-5)


def test_adam_skips_frozen_and_protects_values():
    p = Param("w", np.ones(3), frozen=True)
    q = Param("u", np.ones(3))
    for x in (p, q):
        x.grad[...] = 1.0
    Adam([p, q], lr=0.5).step()
    np.testing.assert_array_equal(p.value, np.ones(3))
    assert np.all(q.value < 1.0)
    with pytest.raises(ValueError):
        p.value[0] = 2.0


def test_adam_step_count_starts_at_one():
    with pytest.raises(ValueError):
        adam_step([Param("w", np.zeros(1))], 0.1, 0.9, 0.999, 1e-8, 0)


def test_param_init_depends_on_name_and_seed():
    a = make_param("enc.W", (3, 4), 4, seed=1)
    b = make_param("enc.W", (3, 4), 4, seed=1)
    c = make_param("dec.W", (3, 4), 4, seed=1)
    d = make_param("enc.W", (3, 4), 4, seed=2)
    np.testing.assert_array_equal(a.value, b.value)
    assert not np.array_equal(a.value, c.value)
    assert not np.array_equal(a.value, d.value)
    assert np.all(np.abs(a.value) <= 0.5)


def test_grad_check_flags_wrong_gradient(rng):
    layer = Dense("d", 3, 2, seed=0)
    x = rng.normal(size=(4, 3))
    target = rng.normal(size=(4, 2))

    def loss():
        return mse(layer.forward(x), target)

    y = layer.forward(x)
    layer.backward(x, y, mse_grad(y, target))
    assert grad_check(loss, layer.params).passed
    layer.W.grad *= 1.01
    report = grad_check(loss, layer.params)
    assert not report.passed
    assert any("FAIL" in line for line in report.lines())


def test_grad_check_skips_frozen_and_rejects_nan():
    p = Param("w", np.ones(2), frozen=True)
    q = Param("u", np.ones(2))
    report = grad_check(lambda: float(np.sum(q.value ** 2)), [p, q],
                        {"u": 2 * q.value.copy()})
    assert list(report.max_rel_error) == ["u"]
    with pytest.raises(EvaluationError):
        grad_check(lambda: float("nan"), [q], {"u": np.zeros(2)})


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8))
def test_dense_output_bounded(xs):
    x = np.array(xs)
    W = np.ones((2, x.size))
    y = dense_forward(x, W, np.zeros(2))
    assert np.all(np.abs(y) <= 1.0)
