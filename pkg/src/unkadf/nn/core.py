"""Parameters, dense layers, losses, Adam and finite-difference checks.

Everything works on float64 numpy arrays. Batched tensors are laid out
``(batch, time, features)``.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from ..errors import DimensionError, EvaluationError

DTYPE = np.float64


@dataclass(eq=False)
class Param:
    """A named weight array with its gradient slot and Adam moments."""

    name: str
    value: np.ndarray
    frozen: bool = False
    grad: np.ndarray = field(init=False)
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value, dtype=DTYPE)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)
        if self.frozen:
            self.freeze()

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    def freeze(self):
        self.frozen = True
        self.value.flags.writeable = False

    def zero_grad(self):
        self.grad.fill(0.0)


def param_rng(seed: int, name: str) -> np.random.Generator:
    # keyed by name so a parameter draws the same values whatever else the
    # model contains
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode())])


def init_uniform(shape, fan_in: int, rng: np.random.Generator) -> np.ndarray:
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape)


def make_param(name: str, shape, fan_in: int, seed: int) -> Param:
    return Param(name, init_uniform(shape, fan_in, param_rng(seed, name)))


def _check_dims(what: str, got, expected):
    if tuple(got) != tuple(expected):
        raise DimensionError(f"{what}: expected shape {tuple(expected)}, got {tuple(got)}")


def dense_forward(x, W, b) -> np.ndarray:
    """``tanh(W x + b)`` for a vector or for the last axis of a batch."""
    x = np.asarray(x, dtype=DTYPE)
    W = np.asarray(W, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if W.ndim != 2:
        raise DimensionError(f"W must be 2-D, got shape {W.shape}")
    if x.shape[-1] != W.shape[1]:
        raise DimensionError(
            f"x (last dim {x.shape[-1]}) does not match W columns ({W.shape[1]})")
    _check_dims("b", b.shape, (W.shape[0],))
    return np.tanh(x @ W.T + b)


def dense_backward(x, y, dy, W):
    """Backward pass of :func:`dense_forward`.

    ``y`` is the forward output. Returns ``(dx, dW, db)``, with ``dW`` and
    ``db`` summed over all leading axes.
    """
    dz = dy * (1.0 - y * y)
    k, n = W.shape
    dz2 = dz.reshape(-1, k)
    dW = dz2.T @ x.reshape(-1, n)
    db = dz2.sum(axis=0)
    dx = dz @ W
    return dx, dW, db


def mse(pred, actual) -> float:
    """Squared error averaged over every element."""
    pred = np.asarray(pred, dtype=DTYPE)
    actual = np.asarray(actual, dtype=DTYPE)
    if pred.shape != actual.shape:
        raise DimensionError(f"pred {pred.shape} and actual {actual.shape} differ")
    if pred.size == 0:
        raise DimensionError("mse of empty arrays")
    d = pred - actual
    return float(np.mean(d * d))


def mse_grad(pred, actual) -> np.ndarray:
    """Gradient of :func:`mse` with respect to ``pred``."""
    return 2.0 * (pred - actual) / pred.size


class Adam:
    """Adam over a fixed list of :class:`Param`; frozen params are skipped."""

    def __init__(self, params: Iterable[Param], lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0

    def step(self):
        self.t += 1
        adam_step(self.params, self.lr, self.beta1, self.beta2, self.eps, self.t)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def adam_step(params: Iterable[Param], lr, beta1, beta2, eps, t):
    if t < 1:
        raise ValueError("Adam step count starts at 1")
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p in params:
        if p.frozen:
            continue
        g = p.grad
        p.m *= beta1
        p.m += (1.0 - beta1) * g
        p.v *= beta2
        p.v += (1.0 - beta2) * (g * g)
        m_hat = p.m / c1
        v_hat = p.v / c2
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params


@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float]
    h: float
    tol: float

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst < self.tol

    def lines(self):
        for name, err in self.max_rel_error.items():
            yield f"{name:<16s} {err:.3e} {'ok' if err < self.tol else 'FAIL'}"


def grad_check(loss_fn: Callable[[], float], params: Iterable[Param],
               analytic: dict[str, np.ndarray] | None = None,
               h: float = 1e-5, tol: float = 1e-5) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    ``loss_fn`` re-evaluates the loss from the current parameter values.
    Analytic gradients are taken from ``analytic`` when given, else from each
    param's ``grad`` slot. Frozen params are not perturbed and not reported.
    The relative error of one element is ``|a - f| / max(|a|, |f|, 1e-12)``.
    """
    report = {}
    for p in params:
        if p.frozen:
            continue
        a_grad = analytic[p.name] if analytic is not None else p.grad.copy()
        flat = p.value.reshape(-1)
        worst = 0.0
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            lp = loss_fn()
            flat[k] = orig - h
            lm = loss_fn()
            flat[k] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise EvaluationError(f"non-finite loss while perturbing {p.name}[{k}]")
            fd = (lp - lm) / (2.0 * h)
            a = a_grad.reshape(-1)[k]
            rel = abs(a - fd) / max(abs(a), abs(fd), 1e-12)
            worst = max(worst, rel)
        report[p.name] = worst
    return GradCheckReport(report, h, tol)


class Dense:
    """``tanh(W x + b)`` layer owning its two params."""

    def __init__(self, name: str, n_in: int, n_out: int, seed: int):
        self.name = name
        self.W = make_param(f"{name}.W", (n_out, n_in), n_in, seed)
        self.b = make_param(f"{name}.b", (n_out,), n_in, seed)

    @property
    def params(self) -> list[Param]:
        return [self.W, self.b]

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]

    def forward(self, x):
        return dense_forward(x, self.W.value, self.b.value)

    def backward(self, x, y, dy):
        dx, dW, db = dense_backward(x, y, dy, self.W.value)
        self.W.grad += dW
        self.b.grad += db
        return dx
