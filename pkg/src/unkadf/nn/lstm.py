"""LSTM cell: single-step reference and batched sequence layer.

Gate equations, with sigma the logistic function::

    i = sigma(W_i x + U_i h + b_i)      f = sigma(W_f x + U_f h + b_f)
    o = sigma(W_o x + U_o h + b_o)      theta = tanh(W_theta x + U_theta h + b_theta)
    c' = f * c + i * theta              h' = o * tanh(c')

The four gate blocks are stored stacked as ``W`` (4m, n), ``U`` (4m, m) and
``b`` (4m,) in the order i, f, o, theta.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DimensionError
from .core import DTYPE, Param, init_uniform, param_rng
from . import _kernels_py

try:
    from . import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

GATES = ("i", "f", "o", "theta")
# declared order of the twelve named blocks (serialization order)
BLOCK_NAMES = tuple(f"W_{g}" for g in GATES) + tuple(f"U_{g}" for g in GATES) \
    + tuple(f"b_{g}" for g in GATES)

_backend = "cython" if _kernels_c is not None else "python"


def available_backends():
    return ("cython", "python") if _kernels_c is not None else ("python",)


def get_backend() -> str:
    return _backend


def set_backend(name: str):
    """Select the recurrence kernels: ``"cython"`` or ``"python"``."""
    global _backend
    if name not in ("cython", "python"):
        raise ConfigError(f"unknown backend {name!r}")
    if name == "cython" and _kernels_c is None:
        raise ConfigError("compiled kernels are not built; reinstall the package")
    _backend = name


def _kernels():
    return _kernels_c if _backend == "cython" else _kernels_py


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, m: int) -> "LstmState":
        return cls(np.zeros(m), np.zeros(m))


class LstmCellParams:
    """Weights of one LSTM cell as three stacked :class:`Param` objects."""

    def __init__(self, W, U, b, prefix="lstm", frozen=False):
        W = np.asarray(W, dtype=DTYPE)
        U = np.asarray(U, dtype=DTYPE)
        b = np.asarray(b, dtype=DTYPE)
        if U.ndim != 2 or U.shape[0] != 4 * U.shape[1]:
            raise DimensionError(f"U must have shape (4m, m), got {U.shape}")
        m = U.shape[1]
        if W.ndim != 2 or W.shape[0] != 4 * m:
            raise DimensionError(f"W must have shape (4m, n) with m={m}, got {W.shape}")
        if b.shape != (4 * m,):
            raise DimensionError(f"b must have shape ({4 * m},), got {b.shape}")
        self.prefix = prefix
        self.W = Param(f"{prefix}.W", W, frozen)
        self.U = Param(f"{prefix}.U", U, frozen)
        self.b = Param(f"{prefix}.b", b, frozen)

    @classmethod
    def init(cls, n: int, m: int, seed: int, prefix="lstm") -> "LstmCellParams":
        W = init_uniform((4 * m, n), n, param_rng(seed, f"{prefix}.W"))
        U = init_uniform((4 * m, m), m, param_rng(seed, f"{prefix}.U"))
        b = init_uniform((4 * m,), m, param_rng(seed, f"{prefix}.b"))
        return cls(W, U, b, prefix)

    @classmethod
    def zeros(cls, n: int, m: int, prefix="lstm") -> "LstmCellParams":
        return cls(np.zeros((4 * m, n)), np.zeros((4 * m, m)), np.zeros(4 * m), prefix)

    @classmethod
    def from_blocks(cls, blocks: dict, prefix="lstm", frozen=False) -> "LstmCellParams":
        """Build from the twelve named blocks ``W_i ... b_theta``."""
        W = np.vstack([blocks[f"W_{g}"] for g in GATES])
        U = np.vstack([blocks[f"U_{g}"] for g in GATES])
        b = np.concatenate([blocks[f"b_{g}"] for g in GATES])
        return cls(W, U, b, prefix, frozen)

    @property
    def n(self) -> int:
        return self.W.shape[1]

    @property
    def m(self) -> int:
        return self.U.shape[1]

    @property
    def params(self) -> list[Param]:
        return [self.W, self.U, self.b]

    @property
    def frozen(self) -> bool:
        return all(p.frozen for p in self.params)

    def freeze(self):
        for p in self.params:
            p.freeze()

    def blocks(self) -> dict[str, np.ndarray]:
        """The twelve named gate blocks (views) in declared order."""
        m = self.m
        out = {}
        for k, g in enumerate(GATES):
            out[f"W_{g}"] = self.W.value[k * m:(k + 1) * m]
        for k, g in enumerate(GATES):
            out[f"U_{g}"] = self.U.value[k * m:(k + 1) * m]
        for k, g in enumerate(GATES):
            out[f"b_{g}"] = self.b.value[k * m:(k + 1) * m]
        return out

    def copy(self, prefix=None, frozen=False) -> "LstmCellParams":
        return LstmCellParams(self.W.value.copy(), self.U.value.copy(),
                              self.b.value.copy(), prefix or self.prefix, frozen)

    def n_params(self) -> int:
        return sum(p.size for p in self.params)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def lstm_step(x, prev: LstmState, p: LstmCellParams) -> LstmState:
    """One step of the cell for a single input vector."""
    x = np.asarray(x, dtype=DTYPE)
    m, n = p.m, p.n
    if x.shape != (n,):
        raise DimensionError(f"x must have shape ({n},), got {x.shape}")
    if prev.h.shape != (m,) or prev.c.shape != (m,):
        raise DimensionError(f"state vectors must have length {m}")
    z = p.W.value @ x + p.U.value @ prev.h + p.b.value
    i = _sigmoid(z[:m])
    f = _sigmoid(z[m:2 * m])
    o = _sigmoid(z[2 * m:3 * m])
    theta = np.tanh(z[3 * m:])
    c = f * prev.c + i * theta
    h = o * np.tanh(c)
    return LstmState(h, c)


class LstmCache:
    __slots__ = ("X", "H", "C", "G")

    def __init__(self, X, H, C, G):
        self.X, self.H, self.C, self.G = X, H, C, G


def lstm_forward(p: LstmCellParams, X):
    """Run the cell over ``X`` (B, T, n) from a zero state.

    Returns ``(H, C, cache)`` with ``H`` and ``C`` of shape (B, T, m).
    """
    X = np.ascontiguousarray(X, dtype=DTYPE)
    if X.ndim != 3 or X.shape[2] != p.n:
        raise DimensionError(f"input must be (batch, time, {p.n}), got {X.shape}")
    B, T, n = X.shape
    m = p.m
    Z = (X.reshape(B * T, n) @ p.W.value.T + p.b.value).reshape(B, T, 4 * m)
    H = np.empty((B, T, m))
    C = np.empty((B, T, m))
    _kernels().lstm_forward(Z, p.U.value, H, C)
    return H, C, LstmCache(X, H, C, Z)


def lstm_backward(p: LstmCellParams, cache: LstmCache, dH=None, dC=None,
                  param_grads=True):
    """Backpropagate through a :func:`lstm_forward` call.

    ``dH``/``dC`` are gradients w.r.t. every step's hidden/cell output (either
    may be None). Parameter gradients are accumulated into the ``grad`` slots
    unless ``param_grads`` is false or the params are frozen. Returns ``dX``.
    """
    X, H, C, G = cache.X, cache.H, cache.C, cache.G
    B, T, n = X.shape
    m = p.m
    dH = np.zeros((B, T, m)) if dH is None else np.ascontiguousarray(dH, dtype=DTYPE)
    dC = np.zeros((B, T, m)) if dC is None else np.ascontiguousarray(dC, dtype=DTYPE)
    dZ = np.empty((B, T, 4 * m))
    _kernels().lstm_backward(G, C, p.U.value, dH, dC, dZ)
    dZ2 = dZ.reshape(B * T, 4 * m)
    if param_grads and not p.frozen:
        p.W.grad += dZ2.T @ X.reshape(B * T, n)
        if T > 1:
            p.U.grad += dZ[:, 1:, :].reshape(-1, 4 * m).T @ H[:, :-1, :].reshape(-1, m)
        p.b.grad += dZ2.sum(axis=0)
    return (dZ2 @ p.W.value).reshape(B, T, n)
