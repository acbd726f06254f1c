"""Gradient verification against an extended-precision reference.

The reference losses below re-derive every network's forward pass as
straight-line numpy in ``np.longdouble``, sharing no code with the layers or
the compiled kernels. Central differences of these losses have roughly 2000x
less roundoff than float64 ones, so elements with gradients near 1e-7 can
still be checked at a relative tolerance of 1e-5 with ``h = 1e-5``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import FineTuneNet, LstmNet, PretrainNet, SharingNet
from .nn import GradCheckReport, LstmCellParams, grad_check

XP = np.longdouble


def _sig(z):
    return 1 / (1 + np.exp(-z))


def _dense(x, W, b):
    return np.tanh(x @ W.T.astype(XP) + b.astype(XP))


def _mse(a, b):
    d = a - b
    return np.sum(d * d) / d.size


def _lstm(X, W, U, b):
    W, U, b = W.astype(XP), U.astype(XP), b.astype(XP)
    B, T, _ = X.shape
    m = U.shape[1]
    h = np.zeros((B, m), dtype=XP)
    c = np.zeros((B, m), dtype=XP)
    Hs, Cs = [], []
    for t in range(T):
        z = X[:, t, :] @ W.T + h @ U.T + b
        i = _sig(z[:, :m])
        f = _sig(z[:, m:2 * m])
        o = _sig(z[:, 2 * m:3 * m])
        g = np.tanh(z[:, 3 * m:])
        c = f * c + i * g
        h = o * np.tanh(c)
        Hs.append(h)
        Cs.append(c)
    return np.stack(Hs, axis=1), np.stack(Cs, axis=1)


def _cell(p: LstmCellParams):
    return p.W.value, p.U.value, p.b.value


def reference_loss(net, X, Y):
    """The network's training loss evaluated in extended precision."""
    X = np.asarray(X, dtype=XP)
    Y = np.asarray(Y, dtype=XP)
    if isinstance(net, PretrainNet):
        Xe = _dense(X, net.encoder.W.value, net.encoder.b.value)
        H, _ = _lstm(Xe, *_cell(net.lstm))
        P = _dense(H, net.predictor.W.value, net.predictor.b.value)
        R = _dense(Xe, net.decoder.W.value, net.decoder.b.value)
        return _mse(P, Y) + _mse(R, X)
    if isinstance(net, SharingNet):
        XI = _dense(X, net.encoder_I.W.value, net.encoder_I.b.value)
        XH = _dense(X, net.encoder_H.W.value, net.encoder_H.b.value)
        HI, _ = _lstm(XI, *_cell(net.lstm_I))
        HH, CH = _lstm(XH, *_cell(net.lstm_H))
        P = _dense(np.concatenate([HI, HH], axis=2), net.predictor.W.value,
                   net.predictor.b.value)
        total = _mse(P, Y)
        if net.decoder is not None:
            R = _dense(np.concatenate([XI, XH], axis=2), net.decoder.W.value,
                       net.decoder.b.value)
            total = total + XP(net.gamma) * _mse(R, X)
        if net.lstm_A is not None:
            _, CS = _lstm(XH, *_cell(net.lstm_A))
            total = total + XP(net.beta) * _mse(CH, CS)
        return total
    if isinstance(net, FineTuneNet):
        Xe = _dense(X, net.encoder.W.value, net.encoder.b.value)
        H, _ = _lstm(Xe, *_cell(net.lstm))
        return _mse(_dense(H, net.predictor.W.value, net.predictor.b.value), Y)
    if isinstance(net, LstmNet):
        H, _ = _lstm(X, *_cell(net.lstm))
        return _mse(_dense(H, net.predictor.W.value, net.predictor.b.value), Y)
    raise TypeError(f"no reference loss for {type(net).__name__}")


def check_model_gradients(net, X, Y, h=1e-5, tol=1e-5) -> GradCheckReport:
    """Analytic gradients of ``net.loss`` vs central differences of the reference."""
    net.zero_grad()
    net.loss(X, Y, backward=True)
    analytic = {p.name: p.grad.copy() for p in net.params}
    return grad_check(lambda: reference_loss(net, X, Y), net.params, analytic, h=h, tol=tol)


@dataclass
class SuiteResult:
    name: str
    seed: int
    report: GradCheckReport


def tiny_networks(seed: int, n=4, K=3, m=5):
    """One instance of every trainable network at a tiny size."""
    lstm_A = LstmCellParams.init(K, m, seed + 7919, prefix="lstm_A")
    return {
        "pretrain": PretrainNet(n, K, m, seed),
        "unkadf": SharingNet(n, K, m, seed, lstm_A=lstm_A, gamma=0.4, beta=1.0),
        "encoder-lstm": SharingNet(n, K, m, seed, use_decoder=False, use_adaptation=False),
        "encoder-decoder": SharingNet(n, K, m, seed, gamma=0.7, use_adaptation=False),
        "encoder-adaptation": SharingNet(n, K, m, seed, lstm_A=lstm_A, beta=0.5,
                                         use_decoder=False),
        "finetune": FineTuneNet(n, K, m, seed, lstm_A),
        "lstm": LstmNet(n, m, seed),
    }


def run_suite(seeds=range(3), tau=3, batch=2, h=1e-5, tol=1e-5, n=4, K=3, m=5):
    results = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        X = rng.uniform(0.0, 1.0, size=(batch, tau, n))
        Y = rng.uniform(0.0, 1.0, size=(batch, tau, n))
        for name, net in tiny_networks(seed, n, K, m).items():
            results.append(SuiteResult(name, seed, check_model_gradients(net, X, Y, h, tol)))
    return results
