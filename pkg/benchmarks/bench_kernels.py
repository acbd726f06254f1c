"""Time the compiled and numpy LSTM recurrence kernels side by side.

    python3 benchmarks/bench_kernels.py [--repeat 50]

For each shape the script checks that both backends produce the same
outputs, then reports the best-of-N wall time for the forward and backward
recurrences and one full training epoch of the adaptation network.
"""
import argparse
import time

import numpy as np

from unkadf.data import SynthConfig, synth_generate
from unkadf.nn import LstmCellParams, available_backends, lstm_backward, lstm_forward, set_backend
from unkadf.training import RunConfig, run_pretrain, run_variant

SHAPES = [(1, 12, 16), (64, 12, 16), (64, 12, 64), (256, 24, 32)]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_shape(B, T, m, repeat):
    rng = np.random.default_rng(0)
    p = LstmCellParams.init(m, m, 0)
    X = rng.uniform(-1, 1, (B, T, m))
    dH = rng.normal(size=(B, T, m))
    row, ref = {}, None
    for name in available_backends():
        set_backend(name)
        H, C, cache = lstm_forward(p, X)
        dX = lstm_backward(p, cache, dH, param_grads=False)
        if ref is None:
            ref = (H, dX)
        else:
            err = max(np.abs(H - ref[0]).max(), np.abs(dX - ref[1]).max())
            assert err < 1e-12, f"backends disagree by {err:.2e}"
        fwd = best_of(lambda: lstm_forward(p, X), repeat)
        bwd = best_of(lambda: lstm_backward(p, cache, dH, param_grads=False), repeat)
        row[name] = (fwd, bwd)
    return row


def bench_epoch():
    src, tgt = synth_generate(SynthConfig())
    cfg = RunConfig(embed_dim=16, hidden_dim=16, epochs=1, lr=1e-3, patience=None)
    art, _ = run_pretrain(src, cfg)
    row = {}
    for name in available_backends():
        set_backend(name)
        row[name] = best_of(lambda: run_variant(tgt, cfg, art), 3)
    return row


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()
    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the numpy backend is available")
    print(f"{'B':>4} {'T':>3} {'m':>3}  " + "  ".join(
        f"{b + ' fwd':>12} {b + ' bwd':>12}" for b in backends) + "  speedup")
    for B, T, m in SHAPES:
        row = bench_shape(B, T, m, args.repeat)
        cells = "  ".join(f"{row[b][0] * 1e3:10.3f}ms {row[b][1] * 1e3:10.3f}ms" for b in backends)
        speed = ""
        if len(backends) == 2:
            speed = f"{sum(row['python']) / sum(row['cython']):6.1f}x"
        print(f"{B:>4} {T:>3} {m:>3}  {cells}  {speed}")
    epoch = bench_epoch()
    print("one adaptation epoch (8/6 stations, T=2184, K=m=16): " + ", ".join(
        f"{b} {t:.2f}s" for b, t in epoch.items()))


if __name__ == "__main__":
    main()
