"""Command-line entry point: ``unkadf <subcommand> ...``.

Exit codes: 0 success, 2 usage, 3 data, 4 artifact, 5 numerical. Failures
print a single ``error[<class>]: <message>`` line on stderr.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .artifact import load_artifact
from .data import (SynthConfig, correlation_histogram, load_csv, pearson_matrix,
                   synth_generate, write_csv)
from .errors import ConfigError, DataError, UnkadfError
from .metrics import MaskPolicy, evaluate
from .models import VariantKind
from .training import RunConfig, mode_pair_weights, run_adapt, run_pretrain, run_variant, sweep


class UsageError(ConfigError):
    error_class = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_range(text: str) -> list[float]:
    """``start:stop:step`` (inclusive) or a comma-separated list."""
    try:
        if ":" in text:
            start, stop, step = (float(p) for p in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError
            n = int(round((stop - start) / step)) + 1
            return [round(start + k * step, 10) for k in range(n)]
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"bad range {text!r}; use start:stop:step or a,b,c") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",")]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _add_training_flags(p, artifact_dims=False):
    p.add_argument("--data", required=True, help="demand CSV")
    dim_default = None if artifact_dims else 64
    p.add_argument("--k", type=int, default=dim_default, help="embedding size K")
    p.add_argument("--m", type=int, default=dim_default, help="LSTM hidden size m")
    p.add_argument("--tau", type=int, default=12)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--patience", type=int, default=20, help="0 disables early stopping")
    p.add_argument("--split", default="0.6,0.2,0.2")
    p.add_argument("--zero-threshold", type=float, default=0.6)
    p.add_argument("--report", help="directory for report.txt and trace.csv")
    p.add_argument("--dump-trace-csv", help="also write the loss trace CSV here")


def _add_weight_flags(p):
    p.add_argument("--gamma", type=float, help="reconstruction weight")
    p.add_argument("--beta", type=float, help="alignment weight")
    p.add_argument("--mode-pair", help="take default weights for target:source, e.g. bus:train")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="unkadf", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"unkadf {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("synth", help="write a correlated synthetic multimodal dataset")
    p.add_argument("--modes", type=int, default=2)
    p.add_argument("--stations", default="8,6")
    p.add_argument("--steps", type=int, default=2184)
    p.add_argument("--share", type=float, default=0.9)
    p.add_argument("--ar", type=float, default=0.8, help="AR(1) coefficient")
    p.add_argument("--noise", type=float, default=5.0, help="observation noise std")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)

    p = sub.add_parser("pretrain", help="train on source data and write an artifact")
    _add_training_flags(p)
    p.add_argument("--out", required=True, help="artifact path (.ukadf)")

    p = sub.add_parser("adapt", help="adapt a shared artifact to target data")
    _add_training_flags(p, artifact_dims=True)
    _add_weight_flags(p)
    p.add_argument("--pretrained", required=True)

    p = sub.add_parser("baseline", help="train and evaluate one variant or baseline")
    _add_training_flags(p, artifact_dims=True)
    _add_weight_flags(p)
    p.add_argument("--model", required=True, choices=[k.value for k in VariantKind])
    p.add_argument("--pretrained")

    p = sub.add_parser("sweep", help="grid over gamma and beta with validation selection")
    _add_training_flags(p, artifact_dims=True)
    p.add_argument("--pretrained", required=True)
    p.add_argument("--gamma", default="0.1:1.0:0.1")
    p.add_argument("--beta", default="0.1:1.0:0.1")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--dry-run", action="store_true", help="print the grid size and exit")

    p = sub.add_parser("eval", help="score a prediction CSV against an actual CSV")
    p.add_argument("--pred", required=True)
    p.add_argument("--actual", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--mask-zeros-all", action="store_true",
                   help="exclude zero actuals from every metric")
    g.add_argument("--mask-policy", choices=["demand", "speed"], default="demand")

    p = sub.add_parser("correlate", help="cross-mode Pearson matrix and histogram")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", help="CSV for the coefficient matrix")
    p.add_argument("--threshold", type=float, default=0.6)

    p = sub.add_parser("gradcheck", help="finite-difference check of every network")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--tol", type=float, default=1e-5)
    return ap


def _loss_weights(args) -> tuple[float, float]:
    """Explicit --gamma/--beta win over --mode-pair defaults."""
    gamma, beta = mode_pair_weights(args.mode_pair) if args.mode_pair else (0.5, 0.5)
    return (gamma if args.gamma is None else args.gamma,
            beta if args.beta is None else args.beta)


def _run_config(args, variant="unkadf", artifact=None) -> RunConfig:
    split = tuple(parse_range(args.split))
    if len(split) != 3:
        raise UsageError("--split needs three fractions")
    K, m = args.k, args.m
    if artifact is not None:
        K = artifact.embed_dim if K is None else K
        m = artifact.hidden_dim if m is None else m
    gamma, beta = _loss_weights(args) if hasattr(args, "mode_pair") else (0.5, 0.5)
    cfg = RunConfig(tau=args.tau, batch_size=args.batch, lr=args.lr, epochs=args.epochs,
                    embed_dim=64 if K is None else K, hidden_dim=64 if m is None else m,
                    gamma=gamma, beta=beta, seed=args.seed, split=split,
                    zero_threshold=args.zero_threshold, variant=variant,
                    patience=args.patience or None)
    return cfg.validate()


def _emit(result, args, out):
    out.write(result.to_text())
    if args.report:
        d = Path(args.report)
        d.mkdir(parents=True, exist_ok=True)
        (d / "report.txt").write_text(result.to_text(timing=False))
        (d / "trace.csv").write_text(result.trace_csv())
    if args.dump_trace_csv:
        Path(args.dump_trace_csv).write_text(result.trace_csv())


def cmd_synth(args, out):
    counts = _int_list(args.stations)
    if len(counts) != args.modes:
        raise UsageError(f"--stations lists {len(counts)} modes, --modes is {args.modes}")
    try:
        cfg = SynthConfig(counts, args.steps, args.share, args.ar, args.noise, args.seed)
        cfg.validate()
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    for k, mat in enumerate(synth_generate(cfg)):
        path = d / f"mode{k}.csv"
        write_csv(mat, path)
        out.write(f"wrote {path} ({mat.T} steps x {mat.N} stations)\n")


def cmd_pretrain(args, out):
    cfg = _run_config(args, "unkadf")
    data = load_csv(args.data)
    artifact, result = run_pretrain(data, cfg)
    checksum = artifact.save(args.out)
    _emit(result, args, out)
    out.write(f"artifact={args.out}\nsha256={checksum}\n")


def cmd_adapt(args, out):
    artifact = load_artifact(args.pretrained)
    cfg = _run_config(args, "unkadf", artifact)
    result = run_adapt(load_csv(args.data), artifact, cfg)
    _emit(result, args, out)


def cmd_baseline(args, out):
    kind = VariantKind.parse(args.model)
    artifact = None
    if kind.needs_artifact:
        if not args.pretrained:
            raise UsageError(f"--model {kind.value} needs --pretrained")
        artifact = load_artifact(args.pretrained)
    cfg = _run_config(args, kind.value, artifact)
    _emit(run_variant(load_csv(args.data), cfg, artifact), args, out)


def cmd_sweep(args, out):
    gammas, betas = parse_range(args.gamma), parse_range(args.beta)
    if not gammas or not betas:
        raise UsageError("gamma and beta ranges must be non-empty")
    if args.dry_run:
        out.write(f"runs={len(gammas) * len(betas)}\n")
        return
    artifact = load_artifact(args.pretrained)
    cfg = _run_config(args, "unkadf", artifact)
    res = sweep(load_csv(args.data), artifact, cfg, gammas, betas, workers=args.workers)
    text = res.to_text()
    out.write(text)
    if args.report:
        d = Path(args.report)
        d.mkdir(parents=True, exist_ok=True)
        (d / "sweep.txt").write_text(text)
        (d / "best_report.txt").write_text(res.best.to_text(timing=False))
        (d / "best_trace.csv").write_text(res.best.trace_csv())
    if args.dump_trace_csv:
        Path(args.dump_trace_csv).write_text(res.best.trace_csv())


def cmd_eval(args, out):
    pred, actual = load_csv(args.pred), load_csv(args.actual)
    if pred.values.shape != actual.values.shape:
        raise DataError(f"pred {pred.values.shape} and actual {actual.values.shape} differ")
    if args.mask_zeros_all:
        policy = MaskPolicy.all_metrics()
    else:
        policy = MaskPolicy.speed() if args.mask_policy == "speed" else MaskPolicy.demand()
    out.write(evaluate(pred.values, actual.values, policy).to_text())


def cmd_correlate(args, out):
    a, b = load_csv(args.a), load_csv(args.b)
    r = pearson_matrix(a, b)
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["station"] + b.station_ids)
            for sid, row in zip(a.station_ids, r):
                w.writerow([sid] + ["nan" if np.isnan(v) else repr(float(v)) for v in row])
    edges, fractions, undefined = correlation_histogram(r)
    defined = r[np.isfinite(r)]
    out.write(f"pairs={r.size}\nundefined={undefined}\n")
    above = float(np.mean(defined > args.threshold)) if defined.size else 0.0
    out.write(f"fraction_above_{args.threshold:g}={above!r}\n")
    for lo, hi, f in zip(edges[:-1], edges[1:], fractions):
        out.write(f"bin[{lo:+.1f},{hi:+.1f})={f:.4f}\n")


def cmd_gradcheck(args, out):
    from .errors import GradientCheckError
    from .verify import run_suite

    failed = 0
    for r in run_suite(seeds=range(args.seeds), tol=args.tol):
        status = "ok" if r.report.passed else "FAIL"
        failed += not r.report.passed
        out.write(f"{status} {r.name} seed={r.seed} "
                  f"max_rel_error={r.report.worst:.3e}\n")
    if failed:
        raise GradientCheckError(f"{failed} network(s) exceeded tolerance {args.tol:g}")


COMMANDS = {
    "synth": cmd_synth, "pretrain": cmd_pretrain, "adapt": cmd_adapt,
    "baseline": cmd_baseline, "sweep": cmd_sweep, "eval": cmd_eval,
    "correlate": cmd_correlate, "gradcheck": cmd_gradcheck,
}


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args, out)
    except UnkadfError as exc:
        err.write(f"error[{exc.error_class}]: {exc}\n")
        return exc.exit_code
    except FileNotFoundError as exc:
        err.write(f"error[io]: {exc.filename}: no such file\n")
        return DataError.exit_code
    except OSError as exc:
        err.write(f"error[io]: {exc}\n")
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
