"""Experiment orchestration: pre-training, adaptation, baselines and sweeps."""
from __future__ import annotations

import csv
import io
import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .artifact import PretrainedArtifact, artifact_from_net
from .data import (DemandMatrix, MinMaxScaler, WindowBatch, filter_stations, fit_minmax,
                   make_windows, split)
from .errors import ConfigError, DivergenceError, FrozenParameterError
from .metrics import MaskPolicy, MetricReport, evaluate
from .models import (HistoricalAverage, LinearAR, PretrainNet, SharingNet, VariantKind,
                     build_variant)
from .nn import Adam

log = logging.getLogger(__name__)

# (target, source) -> (gamma, beta) as tuned per mode pair on the Sydney data
MODE_PAIR_LOSS_WEIGHTS = {
    ("bus", "train"): (0.4, 1.0), ("bus", "light-rail"): (1.0, 0.4),
    ("bus", "ferry"): (0.5, 0.1),
    ("train", "bus"): (0.6, 0.7), ("train", "light-rail"): (0.6, 0.9),
    ("train", "ferry"): (0.4, 0.7),
    ("light-rail", "bus"): (0.9, 0.3), ("light-rail", "train"): (0.3, 0.1),
    ("light-rail", "ferry"): (1.0, 0.6),
    ("ferry", "bus"): (0.1, 0.6), ("ferry", "train"): (0.6, 0.6),
    ("ferry", "light-rail"): (0.5, 0.6),
}


def mode_pair_weights(pair: str) -> tuple[float, float]:
    """Look up ``"target:source"`` (e.g. ``"bus:train"``)."""
    target, sep, source = pair.partition(":")
    norm = lambda s: s.strip().lower().replace("_", "-").replace(" ", "-")  # noqa: E731
    key = (norm(target), norm(source))
    if not sep or key not in MODE_PAIR_LOSS_WEIGHTS:
        known = ", ".join(f"{t}:{s}" for t, s in MODE_PAIR_LOSS_WEIGHTS)
        raise ConfigError(f"unknown mode pair {pair!r}; known: {known}")
    return MODE_PAIR_LOSS_WEIGHTS[key]


@dataclass
class RunConfig:
    tau: int = 12
    batch_size: int = 64
    lr: float = 1e-4
    epochs: int = 1000
    embed_dim: int = 64
    hidden_dim: int = 64
    gamma: float = 0.5
    beta: float = 0.5
    seed: int = 0
    split: tuple = (0.6, 0.2, 0.2)
    zero_threshold: float = 0.6
    variant: str = "unkadf"
    patience: int | None = 20
    # when false the raw matrix is used as given (station filter skipped)
    filter_stations: bool = True

    def validate(self) -> "RunConfig":
        if self.tau < 1:
            raise ConfigError("tau must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.embed_dim < 1 or self.hidden_dim < 1:
            raise ConfigError("embed_dim and hidden_dim must be >= 1")
        if self.gamma < 0 or self.beta < 0:
            raise ConfigError("gamma and beta must be non-negative")
        if self.patience is not None and self.patience < 1:
            raise ConfigError("patience must be >= 1 (or None to disable)")
        VariantKind.parse(self.variant)
        return self

    def replace(self, **changes) -> "RunConfig":
        return RunConfig(**{**asdict(self), **changes})

    def echo(self) -> dict:
        d = asdict(self)
        d["split"] = "/".join(str(f) for f in self.split)
        return d


@dataclass
class Prepared:
    """A demand matrix after filtering, splitting, scaling and windowing."""

    station_ids: list[str]
    parts: tuple[DemandMatrix, DemandMatrix, DemandMatrix]
    scaler: MinMaxScaler
    train: WindowBatch
    val: WindowBatch
    test: WindowBatch

    @property
    def n_stations(self) -> int:
        return len(self.station_ids)

    @property
    def test_actual(self) -> np.ndarray:
        """Raw demand at the step after each test window, (n_test, N)."""
        return self.parts[2].values[self.test.tau:]

    @property
    def test_times(self) -> np.ndarray:
        test = self.parts[2]
        return test.t0 + self.test.tau + np.arange(len(self.test))


def prepare(data: DemandMatrix, cfg: RunConfig) -> Prepared:
    d = filter_stations(data, cfg.zero_threshold) if cfg.filter_stations else data
    parts = split(d, cfg.split, cfg.tau)
    scaler = fit_minmax(parts[0])
    windows = [make_windows(scaler.apply(p.values), cfg.tau) for p in parts]
    return Prepared(list(d.station_ids), parts, scaler, *windows)


@dataclass
class EpochLog:
    epoch: int
    total: float
    l1: float
    l2: float
    l3: float
    val_loss: float


@dataclass
class RunResult:
    variant: str
    config: dict
    trace: list[EpochLog] = field(default_factory=list)
    best_epoch: int | None = None
    best_val_loss: float | None = None
    initial_val_loss: float | None = None
    stopped_early: bool = False
    metrics: MetricReport | None = None
    predictions: np.ndarray | None = None
    actuals: np.ndarray | None = None
    duration_s: float = 0.0
    frozen_checks: int = 0
    station_ids: list[str] = field(default_factory=list)

    @property
    def mae(self) -> float:
        return self.metrics.values["MAE"]

    def to_text(self, timing: bool = True) -> str:
        """Key-value report; ``timing=False`` drops the wall-clock line so
        repeated runs give identical text."""
        lines = [f"variant={self.variant}"]
        for k, v in self.config.items():
            lines.append(f"config.{k}={v}")
        lines.append(f"epochs_run={len(self.trace)}")
        lines.append(f"best_epoch={self.best_epoch}")
        lines.append(f"best_val_loss={self.best_val_loss!r}")
        lines.append(f"initial_val_loss={self.initial_val_loss!r}")
        lines.append(f"stopped_early={str(self.stopped_early).lower()}")
        lines.append(f"frozen_checks={self.frozen_checks}")
        if timing:
            lines.append(f"duration_s={self.duration_s:.3f}")
        if self.trace:
            last = self.trace[-1]
            lines += [f"final.total={last.total!r}", f"final.L1={last.l1!r}",
                      f"final.L2={last.l2!r}", f"final.L3={last.l3!r}"]
        text = "\n".join(lines) + "\n"
        if self.metrics is not None:
            text += self.metrics.to_text(prefix="test.")
        return text

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "total", "L1", "L2", "L3", "val_loss"])
        for e in self.trace:
            w.writerow([e.epoch, repr(e.total), repr(e.l1), repr(e.l2), repr(e.l3),
                        repr(e.val_loss)])
        return buf.getvalue()


def _batched_loss(model, windows: WindowBatch, chunk=512):
    n = len(windows)
    acc = np.zeros(4)
    for s in range(0, n, chunk):
        part = model.loss(windows.inputs[s:s + chunk], windows.targets[s:s + chunk])
        k = min(chunk, n - s)
        acc += k * np.array([part.total, part.l1, part.l2, part.l3])
    return acc / n


def validation_loss(model, windows: WindowBatch) -> float:
    """Selection criterion: full objective for the source network, one-step
    prediction MSE for every target-side model (comparable across variants
    and loss weights)."""
    total, l1, _, _ = _batched_loss(model, windows)
    return float(total if isinstance(model, PretrainNet) else l1)


def train(model, prep: Prepared, cfg: RunConfig, on_epoch=None):
    """Mini-batch Adam with best-validation checkpointing.

    Returns ``(trace, best_epoch, best_val, initial_val, stopped_early)`` and
    leaves the best-validation weights loaded in ``model``.
    """
    opt = Adam(model.trainable, lr=cfg.lr)
    rng = np.random.default_rng([cfg.seed & 0xFFFFFFFF, 0x5EED])
    n = len(prep.train)
    trace = []
    best_val, best_epoch, best_state = np.inf, None, None
    stopped_early = False
    initial_val = validation_loss(model, prep.val)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        sums = np.zeros(4)
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            opt.zero_grad()
            parts = model.loss(prep.train.inputs[idx], prep.train.targets[idx], backward=True)
            if not np.isfinite(parts.total):
                raise DivergenceError(f"training loss became {parts.total} at epoch {epoch}")
            opt.step()
            sums += len(idx) * np.array([parts.total, parts.l1, parts.l2, parts.l3])
        total, l1, l2, l3 = sums / n
        val = validation_loss(model, prep.val)
        if not np.isfinite(val):
            raise DivergenceError(f"validation loss became {val} at epoch {epoch}")
        trace.append(EpochLog(epoch, float(total), float(l1), float(l2), float(l3), val))
        if on_epoch is not None:
            on_epoch(epoch, model)
        if val < best_val:
            best_val, best_epoch = val, epoch
            best_state = model.state_dict()
        elif cfg.patience is not None and epoch - best_epoch >= cfg.patience:
            stopped_early = True
            break
    model.load_state_dict(best_state)
    return trace, best_epoch, float(best_val), initial_val, stopped_early


def _evaluate_model(model, prep: Prepared):
    P = model.predict(prep.test.inputs)[:, -1, :]
    pred = prep.scaler.invert(P)
    actual = prep.test_actual
    return pred, actual, evaluate(pred, actual, MaskPolicy.demand())


def _run_network(model, prep, cfg, variant, on_epoch=None) -> RunResult:
    t0 = time.perf_counter()
    trace, best_epoch, best_val, initial_val, stopped = train(model, prep, cfg, on_epoch)
    pred, actual, report = _evaluate_model(model, prep)
    return RunResult(variant, cfg.echo(), trace, best_epoch, best_val, initial_val, stopped,
                     report, pred, actual, time.perf_counter() - t0,
                     station_ids=prep.station_ids)


def run_pretrain(data: DemandMatrix, cfg: RunConfig, metadata: dict | None = None):
    """Train the source network; returns ``(artifact, result)``.

    The artifact holds the best-validation LSTM weights.
    """
    cfg.validate()
    prep = prepare(data, cfg)
    net = PretrainNet(prep.n_stations, cfg.embed_dim, cfg.hidden_dim, cfg.seed)
    result = _run_network(net, prep, cfg, "pretrain")
    meta = {f"config.{k}": v for k, v in cfg.echo().items()
            if k not in ("variant", "gamma", "beta")}
    meta["source_stations"] = str(prep.n_stations)
    meta.update(metadata or {})
    return artifact_from_net(net, meta), result


def assert_frozen(model, artifact: PretrainedArtifact):
    ref = artifact.lstm
    for p, q in zip(model.lstm_A.params, ref.params):
        if p.value.tobytes() != q.value.tobytes():
            raise FrozenParameterError(f"{p.name} drifted from the loaded artifact")


def _frozen_hook(artifact):
    def hook(epoch, model):
        assert_frozen(model, artifact)
        hook.count += 1
    hook.count = 0
    return hook


def run_variant(data: DemandMatrix, cfg: RunConfig,
                artifact: PretrainedArtifact | None = None) -> RunResult:
    """Train and evaluate one variant under the shared data pipeline."""
    cfg.validate()
    kind = VariantKind.parse(cfg.variant)
    prep = prepare(data, cfg)
    if kind is VariantKind.HA:
        t0 = time.perf_counter()
        pred = HistoricalAverage().fit(prep.parts[0]).predict(prep.test_times)
        return _baseline_result(kind, cfg, prep, pred, t0)
    if kind is VariantKind.LR:
        t0 = time.perf_counter()
        pred = prep.scaler.invert(LinearAR().fit(prep.train).predict(prep.test))
        return _baseline_result(kind, cfg, prep, pred, t0)
    if kind.needs_artifact:
        if artifact is None:
            raise ConfigError(f"variant {kind.value} needs a pre-trained artifact")
        artifact.check_compatible(cfg.embed_dim, cfg.hidden_dim)
    model = build_variant(kind, prep.n_stations, cfg.embed_dim, cfg.hidden_dim, cfg.seed,
                          artifact if kind.needs_artifact else None, cfg.gamma, cfg.beta)
    hook = None
    if isinstance(model, SharingNet) and model.lstm_A is not None:
        hook = _frozen_hook(artifact)
    result = _run_network(model, prep, cfg, kind.value, hook)
    if hook is not None:
        assert_frozen(model, artifact)
        result.frozen_checks = hook.count + 1
    return result


def _baseline_result(kind, cfg, prep, pred, t0):
    actual = prep.test_actual
    return RunResult(kind.value, cfg.echo(), metrics=evaluate(pred, actual, MaskPolicy.demand()),
                     predictions=pred, actuals=actual, duration_s=time.perf_counter() - t0,
                     station_ids=prep.station_ids)


def run_adapt(data: DemandMatrix, artifact: PretrainedArtifact, cfg: RunConfig) -> RunResult:
    """Un-Kadf adaptation on the target data using only the shared artifact."""
    return run_variant(data, cfg.replace(variant="unkadf"), artifact)


@dataclass
class SweepResult:
    gammas: list[float]
    betas: list[float]
    results: list[tuple[float, float, RunResult]]
    best_gamma: float
    best_beta: float
    best: RunResult

    @property
    def maes(self) -> np.ndarray:
        return np.array([r.mae for _, _, r in self.results])

    @property
    def mae_std(self) -> float:
        return float(np.std(self.maes))

    @property
    def mae_median(self) -> float:
        return float(np.median(self.maes))

    def to_text(self) -> str:
        lines = [f"runs={len(self.results)}", f"best_gamma={self.best_gamma!r}",
                 f"best_beta={self.best_beta!r}", f"best_val_loss={self.best.best_val_loss!r}",
                 f"best_test_MAE={self.best.mae!r}", f"test_MAE_std={self.mae_std!r}",
                 f"test_MAE_median={self.mae_median!r}"]
        for k, (g, b, r) in enumerate(self.results):
            lines.append(f"grid.{k}=gamma:{g!r} beta:{b!r} val_loss:{r.best_val_loss!r} "
                         f"test_MAE:{r.mae!r}")
        return "\n".join(lines) + "\n"


def _sweep_job(args):
    data, artifact, cfg = args
    return run_adapt(data, artifact, cfg)


def sweep(data: DemandMatrix, artifact: PretrainedArtifact, cfg: RunConfig, gammas, betas,
          workers: int = 1) -> SweepResult:
    """Full (gamma, beta) grid; run ``k`` uses seed ``cfg.seed + k``.

    The selected setting minimises validation loss; ties go to the earlier
    grid point.
    """
    gammas, betas = [float(g) for g in gammas], [float(b) for b in betas]
    if not gammas or not betas:
        raise ConfigError("gamma and beta ranges must be non-empty")
    grid = list(itertools.product(gammas, betas))
    jobs = [(data, artifact, cfg.replace(gamma=g, beta=b, seed=cfg.seed + k))
            for k, (g, b) in enumerate(grid)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_sweep_job, jobs))
    else:
        runs = [_sweep_job(j) for j in jobs]
    results = [(g, b, r) for (g, b), r in zip(grid, runs)]
    k_best = min(range(len(results)), key=lambda k: results[k][2].best_val_loss)
    g, b, best = results[k_best]
    return SweepResult(gammas, betas, results, g, b, best)
