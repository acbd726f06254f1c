"""Demand matrices: CSV ingestion, preprocessing, windowing, correlation and
a synthetic multimodal generator.

A demand matrix is ``T`` time steps (rows, hourly) by ``N`` stations
(columns) of non-negative passenger counts.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (ConfigError, DimensionError, EmptyDatasetError,
                     InsufficientDataError, ParseError)

STEPS_PER_DAY = 24
TIMESTAMP_COLUMN = "timestamp"


@dataclass
class DemandMatrix:
    station_ids: list[str]
    values: np.ndarray
    timestamps: list[str] | None = None
    # absolute time index of row 0 (hour-of-day = index % 24)
    t0: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.station_ids = [str(s) for s in self.station_ids]
        if self.values.ndim != 2:
            raise DimensionError(f"demand values must be 2-D, got shape {self.values.shape}")
        if len(self.station_ids) != self.values.shape[1]:
            raise DimensionError(
                f"{len(self.station_ids)} station ids for {self.values.shape[1]} columns")
        if self.timestamps is not None and len(self.timestamps) != self.values.shape[0]:
            raise DimensionError(
                f"{len(self.timestamps)} timestamps for {self.values.shape[0]} rows")
        if not np.all(np.isfinite(self.values)):
            raise ParseError("demand values must be finite")
        if np.any(self.values < 0):
            raise ParseError("demand values must be non-negative")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    def rows(self, start: int, stop: int) -> "DemandMatrix":
        ts = None if self.timestamps is None else self.timestamps[start:stop]
        return DemandMatrix(list(self.station_ids), self.values[start:stop].copy(), ts,
                            self.t0 + start)

    def columns(self, keep: Sequence[int]) -> "DemandMatrix":
        keep = list(keep)
        return DemandMatrix([self.station_ids[k] for k in keep], self.values[:, keep].copy(),
                            None if self.timestamps is None else list(self.timestamps), self.t0)


def load_csv(path) -> DemandMatrix:
    """Read a demand CSV: header of station ids, one row per time step.

    A first column named ``timestamp`` is kept as time labels rather than
    values.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDatasetError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        has_ts = bool(header) and header[0].lower() == TIMESTAMP_COLUMN
        ids = header[1:] if has_ts else header
        if not ids or any(not s for s in ids):
            raise ParseError("header must name every station column", line=1)
        rows, stamps = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=line_no)
            if has_ts:
                stamps.append(row[0].strip())
                row = row[1:]
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise ParseError(f"non-numeric value in {row!r}", line=line_no) from None
            for v in vals:
                if not math.isfinite(v):
                    raise ParseError(f"non-finite value {v}", line=line_no)
                if v < 0:
                    raise ParseError(f"negative demand {v}", line=line_no)
            rows.append(vals)
    if not rows:
        raise EmptyDatasetError(f"{path}: no data rows")
    return DemandMatrix(ids, np.array(rows, dtype=np.float64), stamps if has_ts else None)


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def write_csv(d: DemandMatrix, path):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if d.timestamps is not None:
            w.writerow([TIMESTAMP_COLUMN] + d.station_ids)
            for ts, row in zip(d.timestamps, d.values):
                w.writerow([ts] + [_fmt(v) for v in row])
        else:
            w.writerow(d.station_ids)
            for row in d.values:
                w.writerow([_fmt(v) for v in row])


def filter_stations(d: DemandMatrix, zero_fraction_threshold: float = 0.6) -> DemandMatrix:
    """Drop stations whose fraction of zero-demand steps exceeds the threshold.

    A station exactly at the threshold is kept.
    """
    if not 0.0 < zero_fraction_threshold <= 1.0:
        raise ConfigError("zero_fraction_threshold must be in (0, 1]")
    zero_frac = np.mean(d.values == 0.0, axis=0)
    keep = [k for k in range(d.N) if not zero_frac[k] > zero_fraction_threshold]
    if not keep:
        raise EmptyDatasetError("every station exceeds the zero-demand threshold")
    return d.columns(keep)


def split_lengths(T: int, fractions=(0.6, 0.2, 0.2)) -> tuple[int, int, int]:
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ConfigError("split fractions must be three positive numbers")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError("split fractions must sum to 1")
    n_train = math.floor(fractions[0] * T + 1e-9)
    n_val = math.floor(fractions[1] * T + 1e-9)
    return n_train, n_val, T - n_train - n_val


def split(d: DemandMatrix, fractions=(0.6, 0.2, 0.2), tau: int = 12):
    """Chronological train/validation/test split; remainder goes to test."""
    n_train, n_val, n_test = split_lengths(d.T, fractions)
    for name, n in (("train", n_train), ("validation", n_val), ("test", n_test)):
        if n < tau + 1:
            raise InsufficientDataError(
                f"{name} split has {n} steps; a window of {tau} needs at least {tau + 1}")
    return (d.rows(0, n_train), d.rows(n_train, n_train + n_val),
            d.rows(n_train + n_val, d.T))


@dataclass
class MinMaxScaler:
    """Per-station min-max scaling fitted on training data, no clamping."""

    per_station_min: np.ndarray
    per_station_max: np.ndarray
    constant: np.ndarray = field(init=False)

    def __post_init__(self):
        self.per_station_min = np.asarray(self.per_station_min, dtype=np.float64)
        self.per_station_max = np.asarray(self.per_station_max, dtype=np.float64)
        if np.any(self.per_station_max < self.per_station_min):
            raise ConfigError("scaler max below min")
        self.constant = self.per_station_max == self.per_station_min

    @property
    def _span(self):
        return np.where(self.constant, 1.0, self.per_station_max - self.per_station_min)

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = (x - self.per_station_min) / self._span
        return np.where(self.constant, 0.0, out)

    def invert(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        return y * self._span + self.per_station_min


def fit_minmax(d: DemandMatrix | np.ndarray) -> MinMaxScaler:
    values = d.values if isinstance(d, DemandMatrix) else np.asarray(d, dtype=np.float64)
    if values.shape[0] == 0:
        raise EmptyDatasetError("cannot fit a scaler on zero rows")
    return MinMaxScaler(values.min(axis=0), values.max(axis=0))


@dataclass
class WindowBatch:
    inputs: np.ndarray            # (batch, tau, N)
    targets: np.ndarray           # (batch, tau, N), inputs shifted one step
    window_start_indices: np.ndarray

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def tau(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx) -> "WindowBatch":
        return WindowBatch(self.inputs[idx], self.targets[idx], self.window_start_indices[idx])


def make_windows(d: DemandMatrix | np.ndarray, tau: int) -> WindowBatch:
    """All stride-1 windows: sample k reads rows k..k+tau-1, targets k+1..k+tau."""
    values = d.values if isinstance(d, DemandMatrix) else np.asarray(d, dtype=np.float64)
    if tau < 1:
        raise ConfigError("tau must be at least 1")
    T = values.shape[0]
    if T <= tau:
        raise InsufficientDataError(f"{T} steps cannot hold a window of {tau} plus a target")
    n = T - tau
    idx = np.arange(n)[:, None] + np.arange(tau)[None, :]
    return WindowBatch(np.ascontiguousarray(values[idx]), np.ascontiguousarray(values[idx + 1]),
                       np.arange(n))


def pearson_matrix(a: DemandMatrix | np.ndarray, b: DemandMatrix | np.ndarray) -> np.ndarray:
    """Station-by-station Pearson coefficients, shape (N_a, N_b).

    Pairs involving a constant series are NaN.
    """
    A = a.values if isinstance(a, DemandMatrix) else np.asarray(a, dtype=np.float64)
    Bv = b.values if isinstance(b, DemandMatrix) else np.asarray(b, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if Bv.ndim == 1:
        Bv = Bv[:, None]
    if A.shape[0] != Bv.shape[0]:
        raise DimensionError(f"series lengths differ: {A.shape[0]} vs {Bv.shape[0]}")
    Ac = A - A.mean(axis=0)
    Bc = Bv - Bv.mean(axis=0)
    na = np.sqrt(np.sum(Ac * Ac, axis=0))
    nb = np.sqrt(np.sum(Bc * Bc, axis=0))
    denom = np.outer(na, nb)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (Ac.T @ Bc) / denom
    r[denom == 0.0] = np.nan
    return np.clip(r, -1.0, 1.0)


def correlation_histogram(r: np.ndarray, width: float = 0.1):
    """Fraction of defined coefficients per bin of ``width`` over [-1, 1]."""
    vals = r[np.isfinite(r)].ravel()
    n_bins = int(round(2.0 / width))
    edges = np.linspace(-1.0, 1.0, n_bins + 1)
    counts, _ = np.histogram(vals, bins=edges)
    total = max(vals.size, 1)
    return edges, counts / total, int(np.sum(~np.isfinite(r)))


@dataclass
class SynthConfig:
    """Correlated multimodal demand generator settings.

    Station ``i`` of every mode follows
    ``max(0, round(scale * (share * a_i * s(t) + (1 - share) * u_i(t)) + noise))``
    where ``s`` is a daily/weekly profile common to all modes, ``a_i`` a
    per-station loading in [0.5, 1.5] and ``u_i = 1 + z_i`` with ``z_i`` a
    zero-mean AR(1) process of stationary std ``ar_std``.
    """

    mode_station_counts: Sequence[int] = (8, 6)
    total_steps: int = 2184
    share: float = 0.9
    ar_coefficient: float = 0.8
    noise_std: float = 5.0
    seed: int = 0
    scale: float = 100.0
    ar_std: float = 0.5

    def validate(self):
        if not 0.0 <= self.share <= 1.0:
            raise ConfigError(f"share must be in [0, 1], got {self.share}")
        if not 0.0 <= self.ar_coefficient < 1.0:
            raise ConfigError(f"ar_coefficient must be in [0, 1), got {self.ar_coefficient}")
        if self.total_steps < 48:
            raise ConfigError("total_steps must be at least 48")
        if not self.mode_station_counts or any(int(n) < 1 for n in self.mode_station_counts):
            raise ConfigError("every mode needs at least one station")
        if self.noise_std < 0 or self.scale <= 0 or self.ar_std < 0:
            raise ConfigError("noise_std and ar_std must be >= 0, scale > 0")


def shared_profile(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    return 1.0 + np.sin(2 * np.pi * t / 24.0) * (1.0 + 0.2 * np.sin(2 * np.pi * t / 168.0))


def synth_generate(cfg: SynthConfig) -> list[DemandMatrix]:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    T = cfg.total_steps
    t = np.arange(T)
    s = shared_profile(t)
    lam, rho = cfg.share, cfg.ar_coefficient
    innov_std = cfg.ar_std * math.sqrt(1.0 - rho * rho)
    out = []
    for mode, n in enumerate(cfg.mode_station_counts):
        n = int(n)
        a = rng.uniform(0.5, 1.5, size=n)
        z = np.empty((T, n))
        z[0] = rng.normal(0.0, cfg.ar_std, size=n)
        eps = rng.normal(0.0, innov_std, size=(T, n))
        for k in range(1, T):
            z[k] = rho * z[k - 1] + eps[k]
        u = 1.0 + z
        noise = rng.normal(0.0, cfg.noise_std, size=(T, n)) if cfg.noise_std > 0 else 0.0
        latent = cfg.scale * (lam * a[None, :] * s[:, None] + (1.0 - lam) * u)
        x = np.maximum(0.0, np.round(latent + noise))
        ids = [f"m{mode}s{k}" for k in range(n)]
        out.append(DemandMatrix(ids, x))
    return out
