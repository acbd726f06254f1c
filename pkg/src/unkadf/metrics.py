"""Forecast evaluation metrics with zero-actual masking.

Arrays are ``(T, N)``: time steps by series (stations). Point metrics
aggregate over every unmasked ``(t, i)``; CORR averages per-series
correlations. MAPE and SMAPE are fractions, not percentages.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, EmptyEvaluationError, UndefinedMetricError

METRICS = ("MAE", "RMSE", "RRSE", "MAPE", "SMAPE", "R2", "CORR", "PNBI", "oPNBI")
ALWAYS_MASKED = frozenset({"MAPE", "oPNBI"})


@dataclass(frozen=True)
class MaskPolicy:
    """Metrics for which points with a zero actual value are excluded."""

    mask_zero_actuals_for: frozenset = ALWAYS_MASKED

    def __post_init__(self):
        names = frozenset(self.mask_zero_actuals_for) | ALWAYS_MASKED
        unknown = names - set(METRICS)
        if unknown:
            raise ConfigError(f"unknown metrics in mask policy: {sorted(unknown)}")
        object.__setattr__(self, "mask_zero_actuals_for", names)

    @classmethod
    def demand(cls) -> "MaskPolicy":
        return cls(ALWAYS_MASKED)

    @classmethod
    def speed(cls) -> "MaskPolicy":
        return cls(ALWAYS_MASKED | {"MAE", "RMSE", "PNBI"})

    @classmethod
    def all_metrics(cls) -> "MaskPolicy":
        return cls(frozenset(METRICS))

    def masks(self, name: str) -> bool:
        return name in self.mask_zero_actuals_for

    def describe(self) -> str:
        return ",".join(m for m in METRICS if m in self.mask_zero_actuals_for)


def _pair(pred, actual):
    pred = np.asarray(pred, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if pred.shape != actual.shape:
        raise DimensionError(f"pred {pred.shape} and actual {actual.shape} differ")
    if pred.size == 0:
        raise EmptyEvaluationError("nothing to evaluate")
    return pred, actual


def _select(pred, actual, mask_zeros, name):
    if not mask_zeros:
        return pred.ravel(), actual.ravel()
    keep = actual != 0.0
    if not keep.any():
        raise EmptyEvaluationError(f"{name}: every point has a zero actual value")
    return pred[keep], actual[keep]


def mae(pred, actual, mask_zeros=False) -> float:
    p, a = _select(*_pair(pred, actual), mask_zeros, "MAE")
    return float(np.mean(np.abs(p - a)))


def rmse(pred, actual, mask_zeros=False) -> float:
    p, a = _select(*_pair(pred, actual), mask_zeros, "RMSE")
    return float(np.sqrt(np.mean((p - a) ** 2)))


def mape(pred, actual) -> float:
    p, a = _select(*_pair(pred, actual), True, "MAPE")
    return float(np.mean(np.abs((p - a) / a)))


def smape(pred, actual, mask_zeros=False) -> float:
    """``|p - a| / (|p| + |a|)`` averaged; points with p = a = 0 are skipped."""
    p, a = _select(*_pair(pred, actual), mask_zeros, "SMAPE")
    denom = np.abs(p) + np.abs(a)
    keep = denom != 0.0
    if not keep.any():
        raise EmptyEvaluationError("SMAPE: every point has pred = actual = 0")
    return float(np.mean(np.abs(p[keep] - a[keep]) / denom[keep]))


def _sse_sst(pred, actual):
    pred, actual = _pair(pred, actual)
    sse = float(np.sum((pred - actual) ** 2))
    sst = float(np.sum((actual - actual.mean()) ** 2))
    if sst == 0.0:
        raise UndefinedMetricError("actual values are constant; RRSE and R2 are undefined")
    return sse, sst


def rrse(pred, actual) -> float:
    sse, sst = _sse_sst(pred, actual)
    return float(np.sqrt(sse) / np.sqrt(sst))


def r2(pred, actual) -> float:
    sse, sst = _sse_sst(pred, actual)
    return 1.0 - sse / sst


def corr(pred, actual) -> tuple[float, int]:
    """Mean per-series Pearson correlation and the number of series skipped
    for having zero variance in either prediction or actual."""
    pred, actual = _pair(pred, actual)
    if pred.ndim == 1:
        pred, actual = pred[:, None], actual[:, None]
    pred = pred.reshape(pred.shape[0], -1)
    actual = actual.reshape(actual.shape[0], -1)
    ac = actual - actual.mean(axis=0)
    pc = pred - pred.mean(axis=0)
    num = np.sum(ac * pc, axis=0)
    den = np.sqrt(np.sum(ac * ac, axis=0) * np.sum(pc * pc, axis=0))
    ok = den > 0.0
    skipped = int(np.sum(~ok))
    if not ok.any():
        raise UndefinedMetricError("CORR: every series is constant")
    return float(np.mean(num[ok] / den[ok])), skipped


def pnbi(pred, actual, mask_zeros=False) -> float:
    """Fraction of points where the forecast is strictly above the actual."""
    p, a = _select(*_pair(pred, actual), mask_zeros, "PNBI")
    return float(np.mean(p - a > 0.0))


def opnbi(pred, actual) -> float:
    """Mean of ``(p + a) / (2 a)`` over non-zero actuals; above 1 means
    over-forecasting overall."""
    p, a = _select(*_pair(pred, actual), True, "oPNBI")
    return float(np.mean((p + a) / (2.0 * a)))


def point_error_metrics(pred, actual, policy: MaskPolicy | None = None) -> dict[str, float]:
    policy = policy or MaskPolicy.demand()
    return {
        "MAE": mae(pred, actual, policy.masks("MAE")),
        "RMSE": rmse(pred, actual, policy.masks("RMSE")),
        "MAPE": mape(pred, actual),
        "SMAPE": smape(pred, actual, policy.masks("SMAPE")),
    }


def relative_metrics(pred, actual) -> dict[str, float]:
    c, _ = corr(pred, actual)
    return {"RRSE": rrse(pred, actual), "R2": r2(pred, actual), "CORR": c}


def bias_metrics(pred, actual, policy: MaskPolicy | None = None) -> dict[str, float]:
    policy = policy or MaskPolicy.demand()
    return {"PNBI": pnbi(pred, actual, policy.masks("PNBI")), "oPNBI": opnbi(pred, actual)}


def improvement_pct(candidate: float, reference: float) -> float:
    """Percentage reduction of ``candidate`` relative to ``reference``."""
    if not reference > 0:
        raise ConfigError(f"reference must be positive, got {reference}")
    return (reference - candidate) / reference * 100.0


@dataclass
class MetricReport:
    values: dict[str, float | None]
    masked_points: dict[str, int]
    total_points: int
    policy: MaskPolicy
    corr_skipped_series: int = 0
    undefined: dict[str, str] = field(default_factory=dict)

    def __getitem__(self, name):
        return self.values[name]

    def to_text(self, prefix: str = "") -> str:
        lines = []
        for name in METRICS:
            v = self.values.get(name)
            lines.append(f"{prefix}{name}={'undefined' if v is None else repr(v)}")
        lines.append(f"{prefix}points={self.total_points}")
        for name in METRICS:
            if self.masked_points.get(name):
                lines.append(f"{prefix}masked.{name}={self.masked_points[name]}")
        lines.append(f"{prefix}corr_skipped_series={self.corr_skipped_series}")
        lines.append(f"{prefix}mask_policy={self.policy.describe()}")
        for name, why in self.undefined.items():
            lines.append(f"{prefix}undefined.{name}={why}")
        return "\n".join(lines) + "\n"


def evaluate(pred, actual, policy: MaskPolicy | None = None) -> MetricReport:
    """All nine metrics; a metric that cannot be computed is reported as
    undefined instead of aborting the report."""
    policy = policy or MaskPolicy.demand()
    pred, actual = _pair(pred, actual)
    n_zero = int(np.sum(actual == 0.0))
    both_zero = int(np.sum((actual == 0.0) & (pred == 0.0)))
    fns = {
        "MAE": lambda: mae(pred, actual, policy.masks("MAE")),
        "RMSE": lambda: rmse(pred, actual, policy.masks("RMSE")),
        "RRSE": lambda: rrse(pred, actual),
        "MAPE": lambda: mape(pred, actual),
        "SMAPE": lambda: smape(pred, actual, policy.masks("SMAPE")),
        "R2": lambda: r2(pred, actual),
        "CORR": lambda: corr(pred, actual),
        "PNBI": lambda: pnbi(pred, actual, policy.masks("PNBI")),
        "oPNBI": lambda: opnbi(pred, actual),
    }
    values, undefined, skipped = {}, {}, 0
    for name, fn in fns.items():
        try:
            v = fn()
        except (EmptyEvaluationError, UndefinedMetricError) as exc:
            values[name] = None
            undefined[name] = exc.error_class
            continue
        if name == "CORR":
            v, skipped = v
        values[name] = v
    masked = {name: (n_zero if policy.masks(name) else 0) for name in METRICS
              if name not in ("RRSE", "R2", "CORR")}
    masked["SMAPE"] = n_zero if policy.masks("SMAPE") else both_zero
    return MetricReport(values, masked, int(actual.size), policy, skipped, undefined)
