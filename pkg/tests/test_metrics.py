import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from unkadf.errors import (ConfigError, DimensionError, EmptyEvaluationError,
                           UndefinedMetricError)
from unkadf.metrics import (METRICS, MaskPolicy, corr, evaluate, improvement_pct, mae, mape,
                            opnbi, pnbi, r2, rmse, rrse, smape)


def brute(pred, actual, mask_point_errors=False):
    """Double-loop versions of all nine metrics (demand or speed masking)."""
    T, N = actual.shape
    n = n_nz = 0
    abs_e = sq_e = ape = sape = over = opn = 0.0
    n_sape = 0
    s_a = 0.0
    for t in range(T):
        for i in range(N):
            p, a = float(pred[t, i]), float(actual[t, i])
            s_a += a
            if a != 0.0:
                n_nz += 1
                ape += abs(p - a) / abs(a)
                opn += (p + a) / (2 * a)
            if mask_point_errors and a == 0.0:
                continue
            n += 1
            abs_e += abs(p - a)
            sq_e += (p - a) ** 2
            over += 1.0 if p - a > 0 else 0.0
            if abs(p) + abs(a) > 0:
                n_sape += 1
                sape += abs(p - a) / (abs(p) + abs(a))
    mean_a = s_a / (T * N)
    sse = sst = 0.0
    for t in range(T):
        for i in range(N):
            sse += (float(pred[t, i]) - float(actual[t, i])) ** 2
            sst += (float(actual[t, i]) - mean_a) ** 2
    cors = []
    for i in range(N):
        mp = sum(float(pred[t, i]) for t in range(T)) / T
        ma = sum(float(actual[t, i]) for t in range(T)) / T
        num = sum((float(pred[t, i]) - mp) * (float(actual[t, i]) - ma) for t in range(T))
        dp = sum((float(pred[t, i]) - mp) ** 2 for t in range(T))
        da = sum((float(actual[t, i]) - ma) ** 2 for t in range(T))
        if dp > 0 and da > 0:
            cors.append(num / math.sqrt(dp * da))
    return {
        "MAE": abs_e / n, "RMSE": math.sqrt(sq_e / n), "RRSE": math.sqrt(sse) / math.sqrt(sst),
        "MAPE": ape / n_nz, "SMAPE": sape / n_sape, "R2": 1 - sse / sst,
        "CORR": sum(cors) / len(cors), "PNBI": over / n, "oPNBI": opn / n_nz,
    }


def random_instance(seed):
    rng = np.random.default_rng(seed)
    actual = rng.integers(0, 30, size=(50, 10)).astype(float)
    pred = np.maximum(0, actual + rng.normal(0, 4, size=actual.shape))
    return pred, actual


@pytest.mark.parametrize("seed", range(50))
def test_all_metrics_match_brute_force(seed):
    pred, actual = random_instance(seed)
    assert (actual == 0).any()
    got = evaluate(pred, actual, MaskPolicy.demand()).values
    want = brute(pred, actual)
    for name in METRICS:
        assert got[name] == pytest.approx(want[name], rel=0, abs=1e-12), name
    assert got["R2"] + got["RRSE"] ** 2 == pytest.approx(1.0, abs=1e-12)
    assert got["MAE"] <= got["RMSE"]


@pytest.mark.parametrize("seed", range(10))
def test_speed_policy_matches_brute_force(seed):
    pred, actual = random_instance(seed)
    got = evaluate(pred, actual, MaskPolicy.speed()).values
    want = brute(pred, actual, mask_point_errors=True)
    for name in ("MAE", "RMSE", "PNBI", "MAPE", "oPNBI"):
        assert got[name] == pytest.approx(want[name], abs=1e-12), name


def test_hand_values():
    p = np.array([[2.0, 0.0], [4.0, 1.0]])
    a = np.array([[1.0, 0.0], [4.0, 3.0]])
    assert mae(p, a) == pytest.approx((1 + 0 + 0 + 2) / 4)
    assert rmse(p, a) == pytest.approx(math.sqrt(5 / 4))
    assert mape(p, a) == pytest.approx((1 + 0 + 2 / 3) / 3)
    # p = a = 0 is skipped; no factor 2 in the denominator
    assert smape(p, a) == pytest.approx((1 / 3 + 0 + 2 / 4) / 3)
    assert pnbi(p, a) == pytest.approx(1 / 4)
    assert opnbi(p, a) == pytest.approx((1.5 + 1 + 4 / 6) / 3)


def test_perfect_forecast():
    _, a = random_instance(0)
    rep = evaluate(a, a)
    assert rep["MAE"] == 0 and rep["RMSE"] == 0 and rep["MAPE"] == 0
    assert rep["R2"] == 1.0 and rep["CORR"] == pytest.approx(1.0)
    assert rep["oPNBI"] == 1.0 and rep["PNBI"] == 0.0


def test_masked_counts_reported():
    pred, actual = random_instance(1)
    n_zero = int((actual == 0).sum())
    rep = evaluate(pred, actual, MaskPolicy.demand())
    assert rep.masked_points["MAPE"] == n_zero
    assert rep.masked_points["MAE"] == 0
    assert rep.total_points == actual.size
    text = rep.to_text()
    assert f"masked.MAPE={n_zero}" in text
    assert "mask_policy=MAPE,oPNBI" in text
    assert evaluate(pred, actual, MaskPolicy.all_metrics()).masked_points["MAE"] == n_zero


def test_undefined_metrics_reported_not_raised():
    a = np.zeros((4, 2))
    rep = evaluate(np.ones((4, 2)), a)
    assert rep["MAPE"] is None and rep["R2"] is None and rep["CORR"] is None
    assert rep["MAE"] == 1.0
    assert rep.undefined["MAPE"] == "empty-evaluation"
    assert rep.undefined["R2"] == "undefined-metric"
    assert "MAPE=undefined" in rep.to_text()
    with pytest.raises(EmptyEvaluationError):
        mape(np.ones(3), np.zeros(3))
    with pytest.raises(UndefinedMetricError):
        r2(np.ones(3), np.full(3, 2.0))


def test_corr_skips_constant_series():
    a = np.column_stack([np.arange(5.0), np.full(5, 3.0)])
    p = a + np.array([[0.1, 0], [0, 0], [0.2, 0], [0, 0], [0.1, 0]])
    value, skipped = corr(p, a)
    assert skipped == 1
    assert value == pytest.approx(np.corrcoef(p[:, 0], a[:, 0])[0, 1])


def test_shape_and_policy_errors():
    with pytest.raises(DimensionError):
        mae(np.ones(3), np.ones(4))
    with pytest.raises(EmptyEvaluationError):
        evaluate(np.ones((0, 2)), np.ones((0, 2)))
    with pytest.raises(ConfigError):
        MaskPolicy(frozenset({"MARE"}))


def test_improvement_pct():
    assert improvement_pct(7.777, 8.750) == pytest.approx(11.12, abs=0.005)
    assert improvement_pct(10.0, 10.0) == 0.0
    assert improvement_pct(12.0, 10.0) == pytest.approx(-20.0)
    with pytest.raises(ConfigError):
        improvement_pct(1.0, 0.0)


def test_rrse_r2_identity_against_hand_values():
    a = np.array([1.0, 2.0, 3.0, 4.0])
    p = np.array([1.5, 2.0, 2.5, 4.0])
    sse, sst = 0.5, 5.0
    assert rrse(p, a) == pytest.approx(math.sqrt(sse / sst))
    assert r2(p, a) == pytest.approx(1 - sse / sst)


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(np.float64, (6, 3), elements=st.floats(0, 100)),
       hnp.arrays(np.float64, (6, 3), elements=st.floats(0, 100)))
def test_metric_properties(p, a):
    assert mae(p, a) <= rmse(p, a) + 1e-12
    assert 0.0 <= pnbi(p, a) <= 1.0
    if (np.abs(p) + np.abs(a)).any():
        assert 0.0 <= smape(p, a) <= 1.0
    # MAE is symmetric, MAPE is not
    assert mae(p, a) == pytest.approx(mae(a, p))
