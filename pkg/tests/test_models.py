import math

import numpy as np
import pytest

from unkadf.data import DemandMatrix, make_windows
from unkadf.errors import ConfigError, IncompatibleArtifactError, NumericalError
from unkadf.models import (FineTuneNet, HistoricalAverage, LinearAR, LstmNet, PretrainNet,
                           SharingNet, VariantKind, build_variant, ha_forecast,
                           lr_fit_forecast, pretrain_forward, pretrain_loss, sharing_forward,
                           unkadf_loss)
from unkadf.nn import Adam, LstmCellParams
from unkadf.verify import check_model_gradients, tiny_networks


def sig(z):
    return 1 / (1 + math.exp(-z))


def cell(x, h, c, W, U, b):
    """m = 1, n = 1 LSTM step on scalars."""
    z = [W[k, 0] * x + U[k, 0] * h + b[k] for k in range(4)]
    c = sig(z[1]) * c + sig(z[0]) * math.tanh(z[3])
    return sig(z[2]) * math.tanh(c), c


def set_all(net, rng):
    for p in net.params:
        if not p.frozen:
            p.value[...] = rng.uniform(-1, 1, size=p.shape)


def test_pretrain_scalar_oracle():
    net = PretrainNet(2, 1, 1, seed=0)
    set_all(net, np.random.default_rng(4))
    x = np.array([0.3, 0.8])
    P, R, states = pretrain_forward(net, x[None])
    We, be = net.encoder.W.value, net.encoder.b.value
    xe = math.tanh(We[0, 0] * x[0] + We[0, 1] * x[1] + be[0])
    h, c = cell(xe, 0.0, 0.0, net.lstm.W.value, net.lstm.U.value, net.lstm.b.value)
    Wp, bp = net.predictor.W.value, net.predictor.b.value
    Wd, bd = net.decoder.W.value, net.decoder.b.value
    for i in range(2):
        assert P[0, i] == pytest.approx(math.tanh(Wp[i, 0] * h + bp[i]), abs=1e-12)
        assert R[0, i] == pytest.approx(math.tanh(Wd[i, 0] * xe + bd[i]), abs=1e-12)
    assert states[0].c[0] == pytest.approx(c, abs=1e-12)


def test_sharing_scalar_oracle():
    rng = np.random.default_rng(5)
    lstm_A = LstmCellParams(rng.uniform(-1, 1, (4, 1)), rng.uniform(-1, 1, (4, 1)),
                            rng.uniform(-1, 1, 4))
    net = SharingNet(2, 1, 1, 0, lstm_A=lstm_A, gamma=0.3, beta=0.7)
    set_all(net, rng)
    X = np.array([[0.2, 0.9], [0.6, 0.1]])
    P, R, cPH, cPS = sharing_forward(net, X)
    enc = lambda d, x: math.tanh(d.W.value[0] @ x + d.b.value[0])  # noqa: E731
    hI = cI = hH = cH = hA = cA = 0.0
    for t in range(2):
        xi, xh = enc(net.encoder_I, X[t]), enc(net.encoder_H, X[t])
        hI, cI = cell(xi, hI, cI, net.lstm_I.W.value, net.lstm_I.U.value, net.lstm_I.b.value)
        hH, cH = cell(xh, hH, cH, net.lstm_H.W.value, net.lstm_H.U.value, net.lstm_H.b.value)
        hA, cA = cell(xh, hA, cA, lstm_A.W.value, lstm_A.U.value, lstm_A.b.value)
        Wp, bp = net.predictor.W.value, net.predictor.b.value
        Wd, bd = net.decoder.W.value, net.decoder.b.value
        for i in range(2):
            assert P[t, i] == pytest.approx(math.tanh(Wp[i, 0] * hI + Wp[i, 1] * hH + bp[i]),
                                            abs=1e-12)
            assert R[t, i] == pytest.approx(math.tanh(Wd[i, 0] * xi + Wd[i, 1] * xh + bd[i]),
                                            abs=1e-12)
        assert cPH[t, 0] == pytest.approx(cH, abs=1e-12)
        assert cPS[t, 0] == pytest.approx(cA, abs=1e-12)


def test_zero_parameters_give_zero_outputs():
    net = SharingNet(3, 2, 2, 0, lstm_A=LstmCellParams.zeros(2, 2))
    for p in net.trainable:
        p.value[...] = 0
    out = net.forward(np.random.default_rng(0).uniform(size=(2, 4, 3)))
    assert not out.predictions.any() and not out.reconstructions.any()
    assert not out.c_PH.any() and not out.c_PS.any()
    pn = PretrainNet(3, 2, 2)
    for p in pn.params:
        p.value[...] = 0
    P, R, _ = pretrain_forward(pn, np.ones((4, 3)))
    assert not P.any() and not R.any()
    assert pretrain_loss(P, R, np.ones((4, 3)), np.ones((4, 3))) == 2.0


def test_loss_terms():
    rng = np.random.default_rng(1)
    net = SharingNet(3, 2, 2, 0, lstm_A=LstmCellParams.init(2, 2, 1), gamma=0.4, beta=1.0)
    X, Y = rng.uniform(size=(2, 4, 3)), rng.uniform(size=(2, 4, 3))
    parts = net.loss(X, Y)
    total, l1, l2, l3 = unkadf_loss(net.forward(X), X, Y, 0.4, 1.0)
    assert (parts.total, parts.l1, parts.l2, parts.l3) == (total, l1, l2, l3)
    assert total == pytest.approx(l1 + 0.4 * l2 + l3, abs=1e-15)
    assert unkadf_loss(net.forward(X), X, Y, 0.0, 0.0)[0] == l1
    with pytest.raises(ConfigError):
        unkadf_loss(net.forward(X), X, Y, -1.0, 0.0)


@pytest.mark.parametrize("seed", range(3))
def test_all_networks_pass_gradient_check(seed):
    rng = np.random.default_rng(seed)
    X, Y = rng.uniform(size=(2, 3, 4)), rng.uniform(size=(2, 3, 4))
    for name, net in tiny_networks(seed).items():
        report = check_model_gradients(net, X, Y)
        assert report.passed, (name, report.max_rel_error)
        assert "lstm_A.W" not in report.max_rel_error or name == "pretrain"


def test_encoder_h_receives_gradient_through_frozen_cell():
    # with only the alignment term, lstm_A's weights get nothing but
    # encoder_H still gets a gradient through it
    rng = np.random.default_rng(2)
    net = SharingNet(3, 2, 2, 0, lstm_A=LstmCellParams.init(2, 2, 7), beta=1.0,
                     use_decoder=False)
    net.predictor.W.value[...] = 0
    net.predictor.b.value[...] = 0
    X = rng.uniform(size=(2, 3, 3))
    net.zero_grad()
    net.loss(X, np.zeros_like(X), backward=True)
    assert not any(p.grad.any() for p in net.lstm_A.params)
    assert net.encoder_H.W.grad.any()
    assert not net.encoder_I.W.grad.any()


def test_variant_masks():
    A = LstmCellParams.init(2, 3, 0)
    v = {k: build_variant(k, 4, 2, 3, 0, A, gamma=0.5, beta=0.5)
         for k in ("encoder-lstm", "encoder-decoder", "encoder-adaptation", "unkadf")}
    assert (v["encoder-lstm"].gamma, v["encoder-lstm"].beta) == (0.0, 0.0)
    assert v["encoder-lstm"].lstm_A is None and v["encoder-lstm"].decoder is None
    assert v["encoder-decoder"].lstm_A is None and v["encoder-decoder"].gamma == 0.5
    assert v["encoder-adaptation"].decoder is None and v["encoder-adaptation"].beta == 0.5
    assert v["unkadf"].decoder is not None and v["unkadf"].lstm_A.frozen
    with pytest.raises(ConfigError):
        build_variant("unkadf", 4, 2, 3)
    with pytest.raises(ConfigError):
        build_variant("ha", 4)
    with pytest.raises(ConfigError):
        VariantKind.parse("xgboost")
    assert VariantKind.parse("Encoder_LSTM") is VariantKind.ENCODER_LSTM


def test_lstm_parameter_count():
    N, m = 4, 64
    assert build_variant("lstm", N, hidden_dim=m).n_params() == \
        4 * (m * N + m * m + m) + (N * m + N)


def test_incompatible_artifact():
    with pytest.raises(IncompatibleArtifactError):
        build_variant("unkadf", 4, 2, 3, artifact=LstmCellParams.init(2, 5, 0))
    with pytest.raises(IncompatibleArtifactError):
        build_variant("finetune", 4, 3, 3, artifact=LstmCellParams.init(2, 3, 0))


def test_finetune_starts_from_artifact_and_moves():
    A = LstmCellParams.init(2, 3, 0).copy(frozen=True)
    net = build_variant("finetune", 4, 2, 3, 0, A)
    assert isinstance(net, FineTuneNet)
    for a, b in zip(net.lstm.params, A.params):
        np.testing.assert_array_equal(a.value, b.value)
        assert not a.frozen
    rng = np.random.default_rng(0)
    opt = Adam(net.trainable, lr=1e-2)
    net.loss(rng.uniform(size=(2, 3, 4)), rng.uniform(size=(2, 3, 4)), backward=True)
    opt.step()
    assert not np.array_equal(net.lstm.W.value, A.W.value)


def test_frozen_branch_unchanged_by_training():
    A = LstmCellParams.init(2, 3, 0)
    net = SharingNet(4, 2, 3, 0, lstm_A=A, gamma=0.4, beta=1.0)
    before = [p.value.copy() for p in net.lstm_A.params]
    opt = Adam(net.trainable, lr=1e-2)
    rng = np.random.default_rng(0)
    for _ in range(5):
        opt.zero_grad()
        net.loss(rng.uniform(size=(2, 3, 4)), rng.uniform(size=(2, 3, 4)), backward=True)
        opt.step()
    for p, b in zip(net.lstm_A.params, before):
        np.testing.assert_array_equal(p.value, b)
    assert all(p.name.startswith("lstm_A") for p in net.params if p.frozen)
    with pytest.raises(ValueError):
        net.lstm_A.U.value[0, 0] = 0.0


def test_permutation_equivariance():
    rng = np.random.default_rng(3)
    net = SharingNet(4, 2, 3, 0, lstm_A=LstmCellParams.init(2, 3, 1), gamma=0.2, beta=0.3)
    X = rng.uniform(size=(2, 5, 4))
    perm = np.array([2, 0, 3, 1])
    P = net.predict(X)
    for enc in (net.encoder_I, net.encoder_H):
        enc.W.value[...] = enc.W.value[:, perm]
    for head in (net.predictor, net.decoder):
        head.W.value[...] = head.W.value[perm]
        head.b.value[...] = head.b.value[perm]
    np.testing.assert_allclose(net.predict(X[:, :, perm]), P[:, :, perm], atol=1e-14)


def test_outputs_inside_unit_interval():
    rng = np.random.default_rng(0)
    for net in tiny_networks(0).values():
        P = net.predict(50 * rng.normal(size=(3, 4, 4)))
        assert np.all(np.abs(P) < 1.0)


def test_deterministic_forward():
    net = tiny_networks(1)["unkadf"]
    X = np.random.default_rng(0).uniform(size=(2, 3, 4))
    assert net.predict(X).tobytes() == net.predict(X).tobytes()


# HA and LR ---------------------------------------------------------------

def test_ha_constant_and_hand_average():
    d = DemandMatrix(["a"], np.full((48, 1), 5.0))
    np.testing.assert_array_equal(ha_forecast(d, np.arange(60)), 5.0)
    v = np.zeros((48, 1))
    v[9], v[33] = 2.0, 4.0
    ha = HistoricalAverage().fit(DemandMatrix(["a"], v))
    assert ha.predict([9])[0, 0] == 3.0
    assert ha.predict([9 + 24 * 5])[0, 0] == 3.0


def test_ha_uses_absolute_time_and_falls_back():
    # rows start at t0 = 5, so only hours 5..9 are seen
    d = DemandMatrix(["a", "b"], np.arange(10.0).reshape(5, 2), t0=5)
    ha = HistoricalAverage().fit(d)
    np.testing.assert_array_equal(ha.predict([5]), [[0.0, 1.0]])
    np.testing.assert_array_equal(ha.predict([0]), [d.values.mean(axis=0)])


def test_lr_recovers_ar1():
    x = 100.0 * 0.5 ** np.arange(30)
    w = make_windows(x[:, None], 1)
    lr = LinearAR().fit(w)
    assert lr.coef[0, 0] == pytest.approx(0.5, abs=1e-6)
    np.testing.assert_allclose(lr.predict(w)[:, 0], x[1:], atol=1e-6)


def test_lr_constant_series_and_singular():
    w = make_windows(np.full((20, 2), 3.0), 3)
    np.testing.assert_allclose(lr_fit_forecast(w, w), 3.0)
    w2 = make_windows(np.full((20, 1), np.inf), 2)
    with pytest.raises(NumericalError):
        LinearAR().fit(w2)


def test_lr_no_anti_learning_on_noise():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(400, 2))
        tr, te = make_windows(x[:300], 4), make_windows(x[300:], 4)
        lr = LinearAR().fit(tr)
        rmse = lambda w: np.sqrt(np.mean((lr.predict(w) - w.targets[:, -1]) ** 2))  # noqa
        assert rmse(te) >= rmse(tr)


def test_lstm_net_single_branch():
    net = LstmNet(3, 4, 0)
    assert net.loss(np.zeros((1, 2, 3)), np.zeros((1, 2, 3))).l2 == 0.0
