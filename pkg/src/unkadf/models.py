"""Network definitions and non-neural baselines.

* :class:`PretrainNet` - source-side encoder -> LSTM_A -> predictor, plus a
  reconstruction decoder on the encoding.
* :class:`SharingNet` - target-side network: individual and sharing encoders,
  LSTM_I and LSTM_H, a frozen copy of LSTM_A fed the sharing encoding, a
  predictor over ``[h_I; h_H]`` and a decoder over ``[x_I; x_H]``. The
  ablation variants switch the decoder and/or the frozen branch off.
* :class:`FineTuneNet` - encoder -> LSTM warm-started from LSTM_A -> predictor.
* :class:`LstmNet` - plain LSTM on raw station input.
* :class:`HistoricalAverage`, :class:`LinearAR` - HA and LR baselines.

All networks take windows ``X`` of shape (batch, tau, N) and emit one-step
predictions ``P`` of the same shape, ``P[:, t]`` estimating ``X[:, t + 1]``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .data import STEPS_PER_DAY, DemandMatrix, WindowBatch
from .errors import ConfigError, DimensionError, IncompatibleArtifactError, NumericalError
from .nn import Dense, LstmCellParams, LstmState, Param, lstm_backward, lstm_forward, mse, mse_grad


class VariantKind(str, enum.Enum):
    LSTM = "lstm"
    ENCODER_LSTM = "encoder-lstm"
    ENCODER_DECODER = "encoder-decoder"
    ENCODER_ADAPTATION = "encoder-adaptation"
    UNKADF = "unkadf"
    FINETUNE = "finetune"
    HA = "ha"
    LR = "lr"

    @classmethod
    def parse(cls, value) -> "VariantKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace("_", "-"))
        except ValueError:
            raise ConfigError(f"unknown model variant {value!r}") from None

    @property
    def needs_artifact(self) -> bool:
        return self in (VariantKind.ENCODER_ADAPTATION, VariantKind.UNKADF, VariantKind.FINETUNE)

    @property
    def neural(self) -> bool:
        return self not in (VariantKind.HA, VariantKind.LR)


@dataclass
class LossParts:
    total: float
    l1: float
    l2: float = 0.0
    l3: float = 0.0


def _check_window(X, n):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[2] != n:
        raise DimensionError(f"expected windows of shape (batch, tau, {n}), got {X.shape}")
    return X


class _Net:
    """Shared plumbing: parameter listing and gradient reset."""

    n_stations: int

    @property
    def params(self) -> list[Param]:
        raise NotImplementedError

    @property
    def trainable(self) -> list[Param]:
        return [p for p in self.params if not p.frozen]

    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def named_params(self) -> dict[str, Param]:
        return {p.name: p for p in self.params}

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.params}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        for p in self.params:
            if p.frozen:
                continue
            p.value[...] = state[p.name]

    def predict(self, X) -> np.ndarray:
        raise NotImplementedError

    def loss(self, X, Y, backward=False) -> LossParts:
        raise NotImplementedError


# --------------------------------------------------------------------------
# source pre-training network

class PretrainNet(_Net):
    def __init__(self, n_stations: int, embed_dim: int, hidden_dim: int, seed: int = 0):
        self.n_stations = n_stations
        self.encoder = Dense("encoder", n_stations, embed_dim, seed)
        self.lstm = LstmCellParams.init(embed_dim, hidden_dim, seed, prefix="lstm_A")
        self.predictor = Dense("predictor", hidden_dim, n_stations, seed)
        self.decoder = Dense("decoder", embed_dim, n_stations, seed)

    @property
    def embed_dim(self) -> int:
        return self.encoder.n_out

    @property
    def hidden_dim(self) -> int:
        return self.lstm.m

    @property
    def params(self):
        return (self.encoder.params + self.lstm.params + self.predictor.params
                + self.decoder.params)

    def forward(self, X):
        X = _check_window(X, self.n_stations)
        Xe = self.encoder.forward(X)
        H, C, cache = lstm_forward(self.lstm, Xe)
        P = self.predictor.forward(H)
        R = self.decoder.forward(Xe)
        return X, Xe, H, C, cache, P, R

    def predict(self, X):
        return self.forward(X)[5]

    def loss(self, X, Y, backward=False) -> LossParts:
        X, Xe, H, C, cache, P, R = self.forward(X)
        Y = _check_window(Y, self.n_stations)
        l1 = mse(P, Y)
        l2 = mse(R, X)
        if backward:
            dH = self.predictor.backward(H, P, mse_grad(P, Y))
            dXe = lstm_backward(self.lstm, cache, dH=dH)
            dXe += self.decoder.backward(Xe, R, mse_grad(R, X))
            self.encoder.backward(X, Xe, dXe)
        return LossParts(l1 + l2, l1, l2, 0.0)


def pretrain_forward(net: PretrainNet, window):
    """Single window (tau, N_S) -> (predictions, reconstructions, states)."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2:
        raise DimensionError(f"window must be (tau, N), got {window.shape}")
    _, _, H, C, _, P, R = net.forward(window[None])
    states = [LstmState(H[0, t].copy(), C[0, t].copy()) for t in range(H.shape[1])]
    return P[0], R[0], states


def pretrain_loss(predictions, reconstructions, window_targets, window_inputs) -> float:
    return mse(predictions, window_targets) + mse(reconstructions, window_inputs)


# --------------------------------------------------------------------------
# target model-sharing network and its ablations

@dataclass
class SharingOutputs:
    predictions: np.ndarray
    reconstructions: np.ndarray | None
    c_PH: np.ndarray
    c_PS: np.ndarray | None


class SharingNet(_Net):
    """Target network. ``use_decoder``/``use_adaptation`` select the variant."""

    def __init__(self, n_stations: int, embed_dim: int, hidden_dim: int, seed: int = 0,
                 lstm_A: LstmCellParams | None = None, gamma: float = 0.0, beta: float = 0.0,
                 use_decoder: bool = True, use_adaptation: bool = True):
        if gamma < 0 or beta < 0:
            raise ConfigError("gamma and beta must be non-negative")
        if use_adaptation:
            if lstm_A is None:
                raise ConfigError("the adaptation branch needs a pre-trained LSTM")
            if lstm_A.n != embed_dim or lstm_A.m != hidden_dim:
                raise IncompatibleArtifactError(
                    f"artifact has K={lstm_A.n}, m={lstm_A.m}; "
                    f"model configured with K={embed_dim}, m={hidden_dim}")
        self.n_stations = n_stations
        self.use_decoder = use_decoder
        self.use_adaptation = use_adaptation
        self.gamma = float(gamma) if use_decoder else 0.0
        self.beta = float(beta) if use_adaptation else 0.0
        self.encoder_I = Dense("encoder_I", n_stations, embed_dim, seed)
        self.encoder_H = Dense("encoder_H", n_stations, embed_dim, seed)
        self.lstm_I = LstmCellParams.init(embed_dim, hidden_dim, seed, prefix="lstm_I")
        self.lstm_H = LstmCellParams.init(embed_dim, hidden_dim, seed, prefix="lstm_H")
        self.lstm_A = lstm_A.copy(prefix="lstm_A", frozen=True) if use_adaptation else None
        self.predictor = Dense("predictor", 2 * hidden_dim, n_stations, seed)
        self.decoder = Dense("decoder", 2 * embed_dim, n_stations, seed) if use_decoder else None

    @property
    def embed_dim(self) -> int:
        return self.encoder_I.n_out

    @property
    def hidden_dim(self) -> int:
        return self.lstm_I.m

    @property
    def params(self):
        ps = (self.encoder_I.params + self.encoder_H.params + self.lstm_I.params
              + self.lstm_H.params)
        if self.lstm_A is not None:
            ps += self.lstm_A.params
        ps += self.predictor.params
        if self.decoder is not None:
            ps += self.decoder.params
        return ps

    def _forward(self, X):
        X = _check_window(X, self.n_stations)
        XI = self.encoder_I.forward(X)
        XH = self.encoder_H.forward(X)
        HI, CI, cache_I = lstm_forward(self.lstm_I, XI)
        HH, CH, cache_H = lstm_forward(self.lstm_H, XH)
        if self.lstm_A is not None:
            _, CS, cache_A = lstm_forward(self.lstm_A, XH)
        else:
            CS, cache_A = None, None
        Hcat = np.concatenate([HI, HH], axis=2)
        P = self.predictor.forward(Hcat)
        if self.decoder is not None:
            Xcat = np.concatenate([XI, XH], axis=2)
            R = self.decoder.forward(Xcat)
        else:
            Xcat, R = None, None
        return dict(X=X, XI=XI, XH=XH, HI=HI, HH=HH, CH=CH, CS=CS, cache_I=cache_I,
                    cache_H=cache_H, cache_A=cache_A, Hcat=Hcat, P=P, Xcat=Xcat, R=R)

    def forward(self, X) -> SharingOutputs:
        f = self._forward(X)
        return SharingOutputs(f["P"], f["R"], f["CH"], f["CS"])

    def predict(self, X):
        return self._forward(X)["P"]

    def loss(self, X, Y, backward=False) -> LossParts:
        f = self._forward(X)
        X = f["X"]
        Y = _check_window(Y, self.n_stations)
        P, R, CH, CS = f["P"], f["R"], f["CH"], f["CS"]
        l1 = mse(P, Y)
        l2 = mse(R, X) if R is not None else 0.0
        l3 = mse(CH, CS) if CS is not None else 0.0
        total = l1 + self.gamma * l2 + self.beta * l3
        if backward:
            self._backward(f, Y)
        return LossParts(total, l1, l2, l3)

    def _backward(self, f, Y):
        m = self.hidden_dim
        K = self.embed_dim
        X, P = f["X"], f["P"]
        dHcat = self.predictor.backward(f["Hcat"], P, mse_grad(P, Y))
        dHI = dHcat[:, :, :m]
        dHH = dHcat[:, :, m:]
        dCH = None
        dXH_extra = None
        if f["CS"] is not None and self.beta != 0.0:
            g3 = self.beta * mse_grad(f["CH"], f["CS"])
            dCH = g3
            # gradient reaches encoder_H through the frozen cell; its weights get none
            dXH_extra = lstm_backward(self.lstm_A, f["cache_A"], dC=-g3, param_grads=False)
        dXI = lstm_backward(self.lstm_I, f["cache_I"], dH=dHI)
        dXH = lstm_backward(self.lstm_H, f["cache_H"], dH=dHH, dC=dCH)
        if dXH_extra is not None:
            dXH += dXH_extra
        if self.decoder is not None:
            R = f["R"]
            dXcat = self.decoder.backward(f["Xcat"], R, self.gamma * mse_grad(R, X))
            dXI += dXcat[:, :, :K]
            dXH += dXcat[:, :, K:]
        self.encoder_I.backward(X, f["XI"], dXI)
        self.encoder_H.backward(X, f["XH"], dXH)


def sharing_forward(net: SharingNet, window):
    """Single window (tau, N_P) -> (predictions, reconstructions, c_PH, c_PS)."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2:
        raise DimensionError(f"window must be (tau, N), got {window.shape}")
    out = net.forward(window[None])
    rec = None if out.reconstructions is None else out.reconstructions[0]
    cps = None if out.c_PS is None else out.c_PS[0]
    return out.predictions[0], rec, out.c_PH[0], cps


def unkadf_loss(outputs: SharingOutputs, window_inputs, window_targets, gamma, beta):
    """``(total, L1, L2, L3)`` with total = L1 + gamma L2 + beta L3."""
    if gamma < 0 or beta < 0:
        raise ConfigError("gamma and beta must be non-negative")
    l1 = mse(outputs.predictions, window_targets)
    l2 = mse(outputs.reconstructions, window_inputs) if outputs.reconstructions is not None else 0.0
    l3 = mse(outputs.c_PH, outputs.c_PS) if outputs.c_PS is not None else 0.0
    return l1 + gamma * l2 + beta * l3, l1, l2, l3


# --------------------------------------------------------------------------
# single-branch baselines

class LstmNet(_Net):
    """LSTM directly on the raw station vector, tanh predictor head."""

    def __init__(self, n_stations: int, hidden_dim: int, seed: int = 0):
        self.n_stations = n_stations
        self.lstm = LstmCellParams.init(n_stations, hidden_dim, seed, prefix="lstm")
        self.predictor = Dense("predictor", hidden_dim, n_stations, seed)

    @property
    def params(self):
        return self.lstm.params + self.predictor.params

    def predict(self, X):
        X = _check_window(X, self.n_stations)
        H, _, _ = lstm_forward(self.lstm, X)
        return self.predictor.forward(H)

    def loss(self, X, Y, backward=False) -> LossParts:
        X = _check_window(X, self.n_stations)
        Y = _check_window(Y, self.n_stations)
        H, _, cache = lstm_forward(self.lstm, X)
        P = self.predictor.forward(H)
        l1 = mse(P, Y)
        if backward:
            dH = self.predictor.backward(H, P, mse_grad(P, Y))
            lstm_backward(self.lstm, cache, dH=dH)
        return LossParts(l1, l1)


class FineTuneNet(_Net):
    """Encoder -> LSTM initialised from the shared weights -> predictor.

    Everything is trainable, including the warm-started LSTM.
    """

    def __init__(self, n_stations: int, embed_dim: int, hidden_dim: int, seed: int,
                 lstm_A: LstmCellParams):
        if lstm_A.n != embed_dim or lstm_A.m != hidden_dim:
            raise IncompatibleArtifactError(
                f"artifact has K={lstm_A.n}, m={lstm_A.m}; "
                f"model configured with K={embed_dim}, m={hidden_dim}")
        self.n_stations = n_stations
        self.encoder = Dense("encoder", n_stations, embed_dim, seed)
        self.lstm = lstm_A.copy(prefix="lstm", frozen=False)
        self.predictor = Dense("predictor", hidden_dim, n_stations, seed)

    @property
    def params(self):
        return self.encoder.params + self.lstm.params + self.predictor.params

    def predict(self, X):
        X = _check_window(X, self.n_stations)
        H, _, _ = lstm_forward(self.lstm, self.encoder.forward(X))
        return self.predictor.forward(H)

    def loss(self, X, Y, backward=False) -> LossParts:
        X = _check_window(X, self.n_stations)
        Y = _check_window(Y, self.n_stations)
        Xe = self.encoder.forward(X)
        H, _, cache = lstm_forward(self.lstm, Xe)
        P = self.predictor.forward(H)
        l1 = mse(P, Y)
        if backward:
            dH = self.predictor.backward(H, P, mse_grad(P, Y))
            dXe = lstm_backward(self.lstm, cache, dH=dH)
            self.encoder.backward(X, Xe, dXe)
        return LossParts(l1, l1)


def build_variant(kind, n_stations: int, embed_dim: int = 64, hidden_dim: int = 64,
                  seed: int = 0, artifact=None, gamma: float = 0.0, beta: float = 0.0):
    """Construct the network for a variant.

    ``artifact`` is a :class:`~unkadf.artifact.PretrainedArtifact` (or bare
    :class:`LstmCellParams`) and is required exactly for the variants that
    use pre-trained knowledge.
    """
    kind = VariantKind.parse(kind)
    if not kind.neural:
        raise ConfigError(f"{kind.value} is not a neural variant")
    if kind.needs_artifact and artifact is None:
        raise ConfigError(f"variant {kind.value} needs a pre-trained artifact")
    lstm_A = None
    if kind.needs_artifact:
        lstm_A = artifact if isinstance(artifact, LstmCellParams) else artifact.lstm
    if kind is VariantKind.LSTM:
        return LstmNet(n_stations, hidden_dim, seed)
    if kind is VariantKind.FINETUNE:
        return FineTuneNet(n_stations, embed_dim, hidden_dim, seed, lstm_A)
    decoder = kind in (VariantKind.UNKADF, VariantKind.ENCODER_DECODER)
    adaptation = kind in (VariantKind.UNKADF, VariantKind.ENCODER_ADAPTATION)
    return SharingNet(n_stations, embed_dim, hidden_dim, seed, lstm_A=lstm_A,
                      gamma=gamma, beta=beta, use_decoder=decoder, use_adaptation=adaptation)


# --------------------------------------------------------------------------
# HA and LR

class HistoricalAverage:
    """Mean demand per (station, hour of day) over the training rows.

    Hours with no training rows fall back to the station mean.
    """

    def __init__(self, steps_per_day: int = STEPS_PER_DAY):
        self.steps_per_day = steps_per_day
        self.table = None

    def fit(self, train: DemandMatrix) -> "HistoricalAverage":
        v = train.values
        hours = (train.t0 + np.arange(train.T)) % self.steps_per_day
        station_mean = v.mean(axis=0)
        table = np.tile(station_mean, (self.steps_per_day, 1))
        for h in range(self.steps_per_day):
            rows = hours == h
            if rows.any():
                table[h] = v[rows].mean(axis=0)
        self.table = table
        return self

    def predict(self, query_times) -> np.ndarray:
        q = np.asarray(query_times, dtype=np.int64) % self.steps_per_day
        return self.table[q]


def ha_forecast(train: DemandMatrix, query_times) -> np.ndarray:
    return HistoricalAverage().fit(train).predict(query_times)


class LinearAR:
    """Per-station least squares from the station's own tau lags to the next value.

    Fitted on centred features with ridge ``ridge`` so the intercept is not
    penalised; a constant series yields an intercept-only model.
    """

    def __init__(self, ridge: float = 1e-8):
        self.ridge = ridge
        self.coef = None       # (N, tau)
        self.intercept = None  # (N,)

    def fit(self, windows: WindowBatch) -> "LinearAR":
        Xall = windows.inputs          # (B, tau, N)
        yall = windows.targets[:, -1, :]
        B, tau, N = Xall.shape
        coef = np.empty((N, tau))
        intercept = np.empty(N)
        for i in range(N):
            F = Xall[:, :, i]
            y = yall[:, i]
            fm = F.mean(axis=0)
            ym = y.mean()
            Fc = F - fm
            G = Fc.T @ Fc + self.ridge * np.eye(tau)
            try:
                w = np.linalg.solve(G, Fc.T @ (y - ym))
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"singular least-squares system for station {i}") from exc
            if not np.all(np.isfinite(w)):
                raise NumericalError(f"non-finite least-squares solution for station {i}")
            coef[i] = w
            intercept[i] = ym - fm @ w
        self.coef, self.intercept = coef, intercept
        return self

    def predict(self, windows: WindowBatch | np.ndarray) -> np.ndarray:
        X = windows.inputs if isinstance(windows, WindowBatch) else np.asarray(windows)
        return np.einsum("btn,nt->bn", X, self.coef) + self.intercept


def lr_fit_forecast(train_windows: WindowBatch, eval_windows: WindowBatch) -> np.ndarray:
    """One-step predictions (B_eval, N) for the step after each eval window."""
    return LinearAR().fit(train_windows).predict(eval_windows)
