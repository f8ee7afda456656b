"""Bone-vector motion predictor: stacked LSTM with Monte Carlo dropout.

The network observes 50 bone-vector frames and autoregressively decodes 50
future frames; the decoder continues the encoder recurrence, feeding each
output back as the next input. Everything runs in float64 numpy with
hand-written backpropagation so gradients can be checked against finite
differences exactly.

Dropout masks sit after every LSTM layer, are tied across time steps
within one forward pass, and use inverted scaling, so the deterministic
mode is plain evaluation. Repeating stochastic passes with fresh masks
yields the Monte Carlo samples whose spread estimates the predictive
uncertainty.
"""

import copy
from dataclasses import dataclass, field

import numpy as np

from .arm_models import (AnthropometricParams, ArmBonePose,
                         reconstruct_arm)
from .errors import (DegenerateBone, DivergenceError, InsufficientSamples,
                     ShapeMismatch)
from .netutil import Adam, flat_seed, load_weight_file, save_weight_file

PREDICTOR_VERSION = "predictor-v1"
DEFAULT_DROPOUT_P = 0.10
DEFAULT_HORIZON_DT = 0.04  # s per predicted step at 25 Hz

_MIN_BONE_NORM = 1e-6


@dataclass(eq=False)
class PredictorWeights:
    """Three LSTM layers plus a dense output head.

    Gate blocks are packed (input, forget, cell, output) along the last
    axis: lstm_W[l] is (in_l, 4h), lstm_U[l] is (h, 4h), lstm_b[l] is (4h,).
    """

    input_size: int
    hidden_sizes: tuple
    output_size: int
    lstm_W: list
    lstm_U: list
    lstm_b: list
    head_W: np.ndarray
    head_b: np.ndarray
    version: str = PREDICTOR_VERSION

    def __post_init__(self):
        sizes = tuple(int(h) for h in self.hidden_sizes)
        object.__setattr__(self, "hidden_sizes", sizes)
        ins = (self.input_size,) + sizes[:-1]
        for l, (d_in, h) in enumerate(zip(ins, sizes)):
            if self.lstm_W[l].shape != (d_in, 4 * h):
                raise ShapeMismatch(f"lstm_W[{l}] must be {(d_in, 4 * h)}")
            if self.lstm_U[l].shape != (h, 4 * h):
                raise ShapeMismatch(f"lstm_U[{l}] must be {(h, 4 * h)}")
            if self.lstm_b[l].shape != (4 * h,):
                raise ShapeMismatch(f"lstm_b[{l}] must be {(4 * h,)}")
        if self.head_W.shape != (sizes[-1], self.output_size):
            raise ShapeMismatch("head_W does not chain with the last LSTM layer")
        if self.head_b.shape != (self.output_size,):
            raise ShapeMismatch("head_b has the wrong width")

    @property
    def n_layers(self) -> int:
        return len(self.hidden_sizes)

    def param_list(self) -> list:
        """Flat parameter order used by the optimizer and gradients."""
        out = []
        for l in range(self.n_layers):
            out.extend([self.lstm_W[l], self.lstm_U[l], self.lstm_b[l]])
        out.extend([self.head_W, self.head_b])
        return out

    def copy(self) -> "PredictorWeights":
        return copy.deepcopy(self)


def init_predictor_weights(hidden_sizes=(64, 64, 64), input_size=6,
                           output_size=6, seed=0) -> PredictorWeights:
    """Seeded uniform init scaled by fan-in; forget-gate bias starts at 1."""
    rng = np.random.default_rng([seed, 0x1574])
    sizes = tuple(int(h) for h in hidden_sizes)
    ins = (input_size,) + sizes[:-1]
    lstm_W, lstm_U, lstm_b = [], [], []
    for d_in, h in zip(ins, sizes):
        k = 1.0 / np.sqrt(h)
        lstm_W.append(rng.uniform(-k, k, (d_in, 4 * h)))
        lstm_U.append(rng.uniform(-k, k, (h, 4 * h)))
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0
        lstm_b.append(b)
    k = 1.0 / np.sqrt(sizes[-1])
    head_W = rng.uniform(-k, k, (sizes[-1], output_size))
    head_b = np.zeros(output_size)
    return PredictorWeights(input_size=input_size, hidden_sizes=sizes,
                            output_size=output_size, lstm_W=lstm_W,
                            lstm_U=lstm_U, lstm_b=lstm_b,
                            head_W=head_W, head_b=head_b)


def make_dropout_masks(w: PredictorWeights, p: float, rng, batch: int = 1) -> list:
    """One inverted-dropout mask per LSTM layer, tied across time steps."""
    if not (0.0 <= p < 1.0):
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    masks = []
    for h in w.hidden_sizes:
        if p == 0.0:
            masks.append(np.ones((batch, h)))
        else:
            keep = rng.random((batch, h)) >= p
            masks.append(keep.astype(np.float64) / (1.0 - p))
    return masks


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _forward(w: PredictorWeights, X: np.ndarray, masks, want_cache: bool):
    """Batched forward pass. X: (B, N, in); returns (Yhat (B, N, out), cache)."""
    B, N, d_in = X.shape
    if d_in != w.input_size:
        raise ShapeMismatch(f"input width {d_in} != {w.input_size}")
    L = w.n_layers
    M = N
    T = N + M
    if masks is None:
        masks = [np.ones((B, h)) for h in w.hidden_sizes]
    else:
        masks = [np.broadcast_to(np.asarray(m, dtype=np.float64),
                                 (B, h)) for m, h in zip(masks, w.hidden_sizes)]

    hs = [np.zeros((B, h)) for h in w.hidden_sizes]
    cs = [np.zeros((B, h)) for h in w.hidden_sizes]
    Yhat = np.empty((B, M, w.output_size))

    cache = None
    if want_cache:
        ins = (w.input_size,) + w.hidden_sizes[:-1]
        cache = {
            "Xin": [np.empty((B, T, d)) for d in ins],
            "Gates": [np.empty((B, T, 4 * h)) for h in w.hidden_sizes],
            "C": [np.empty((B, T, h)) for h in w.hidden_sizes],
            "TanhC": [np.empty((B, T, h)) for h in w.hidden_sizes],
            "H": [np.empty((B, T, h)) for h in w.hidden_sizes],
            "Hd": np.empty((B, M, w.hidden_sizes[-1])),
            "masks": masks,
            "N": N,
        }

    def step(x, t):
        for l in range(L):
            h = w.hidden_sizes[l]
            pre = x @ w.lstm_W[l] + hs[l] @ w.lstm_U[l] + w.lstm_b[l]
            i = _sigmoid(pre[:, :h])
            f = _sigmoid(pre[:, h:2 * h])
            g = np.tanh(pre[:, 2 * h:3 * h])
            o = _sigmoid(pre[:, 3 * h:])
            c = f * cs[l] + i * g
            tc = np.tanh(c)
            hnew = o * tc
            if want_cache:
                cache["Xin"][l][:, t] = x
                cache["Gates"][l][:, t, :h] = i
                cache["Gates"][l][:, t, h:2 * h] = f
                cache["Gates"][l][:, t, 2 * h:3 * h] = g
                cache["Gates"][l][:, t, 3 * h:] = o
                cache["C"][l][:, t] = c
                cache["TanhC"][l][:, t] = tc
                cache["H"][l][:, t] = hnew
            cs[l] = c
            hs[l] = hnew
            x = hnew * masks[l]
        return x

    for t in range(N):
        step(X[:, t], t)
    y = X[:, N - 1]
    for m in range(M):
        dropped_top = step(y, N + m)
        if want_cache:
            cache["Hd"][:, m] = dropped_top
        y = dropped_top @ w.head_W + w.head_b
        Yhat[:, m] = y
    return Yhat, cache


def lstm_forward(X, w: PredictorWeights, masks=None,
                 mode: str = "deterministic") -> np.ndarray:
    """Predict future bone vectors for one observation window.

    X: (N, 6) observed window. mode "deterministic" forbids masks (plain
    expectation-scaled evaluation); modes "train"/"mc" require one mask per
    LSTM layer. Returns (N, 6).
    """
    if mode not in ("deterministic", "train", "mc"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "deterministic" and masks is not None:
        raise ValueError("deterministic mode takes no dropout masks")
    if mode != "deterministic" and masks is None:
        raise ValueError(f"mode {mode!r} requires dropout masks")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeMismatch(f"X must be 2-D, got shape {X.shape}")
    Yhat, _ = _forward(w, X[None], masks, want_cache=False)
    return Yhat[0]


def predictor_loss_and_grad(w: PredictorWeights, X, Y, masks=None):
    """Mean-squared error over all predicted steps and its gradients.

    X, Y: (B, N, 6). Returns (loss, grads) with grads in param_list order.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    Yhat, cache = _forward(w, X, masks, want_cache=True)
    if Yhat.shape != Y.shape:
        raise ShapeMismatch(f"label shape {Y.shape} != prediction {Yhat.shape}")
    B, M, dout = Y.shape
    diff = Yhat - Y
    loss = float(np.mean(diff * diff))
    dY = (2.0 / diff.size) * diff

    L = w.n_layers
    N = cache["N"]
    T = N + M
    masks = cache["masks"]
    dGates = [np.zeros_like(cache["Gates"][l]) for l in range(L)]
    dh_next = [np.zeros((B, h)) for h in w.hidden_sizes]
    dc_next = [np.zeros((B, h)) for h in w.hidden_sizes]
    d_head_W = np.zeros_like(w.head_W)
    d_head_b = np.zeros_like(w.head_b)
    carry_dy = np.zeros((B, dout))

    for t in range(T - 1, -1, -1):
        if t >= N:
            m = t - N
            dy = dY[:, m] + carry_dy
            d_head_W += cache["Hd"][:, m].T @ dy
            d_head_b += dy.sum(axis=0)
            dh_above = (dy @ w.head_W.T) * masks[L - 1]
        else:
            dh_above = np.zeros((B, w.hidden_sizes[L - 1]))
        for l in range(L - 1, -1, -1):
            h = w.hidden_sizes[l]
            dh = dh_above + dh_next[l]
            gates = cache["Gates"][l][:, t]
            i = gates[:, :h]
            f = gates[:, h:2 * h]
            g = gates[:, 2 * h:3 * h]
            o = gates[:, 3 * h:]
            tc = cache["TanhC"][l][:, t]
            c_prev = cache["C"][l][:, t - 1] if t > 0 else np.zeros((B, h))
            dc = dh * o * (1.0 - tc * tc) + dc_next[l]
            dg_block = dGates[l][:, t]
            dg_block[:, :h] = dc * g * i * (1.0 - i)
            dg_block[:, h:2 * h] = dc * c_prev * f * (1.0 - f)
            dg_block[:, 2 * h:3 * h] = dc * i * (1.0 - g * g)
            dg_block[:, 3 * h:] = dh * tc * o * (1.0 - o)
            dc_next[l] = dc * f
            dh_next[l] = dg_block @ w.lstm_U[l].T
            d_xin = dg_block @ w.lstm_W[l].T
            if l > 0:
                dh_above = d_xin * masks[l - 1]
        if t > N:
            carry_dy = d_xin

    grads = []
    for l in range(L):
        Xin = cache["Xin"][l]
        H = cache["H"][l]
        Hprev = np.concatenate([np.zeros((B, 1, H.shape[2])), H[:, :-1]], axis=1)
        dW = np.tensordot(Xin, dGates[l], axes=([0, 1], [0, 1]))
        dU = np.tensordot(Hprev, dGates[l], axes=([0, 1], [0, 1]))
        db = dGates[l].sum(axis=(0, 1))
        grads.extend([dW, dU, db])
    grads.extend([d_head_W, d_head_b])
    return loss, grads


def predictor_mse(w: PredictorWeights, X, Y) -> float:
    """Deterministic-mode MSE of a window batch."""
    Yhat, _ = _forward(w, np.asarray(X, dtype=np.float64), None, want_cache=False)
    d = Yhat - np.asarray(Y, dtype=np.float64)
    return float(np.mean(d * d))


@dataclass(eq=False)
class PredictorHyper:
    """Training knobs for the motion predictor."""

    lr: float = 2e-3
    batch: int = 64
    epochs: int = 8
    seed: int = 0
    dropout_p: float = DEFAULT_DROPOUT_P
    hidden_sizes: tuple = (64, 64, 64)
    train_window_cap: int = 3072   # windows drawn per epoch; 0 = all
    val_window_cap: int = 512      # windows used for validation; 0 = all


def _stack_windows(windows) -> tuple:
    X = np.stack([np.asarray(w.X, dtype=np.float64) for w in windows])
    Y = np.stack([np.asarray(w.Y, dtype=np.float64) for w in windows])
    return X, Y


def train_predictor(train_windows, val_windows, hyper: PredictorHyper):
    """Mini-batch Adam on window MSE with dropout active.

    Returns (best-validation weights, history) where history rows are
    {"epoch", "train_loss", "val_loss"}. Deterministic per seed.
    """
    if not train_windows or not val_windows:
        raise ValueError("train and validation splits must be non-empty")
    w = init_predictor_weights(hidden_sizes=hyper.hidden_sizes, seed=hyper.seed)
    rng = np.random.default_rng(flat_seed(hyper.seed, 0x7A1))
    Xtr, Ytr = _stack_windows(train_windows)
    val_sel = np.arange(len(val_windows))
    if hyper.val_window_cap and len(val_sel) > hyper.val_window_cap:
        val_sel = rng.permutation(len(val_sel))[:hyper.val_window_cap]
    Xva, Yva = _stack_windows([val_windows[i] for i in val_sel])

    opt = Adam(w.param_list(), lr=hyper.lr)
    history = []
    best_val = np.inf
    best = w.copy()
    for epoch in range(hyper.epochs):
        order = rng.permutation(Xtr.shape[0])
        if hyper.train_window_cap and order.size > hyper.train_window_cap:
            order = order[:hyper.train_window_cap]
        losses = []
        for s in range(0, order.size, hyper.batch):
            idx = order[s:s + hyper.batch]
            masks = make_dropout_masks(w, hyper.dropout_p, rng, batch=idx.size)
            loss, grads = predictor_loss_and_grad(w, Xtr[idx], Ytr[idx], masks)
            if not np.isfinite(loss):
                raise DivergenceError(f"training loss became {loss} at epoch {epoch}")
            opt.step(grads)
            losses.append(loss)
        val_loss = predictor_mse(w, Xva, Yva)
        if not np.isfinite(val_loss):
            raise DivergenceError(f"validation loss became {val_loss}")
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)),
                        "val_loss": val_loss})
        if val_loss < best_val:
            best_val = val_loss
            best = w.copy()
    return best, history


def mc_dropout_sample(X, w: PredictorWeights, K: int,
                      p: float = DEFAULT_DROPOUT_P, seed=0) -> np.ndarray:
    """K stochastic forward passes with fresh dropout masks.

    Passes run sequentially (one network evaluation per sample), so the
    wall cost grows linearly in K. Returns raw samples (K, N, 6),
    deterministic per seed.
    """
    if K < 2:
        raise InsufficientSamples(f"need K >= 2 Monte Carlo samples, got {K}")
    X = np.asarray(X, dtype=np.float64)
    rng = np.random.default_rng(flat_seed(seed, 0x3C))
    out = np.empty((K, X.shape[0], w.output_size))
    for k in range(K):
        masks = make_dropout_masks(w, p, rng, batch=1)
        Yhat, _ = _forward(w, X[None], masks, want_cache=False)
        out[k] = Yhat[0]
    return out


def predictive_moments(samples) -> tuple:
    """Predictive mean and unbiased per-dimension variance of MC samples.

    samples: (K, M, D). Computes u = (sum_k F_k*F_k - K*E*E) / (K-1)
    elementwise, which equals the textbook unbiased sample variance.
    """
    s = np.asarray(samples, dtype=np.float64)
    K = s.shape[0]
    if K < 2:
        raise InsufficientSamples(f"variance needs K >= 2 samples, got {K}")
    E = s.mean(axis=0)
    u = (np.sum(s * s, axis=0) - K * E * E) / (K - 1)
    u = np.maximum(u, 0.0)
    u[np.ptp(s, axis=0) == 0.0] = 0.0  # identical samples have exactly no spread
    return E, u


@dataclass(frozen=True, eq=False)
class UncertainPrediction:
    """K sampled future bone trajectories plus their mean and variance.

    Samples are stored with every bone row renormalized to unit length;
    mean and variance are the moments of the stored samples.
    """

    samples: np.ndarray   # (K, M, 6)
    mean: np.ndarray      # (M, 6)
    variance: np.ndarray  # (M, 6)
    horizon_dt: float = DEFAULT_HORIZON_DT

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_steps(self) -> int:
        return self.samples.shape[1]

    @classmethod
    def from_raw_samples(cls, raw, horizon_dt: float = DEFAULT_HORIZON_DT):
        """Renormalize raw network outputs and take their moments."""
        raw = np.asarray(raw, dtype=np.float64)
        K, M, D = raw.shape
        if D != 6:
            raise ShapeMismatch(f"samples must be (K, M, 6), got {raw.shape}")
        bones = raw.reshape(K, M, 2, 3)
        norms = np.linalg.norm(bones, axis=3)
        if np.any(norms < _MIN_BONE_NORM):
            raise DegenerateBone("a sampled bone vector has near-zero norm")
        unit = (bones / norms[..., None]).reshape(K, M, 6)
        E, u = predictive_moments(unit)
        return cls(samples=unit, mean=E, variance=u, horizon_dt=float(horizon_dt))


def predict_with_uncertainty(X, w: PredictorWeights, K: int = 5,
                             p: float = DEFAULT_DROPOUT_P, seed=0,
                             horizon_dt: float = DEFAULT_HORIZON_DT) -> UncertainPrediction:
    """MC-dropout sampling followed by moment estimation."""
    raw = mc_dropout_sample(X, w, K, p=p, seed=seed)
    return UncertainPrediction.from_raw_samples(raw, horizon_dt=horizon_dt)


def prediction_to_poses(pred: UncertainPrediction, p_h: AnthropometricParams,
                        horizons) -> list:
    """Reconstructed arm poses per horizon step and sample.

    Returns a list over horizons; each entry is a list of K
    ArmJointPositions. Bone rows renormalize before reconstruction, so the
    poses keep exact segment lengths.
    """
    M = pred.n_steps
    hz = [int(h) for h in horizons]
    if any(h < 0 or h >= M for h in hz):
        raise ValueError(f"horizons must lie in [0, {M}), got {horizons}")
    out = []
    for h in hz:
        row = []
        for k in range(pred.n_samples):
            b = pred.samples[k, h].reshape(2, 3)
            n = np.linalg.norm(b, axis=1)
            if np.any(n < _MIN_BONE_NORM):
                raise DegenerateBone("sampled bone has near-zero norm")
            b = b / n[:, None]
            row.append(reconstruct_arm(ArmBonePose(phi1=b[0], phi2=b[1]), p_h))
        out.append(row)
    return out


def save_predictor(path, w: PredictorWeights) -> None:
    arrays = {}
    for l in range(w.n_layers):
        arrays[f"lstm_W{l}"] = w.lstm_W[l]
        arrays[f"lstm_U{l}"] = w.lstm_U[l]
        arrays[f"lstm_b{l}"] = w.lstm_b[l]
    arrays["head_W"] = w.head_W
    arrays["head_b"] = w.head_b
    save_weight_file(path, w.version, w.hidden_sizes, arrays,
                     extra={"input_size": w.input_size,
                            "output_size": w.output_size})


def load_predictor(path) -> PredictorWeights:
    doc = load_weight_file(path, PREDICTOR_VERSION)
    sizes = tuple(doc["layer_sizes"])
    arrays = doc["arrays"]
    L = len(sizes)
    return PredictorWeights(
        input_size=int(doc["input_size"]),
        hidden_sizes=sizes,
        output_size=int(doc["output_size"]),
        lstm_W=[arrays[f"lstm_W{l}"] for l in range(L)],
        lstm_U=[arrays[f"lstm_U{l}"] for l in range(L)],
        lstm_b=[arrays[f"lstm_b{l}"] for l in range(L)],
        head_W=arrays["head_W"],
        head_b=arrays["head_b"],
    )
