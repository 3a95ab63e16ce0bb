"""Sequence-autoencoder anomaly detector on measurement windows.

A stack of LSTM layers compresses each length-T window channel-wise
z-scored to a latent vector (the last hidden state), the latent is
repeated T times, a mirrored LSTM stack expands it back, and a shared
dense layer maps hidden states to the measurement dimension.  The score
is the mean squared reconstruction error per element; the alarm
threshold is calibrated to a false-positive-rate target on a held-out
normal set.

Training and identification both run on the autodiff tape; scoring uses
a numpy twin of the same forward pass (kept in lockstep by tests).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .autodiff import AdamState, Node, Tape, adam_step

MODEL_FORMAT_VERSION = 1

# width profile of the reference encoder (input 68 -> 48 -> 29 -> 10),
# applied as fractions of whatever the measurement dimension is
WIDTH_FRACTIONS = (48.0 / 68.0, 29.0 / 68.0, 10.0 / 68.0)


class TrainingError(RuntimeError):
    pass


def derive_widths(d_in: int, fractions=WIDTH_FRACTIONS) -> list[int]:
    return [max(2, round(d_in * f)) for f in fractions]


# ----------------------------------------------------------------------
# parameters
# ----------------------------------------------------------------------

def _orthogonal_recurrent(h: int, rng: np.random.Generator) -> np.ndarray:
    """(H, 4H) recurrent matrix, one orthogonal block per gate."""
    blocks = []
    for _ in range(4):
        q, r = np.linalg.qr(rng.standard_normal((h, h)))
        blocks.append(q * np.sign(np.diag(r)))
    return np.concatenate(blocks, axis=1)


def _init_lstm_layer(d_in: int, h: int, rng: np.random.Generator):
    k = 1.0 / np.sqrt(d_in)
    wx = rng.uniform(-k, k, size=(d_in, 4 * h))
    wh = _orthogonal_recurrent(h, rng)
    b = np.zeros(4 * h)
    b[h: 2 * h] = 1.0          # forget-gate bias
    return [wx, wh, b]


def init_parameters(d_in: int, enc_widths: list[int], seed: int) -> list[np.ndarray]:
    """Flat parameter list: encoder layers, decoder layers, output dense."""
    rng = np.random.default_rng(seed)
    params: list[np.ndarray] = []
    prev = d_in
    for h in enc_widths:
        params += _init_lstm_layer(prev, h, rng)
        prev = h
    dec_widths = list(reversed(enc_widths))[1:]
    for h in dec_widths:
        params += _init_lstm_layer(prev, h, rng)
        prev = h
    k = 1.0 / np.sqrt(prev)
    params.append(rng.uniform(-k, k, size=(prev, d_in)))
    params.append(np.zeros(d_in))
    return params


def _layer_slices(enc_widths: list[int]):
    """(width, param offset) per LSTM layer in flat-parameter order."""
    dec_widths = list(reversed(enc_widths))[1:]
    layers = enc_widths + dec_widths
    return [(h, 3 * i) for i, h in enumerate(layers)], 3 * len(layers)


# ----------------------------------------------------------------------
# forward passes: numpy twin and tape version
# ----------------------------------------------------------------------

def _sigmoid_np(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _cell_np(wx, wh, b, x, h, c):
    zz = x @ wx + h @ wh + b
    hh = wh.shape[0]
    i = _sigmoid_np(zz[:, :hh])
    f = _sigmoid_np(zz[:, hh:2 * hh])
    g = np.tanh(zz[:, 2 * hh:3 * hh])
    o = _sigmoid_np(zz[:, 3 * hh:])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


def _unroll_np(params, offset, h_dim, xs):
    bsz = xs[0].shape[0]
    h = np.zeros((bsz, h_dim))
    c = np.zeros((bsz, h_dim))
    wx, wh, b = params[offset], params[offset + 1], params[offset + 2]
    out = []
    for x in xs:
        h, c = _cell_np(wx, wh, b, x, h, c)
        out.append(h)
    return out


def forward_np(params, enc_widths, xs: list[np.ndarray]) -> list[np.ndarray]:
    """Reconstruction per time step for a batch; xs is T arrays (B, D)."""
    layers, dense_at = _layer_slices(enc_widths)
    n_enc = len(enc_widths)
    seq = xs
    for h_dim, off in layers[:n_enc]:
        seq = _unroll_np(params, off, h_dim, seq)
    latent = seq[-1]
    seq = [latent] * len(xs)
    for h_dim, off in layers[n_enc:]:
        seq = _unroll_np(params, off, h_dim, seq)
    w_out, b_out = params[dense_at], params[dense_at + 1]
    return [h @ w_out + b_out for h in seq]


def loss_np(params, enc_widths, xs: list[np.ndarray]) -> float:
    recon = forward_np(params, enc_widths, xs)
    bsz, d = xs[0].shape
    total = 0.0
    for x, y in zip(xs, recon):
        diff = y - x
        total += float((diff * diff).sum())
    return total / (bsz * len(xs) * d)


def _cell_tape(tape: Tape, wx: Node, wh: Node, b: Node, x: Node,
               h: Node, c: Node, h_dim: int):
    zz = tape.add(tape.add(tape.matmul(x, wx), tape.matmul(h, wh)), b)
    i = tape.sigmoid(tape.slice_axis(zz, 1, 0, h_dim))
    f = tape.sigmoid(tape.slice_axis(zz, 1, h_dim, 2 * h_dim))
    g = tape.tanh(tape.slice_axis(zz, 1, 2 * h_dim, 3 * h_dim))
    o = tape.sigmoid(tape.slice_axis(zz, 1, 3 * h_dim, 4 * h_dim))
    c_new = tape.add(tape.mul(f, c), tape.mul(i, g))
    return tape.mul(o, tape.tanh(c_new)), c_new


def _unroll_tape(tape, pnodes, offset, h_dim, xs: list[Node], bsz: int):
    h = tape.leaf(np.zeros((bsz, h_dim)))
    c = tape.leaf(np.zeros((bsz, h_dim)))
    wx, wh, b = pnodes[offset], pnodes[offset + 1], pnodes[offset + 2]
    out = []
    for x in xs:
        h, c = _cell_tape(tape, wx, wh, b, x, h, c, h_dim)
        out.append(h)
    return out


def forward_tape(tape: Tape, pnodes: list[Node], enc_widths: list[int],
                 xs: list[Node]) -> list[Node]:
    """Tape twin of forward_np; xs is T nodes of shape (B, D)."""
    layers, dense_at = _layer_slices(enc_widths)
    n_enc = len(enc_widths)
    bsz = xs[0].value.shape[0]
    seq = xs
    for h_dim, off in layers[:n_enc]:
        seq = _unroll_tape(tape, pnodes, off, h_dim, seq, bsz)
    latent = seq[-1]
    seq = [latent] * len(xs)
    for h_dim, off in layers[n_enc:]:
        seq = _unroll_tape(tape, pnodes, off, h_dim, seq, bsz)
    w_out, b_out = pnodes[dense_at], pnodes[dense_at + 1]
    return [tape.add(tape.matmul(h, w_out), b_out) for h in seq]


def loss_tape(tape: Tape, pnodes: list[Node], enc_widths: list[int],
              xs: list[Node]) -> Node:
    recon = forward_tape(tape, pnodes, enc_widths, xs)
    bsz, d = xs[0].value.shape
    total = None
    for x, y in zip(xs, recon):
        term = tape.sqnorm(tape.sub(y, x))
        total = term if total is None else tape.add(total, term)
    return tape.scale(total, 1.0 / (bsz * len(xs) * d))


# ----------------------------------------------------------------------
# model
# ----------------------------------------------------------------------

@dataclass
class LstmAeModel:
    """Trained detector: weights, normalization, window length, threshold."""

    enc_widths: list[int]
    window_len: int
    d_in: int
    mean: np.ndarray
    scale: np.ndarray
    params: list[np.ndarray]
    tau: float | None = None
    version: int = MODEL_FORMAT_VERSION

    def __post_init__(self):
        if self.window_len < 2:
            raise ValueError("window length must be at least 2")
        if np.any(self.scale <= 0):
            raise ValueError("normalization scales must be strictly positive")

    # normalization ----------------------------------------------------

    def normalize(self, z: np.ndarray) -> np.ndarray:
        return (np.asarray(z, dtype=float) - self.mean) / self.scale

    def denormalize(self, zn: np.ndarray) -> np.ndarray:
        return np.asarray(zn, dtype=float) * self.scale + self.mean

    # scoring ----------------------------------------------------------

    def _check_window(self, window: np.ndarray) -> np.ndarray:
        window = np.asarray(window, dtype=float)
        if window.shape != (self.window_len, self.d_in):
            raise ValueError(
                f"expected window shape {(self.window_len, self.d_in)}, "
                f"got {window.shape}")
        return window

    def reconstruction_loss(self, window: np.ndarray) -> float:
        """Mean squared reconstruction error per element, normalized units."""
        window = self._check_window(window)
        zn = self.normalize(window)
        xs = [zn[t: t + 1, :] for t in range(self.window_len)]
        return loss_np(self.params, self.enc_widths, xs)

    def reconstruct(self, window: np.ndarray) -> np.ndarray:
        """Reconstruction in raw measurement units, shape (T, D)."""
        window = self._check_window(window)
        zn = self.normalize(window)
        xs = [zn[t: t + 1, :] for t in range(self.window_len)]
        recon = forward_np(self.params, self.enc_widths, xs)
        return self.denormalize(np.vstack(recon))

    def detect(self, window: np.ndarray) -> tuple[bool, float]:
        if self.tau is None:
            raise ValueError("threshold not calibrated; run calibrate_threshold")
        score = self.reconstruction_loss(window)
        return bool(score >= self.tau), score

    # serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "widths": list(self.enc_widths),
            "T": self.window_len,
            "d_in": self.d_in,
            "norm_mean": self.mean.tolist(),
            "norm_scale": self.scale.tolist(),
            "weights": [p.tolist() for p in self.params],
            "tau_lstm": self.tau,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_dict(cls, doc: dict) -> "LstmAeModel":
        if doc.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {doc.get('version')!r}")
        return cls(
            enc_widths=[int(w) for w in doc["widths"]],
            window_len=int(doc["T"]),
            d_in=int(doc["d_in"]),
            mean=np.array(doc["norm_mean"], dtype=float),
            scale=np.array(doc["norm_scale"], dtype=float),
            params=[np.array(w, dtype=float) for w in doc["weights"]],
            tau=doc.get("tau_lstm"),
        )

    @classmethod
    def load(cls, path) -> "LstmAeModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


# ----------------------------------------------------------------------
# training
# ----------------------------------------------------------------------

@dataclass
class TrainingConfig:
    epochs: int = 1000
    batch_size: int = 32
    lr: float = 1e-3
    patience: int = 10
    min_delta: float = 1e-6
    seed: int = 0
    split: tuple = (0.6, 0.2, 0.2)   # train / validation / test fractions

    def __post_init__(self):
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {self.split}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be positive")


@dataclass
class TrainingHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0


def _param_count(params) -> int:
    return int(sum(p.size for p in params))


def train(windows: np.ndarray, config: TrainingConfig,
          val_windows: np.ndarray | None = None,
          enc_widths: list[int] | None = None) -> tuple[LstmAeModel, TrainingHistory]:
    """Fit the autoencoder on normal windows.

    ``windows`` has shape (n, T, D).  When ``val_windows`` is omitted the
    train/validation fractions of ``config.split`` are carved off the
    front of ``windows`` (the test fraction is left to the caller).
    Deterministic for a fixed seed.  Early stopping restores the best
    validation-loss parameters.
    """
    windows = np.asarray(windows, dtype=float)
    if windows.ndim != 3 or windows.shape[0] == 0:
        raise TrainingError(f"expected (n, T, D) window array, got {windows.shape}")
    n, t_len, d_in = windows.shape
    if val_windows is None:
        n_train = max(1, int(round(n * config.split[0])))
        n_val = max(1, int(round(n * config.split[1])))
        if n_train + n_val > n:
            raise TrainingError(
                f"{n} windows cannot cover train+validation split {config.split}")
        train_w = windows[:n_train]
        val_w = windows[n_train:n_train + n_val]
    else:
        train_w = windows
        val_w = np.asarray(val_windows, dtype=float)

    enc_widths = enc_widths or derive_widths(d_in)
    rng = np.random.default_rng(config.seed)
    params = init_parameters(d_in, enc_widths, config.seed)
    n_params = _param_count(params)
    if train_w.shape[0] < 10 * n_params:
        warnings.warn(
            f"training set has {train_w.shape[0]} windows for {n_params} "
            "parameters (< 10x); expect regularization by early stopping only",
            stacklevel=2)

    flat = train_w.reshape(-1, d_in)
    mean = flat.mean(axis=0)
    scale = np.maximum(flat.std(axis=0), 1e-6)
    tn = (train_w - mean) / scale
    vn = (val_w - mean) / scale

    def epoch_loss(data: np.ndarray) -> float:
        xs = [data[:, t, :] for t in range(t_len)]
        return loss_np(params, enc_widths, xs)

    adam = AdamState.for_params(params, lr=config.lr)
    history = TrainingHistory()
    best_val = np.inf
    best_params = [p.copy() for p in params]
    best_epoch = 0
    stale = 0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(tn.shape[0])
        for start in range(0, len(order), config.batch_size):
            batch = tn[order[start:start + config.batch_size]]
            tape = Tape()
            pnodes = [tape.leaf(p) for p in params]
            xs = [tape.leaf(batch[:, t, :]) for t in range(t_len)]
            loss = loss_tape(tape, pnodes, enc_widths, xs)
            if not np.isfinite(loss.value):
                raise TrainingError(
                    f"non-finite training loss at epoch {epoch} "
                    f"(batch start {start}); last val loss "
                    f"{history.val_loss[-1] if history.val_loss else 'n/a'}")
            grads = tape.grad(loss, pnodes)
            params = adam_step(adam, params, grads)

        tr_loss = epoch_loss(tn)
        va_loss = epoch_loss(vn)
        if not (np.isfinite(tr_loss) and np.isfinite(va_loss)):
            raise TrainingError(f"non-finite evaluation loss at epoch {epoch}")
        history.train_loss.append(tr_loss)
        history.val_loss.append(va_loss)
        if va_loss < best_val - config.min_delta:
            best_val = va_loss
            best_params = [p.copy() for p in params]
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    history.stopped_epoch = len(history.train_loss)
    history.best_epoch = best_epoch
    model = LstmAeModel(enc_widths=enc_widths, window_len=t_len, d_in=d_in,
                        mean=mean, scale=scale, params=best_params)
    return model, history


def calibrate_threshold(model: LstmAeModel, val_windows: np.ndarray,
                        target_fpr: float) -> float:
    """Set τ at the empirical (1 − target FPR) quantile of validation scores."""
    if not (0.0 < target_fpr < 1.0):
        raise ValueError(f"target FPR must be in (0,1), got {target_fpr}")
    val_windows = np.asarray(val_windows, dtype=float)
    if val_windows.shape[0] < 100:
        warnings.warn(
            f"calibrating on only {val_windows.shape[0]} windows; "
            "threshold estimate is low-confidence", stacklevel=2)
    scores = np.array([model.reconstruction_loss(w) for w in val_windows])
    tau = float(np.quantile(scores, 1.0 - target_fpr))
    model.tau = tau
    return tau
