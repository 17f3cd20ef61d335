"""Two-layer LSTM classifier with a dense softmax head, written against numpy.

Each layer keeps a single fused weight matrix ``W`` of shape (4H, D+H) acting
on ``[x; h_prev]`` with gate blocks ordered i, f, g, o. The head reads the
second layer's hidden state at the last time step only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NonFiniteLoss, ShapeMismatch

INPUT_DIM = 96
HIDDEN = 128

TENSOR_NAMES = ("layer1.W", "layer1.b", "layer2.W", "layer2.b", "dense.W", "dense.b")


class LossKind(str, enum.Enum):
    CROSS_ENTROPY = "ce"
    L2_ONE_HOT = "l2"


@dataclass(eq=False)
class LstmLayerParams:
    W: np.ndarray
    b: np.ndarray

    @property
    def hidden(self) -> int:
        return self.W.shape[0] // 4

    @property
    def input_dim(self) -> int:
        return self.W.shape[1] - self.hidden

    def validate(self):
        H4, DH = self.W.shape
        if H4 % 4 or self.b.shape != (H4,) or DH <= H4 // 4:
            raise ShapeMismatch(f"bad LSTM layer shapes W{self.W.shape} b{self.b.shape}")


@dataclass(eq=False)
class LstmModel:
    layer1: LstmLayerParams
    layer2: LstmLayerParams
    dense_W: np.ndarray
    dense_b: np.ndarray
    window_len: int

    def __post_init__(self):
        self.layer1.validate()
        self.layer2.validate()
        H = self.layer1.hidden
        if self.layer2.hidden != H or self.layer2.input_dim != H:
            raise ShapeMismatch("layer 2 must take and produce the layer-1 hidden size")
        if self.dense_W.ndim != 2 or self.dense_W.shape[1] != H or self.dense_b.shape != self.dense_W.shape[:1]:
            raise ShapeMismatch(f"bad dense shapes W{self.dense_W.shape} b{self.dense_b.shape}")

    @property
    def num_users(self) -> int:
        return self.dense_W.shape[0]

    @property
    def input_dim(self) -> int:
        return self.layer1.input_dim

    @property
    def hidden(self) -> int:
        return self.layer1.hidden

    def tensors(self) -> list:
        """Parameter arrays in canonical order (see ``TENSOR_NAMES``)."""
        return [self.layer1.W, self.layer1.b, self.layer2.W, self.layer2.b, self.dense_W, self.dense_b]

    @classmethod
    def from_tensors(cls, tensors, window_len: int) -> "LstmModel":
        w1, b1, w2, b2, dw, db = (np.asarray(t, dtype=np.float64) for t in tensors)
        return cls(LstmLayerParams(w1, b1), LstmLayerParams(w2, b2), dw, db, int(window_len))

    def copy(self) -> "LstmModel":
        return LstmModel.from_tensors([t.copy() for t in self.tensors()], self.window_len)

    def astype(self, dtype) -> "LstmModel":
        """Same parameters stored as ``dtype`` (no copy if already that type)."""
        w1, b1, w2, b2, dw, db = (np.asarray(t, dtype=dtype) for t in self.tensors())
        return LstmModel(LstmLayerParams(w1, b1), LstmLayerParams(w2, b2), dw, db, self.window_len)

    def rounded_to_float32(self) -> "LstmModel":
        """Copy whose values are exactly representable in 32-bit floats."""
        return LstmModel.from_tensors([t.astype(np.float32) for t in self.tensors()], self.window_len)

    @property
    def param_count(self) -> int:
        return sum(t.size for t in self.tensors())


def param_count(num_users: int, input_dim: int = INPUT_DIM, hidden: int = HIDDEN) -> int:
    return 4 * hidden * (input_dim + hidden + 1) + 4 * hidden * (2 * hidden + 1) + hidden * num_users + num_users


def init_model(num_users: int, window_len: int, seed: int, *, input_dim: int = INPUT_DIM,
               hidden: int = HIDDEN) -> LstmModel:
    """Uniform(-r, r) weights, zero biases except forget gate = 1."""
    rng = np.random.default_rng(seed)

    def layer(d):
        r = np.sqrt(6.0 / (d + 4 * hidden))
        W = rng.uniform(-r, r, size=(4 * hidden, d + hidden))
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0
        return LstmLayerParams(W, b)

    l1 = layer(input_dim)
    l2 = layer(hidden)
    r = np.sqrt(6.0 / (hidden + num_users))
    dense_W = rng.uniform(-r, r, size=(num_users, hidden))
    return LstmModel(l1, l2, dense_W, np.zeros(num_users), window_len)


def zero_model(num_users: int, window_len: int, *, input_dim: int = INPUT_DIM, hidden: int = HIDDEN) -> LstmModel:
    def layer(d):
        return LstmLayerParams(np.zeros((4 * hidden, d + hidden)), np.zeros(4 * hidden))

    return LstmModel(layer(input_dim), layer(hidden), np.zeros((num_users, hidden)), np.zeros(num_users), window_len)


# --------------------------------------------------------------------------
# forward


def lstm_cell_step(params: LstmLayerParams, x, h_prev, c_prev):
    """One time step for a single sequence; returns ``(h, c)``."""
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    H, D = params.hidden, params.input_dim
    if x.shape != (D,) or h_prev.shape != (H,) or c_prev.shape != (H,):
        raise ShapeMismatch(f"cell expects x({D}), h({H}), c({H}); got {x.shape}, {h_prev.shape}, {c_prev.shape}")
    z = params.W @ np.concatenate([x, h_prev]) + params.b
    _, c, _, h = _kernels.lstm_gates_forward(z[None, :], c_prev[None, :])
    return h[0], c[0]


def _layer_forward(params: LstmLayerParams, X):
    """Run one layer over time-major input X (T, B, D) from a zero state.

    Returns ``(hs, cache)`` with ``hs`` of shape (T, B, H).
    """
    T, B, D = X.shape
    H = params.hidden
    Wx, Wh = params.W[:, :D], params.W[:, D:]
    Xp = X @ Wx.T + params.b
    dt = Xp.dtype
    hs = np.empty((T + 1, B, H), dtype=dt)
    cs = np.empty((T + 1, B, H), dtype=dt)
    acts = np.empty((T, B, 4 * H), dtype=dt)
    tanh_cs = np.empty((T, B, H), dtype=dt)
    hs[0] = 0.0
    cs[0] = 0.0
    for t in range(T):
        z = Xp[t] + hs[t] @ Wh.T
        acts[t], cs[t + 1], tanh_cs[t], hs[t + 1] = _kernels.lstm_gates_forward(z, cs[t])
    return hs[1:], (X, hs, cs, acts, tanh_cs)


def _layer_backward(params: LstmLayerParams, cache, dHs):
    """BPTT through one layer; ``dHs`` is dLoss/dh_t, shape (T, B, H).

    Returns ``(dW, db, dX)``.
    """
    X, hs, cs, acts, tanh_cs = cache
    T, B, D = X.shape
    H = params.hidden
    Wx, Wh = params.W[:, :D], params.W[:, D:]
    dZ = np.empty((T, B, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dz, dc_next = _kernels.lstm_gates_backward(dHs[t] + dh_next, dc_next, acts[t], cs[t], tanh_cs[t])
        dZ[t] = dz
        dh_next = dz @ Wh
    inputs = np.concatenate([X, hs[:-1]], axis=2).reshape(T * B, D + H)
    flat = dZ.reshape(T * B, 4 * H)
    return flat.T @ inputs, flat.sum(axis=0), dZ @ Wx


def _check_batch(model: LstmModel, X, dtype=np.float64) -> np.ndarray:
    X = np.asarray(X, dtype=dtype)
    if X.ndim != 3 or X.shape[2] != model.input_dim:
        raise ShapeMismatch(f"expected (B, T, {model.input_dim}) windows, got {X.shape}")
    return X


def _logits_with_cache(model: LstmModel, X):
    Xt = np.ascontiguousarray(X.transpose(1, 0, 2))
    h1, cache1 = _layer_forward(model.layer1, Xt)
    h2, cache2 = _layer_forward(model.layer2, h1)
    last = h2[-1]
    logits = last @ model.dense_W.T + model.dense_b
    return logits, (cache1, cache2, last)


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def logits_batch(model: LstmModel, X) -> np.ndarray:
    return _logits_with_cache(model, _check_batch(model, X))[0]


def predict_proba(model: LstmModel, X, chunk: int = 1024, dtype=np.float64) -> np.ndarray:
    """Softmax outputs for a (B, T, D) batch, evaluated in chunks.

    ``dtype=np.float32`` runs the whole pass in single precision, which is
    what a serialized (float32) model computes; results come back as float64.
    """
    X = _check_batch(model, X, dtype)
    if model.dense_W.dtype != dtype:
        model = model.astype(dtype)
    parts = [softmax(_logits_with_cache(model, X[i : i + chunk])[0]) for i in range(0, max(len(X), 1), chunk)]
    return np.concatenate(parts).astype(np.float64)


def forward(model: LstmModel, window) -> np.ndarray:
    """Probability vector over users for one (W, 96) window."""
    data = getattr(window, "data", window)
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != model.input_dim:
        raise ShapeMismatch(f"window must be (W, {model.input_dim}), got {data.shape}")
    return softmax(_logits_with_cache(model, data[None])[0])[0]


# --------------------------------------------------------------------------
# loss and gradients


def loss(probs, label: int, kind=LossKind.CROSS_ENTROPY) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    kind = LossKind(kind)
    if kind is LossKind.CROSS_ENTROPY:
        return float(-np.log(probs[label]))
    target = np.zeros_like(probs)
    target[label] = 1.0
    return float(np.sum((probs - target) ** 2))


def batch_loss(probs, labels, kind=LossKind.CROSS_ENTROPY) -> float:
    """Mean loss over a batch of probability rows."""
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    kind = LossKind(kind)
    rows = np.arange(len(labels))
    if kind is LossKind.CROSS_ENTROPY:
        # clamp keeps a fully confident miss finite-but-large rather than inf
        return float(np.mean(-np.log(np.maximum(probs[rows, labels], 1e-300))))
    target = np.zeros_like(probs)
    target[rows, labels] = 1.0
    return float(np.mean(np.sum((probs - target) ** 2, axis=1)))


def loss_and_grads(model: LstmModel, X, labels, kind=LossKind.CROSS_ENTROPY):
    """Mean batch loss and its exact gradient for every parameter tensor.

    Gradients come back as a list aligned with ``model.tensors()``.
    """
    X = _check_batch(model, X)
    labels = np.asarray(labels, dtype=np.int64)
    kind = LossKind(kind)
    B = X.shape[0]
    logits, (cache1, cache2, last) = _logits_with_cache(model, X)
    probs = softmax(logits)
    value = batch_loss(probs, labels, kind)
    if not np.isfinite(value):
        raise NonFiniteLoss(f"batch loss is {value}")

    onehot = np.zeros_like(probs)
    onehot[np.arange(B), labels] = 1.0
    if kind is LossKind.CROSS_ENTROPY:
        dlogits = (probs - onehot) / B
    else:
        dp = 2.0 * (probs - onehot)
        dlogits = probs * (dp - np.sum(probs * dp, axis=1, keepdims=True)) / B

    d_dense_W = dlogits.T @ last
    d_dense_b = dlogits.sum(axis=0)
    T = X.shape[1]
    dH2 = np.zeros((T, B, model.hidden))
    dH2[-1] = dlogits @ model.dense_W
    dW2, db2, dH1 = _layer_backward(model.layer2, cache2, dH2)
    dW1, db1, _ = _layer_backward(model.layer1, cache1, dH1)
    return value, [dW1, db1, dW2, db2, d_dense_W, d_dense_b]


def backward(model: LstmModel, batch, kind=LossKind.CROSS_ENTROPY) -> list:
    """Gradients of the mean loss over ``batch``, a sequence of (window, label)."""
    batch = list(batch)
    if not batch:
        raise ValueError("backward needs a non-empty batch")
    X = np.stack([np.asarray(getattr(w, "data", w), dtype=np.float64) for w, _ in batch])
    labels = [lab for _, lab in batch]
    return loss_and_grads(model, X, labels, kind)[1]
