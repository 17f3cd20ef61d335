"""256-level per-tensor affine quantization of model parameters.

Each tensor is stored as its float32 extrema plus one uint8 code per
element, ``code = round((v - min) / (max - min) * 255)`` with halves rounded
away from zero. Inference dequantizes back to floats; the 8-bit form is a
storage format, not an integer compute path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteInput
from .lstm import LstmModel, forward, logits_batch, predict_proba, softmax

LEVELS = 255


def round_half_away(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True, eq=False)
class QuantizedTensor:
    min: np.float32
    max: np.float32
    codes: np.ndarray  # uint8, original shape

    @property
    def shape(self):
        return self.codes.shape

    @property
    def degenerate(self) -> bool:
        return bool(self.min == self.max)

    @property
    def step(self) -> float:
        return (float(self.max) - float(self.min)) / LEVELS


def quantize_tensor(values) -> QuantizedTensor:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot quantize an empty tensor")
    if not np.all(np.isfinite(v)):
        raise NonFiniteInput("tensor contains NaN or infinity")
    lo = np.float32(v.min())
    hi = np.float32(v.max())
    if lo == hi:
        return QuantizedTensor(lo, hi, np.zeros(v.shape, dtype=np.uint8))
    scaled = (v - float(lo)) / (float(hi) - float(lo)) * LEVELS
    codes = np.clip(round_half_away(scaled), 0, LEVELS).astype(np.uint8)
    return QuantizedTensor(lo, hi, codes)


def dequantize_tensor(q: QuantizedTensor) -> np.ndarray:
    lo, hi = float(q.min), float(q.max)
    if q.degenerate:
        return np.full(q.codes.shape, lo)
    c = q.codes.astype(np.float64)
    out = lo + c * ((hi - lo) / LEVELS)
    # endpoints must come back exactly, whatever the rounding of the step
    out[q.codes == LEVELS] = hi
    return out


@dataclass(eq=False)
class QuantizedModel:
    tensors: list  # QuantizedTensor per LstmModel tensor, canonical order
    window_len: int
    _dequantized: LstmModel | None = field(default=None, repr=False)

    @property
    def num_users(self) -> int:
        return self.tensors[4].shape[0]

    @property
    def hidden(self) -> int:
        return self.tensors[0].shape[0] // 4

    @property
    def input_dim(self) -> int:
        return self.tensors[0].shape[1] - self.hidden

    @property
    def param_count(self) -> int:
        return sum(q.codes.size for q in self.tensors)

    def dequantized(self) -> LstmModel:
        """Float model rebuilt from the codes; computed once and cached."""
        if self._dequantized is None:
            self._dequantized = LstmModel.from_tensors([dequantize_tensor(q) for q in self.tensors], self.window_len)
        return self._dequantized


def quantize_model(model: LstmModel) -> QuantizedModel:
    return QuantizedModel([quantize_tensor(t) for t in model.tensors()], model.window_len)


def quantized_forward(qmodel: QuantizedModel, window) -> np.ndarray:
    """Probability vector for one window using the dequantized weights."""
    return forward(qmodel.dequantized(), window)


def quantized_predict_proba(qmodel: QuantizedModel, X) -> np.ndarray:
    return predict_proba(qmodel.dequantized(), X)


@dataclass(frozen=True)
class AgreementReport:
    windows: int
    agreement: float
    max_abs_logit_delta: float
    max_abs_prob_delta: float

    def to_json(self) -> dict:
        return dict(windows=self.windows, agreement=self.agreement,
                    max_abs_logit_delta=self.max_abs_logit_delta, max_abs_prob_delta=self.max_abs_prob_delta)


def agreement(model: LstmModel, qmodel: QuantizedModel, X) -> AgreementReport:
    """Argmax agreement between float and quantized forward, plus deviations."""
    lf = logits_batch(model, X)
    lq = logits_batch(qmodel.dequantized(), X)
    same = np.argmax(lf, axis=1) == np.argmax(lq, axis=1)
    return AgreementReport(
        windows=int(len(X)),
        agreement=float(np.mean(same)),
        max_abs_logit_delta=float(np.max(np.abs(lf - lq))),
        max_abs_prob_delta=float(np.max(np.abs(softmax(lf) - softmax(lq)))),
    )
