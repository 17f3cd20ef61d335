"""Slow, independently coded reference implementations used by the tests.

None of these import the code under test; they rebuild each computation
from its defining formula with a different evaluation order (direct DFT
instead of FFT, scalar loops instead of fused matrices, and so on).
"""

from __future__ import annotations

import math

import numpy as np

# --------------------------------------------------------------------------
# MFCC front-end


def hamming(n: int) -> np.ndarray:
    return np.array([0.54 - 0.46 * math.cos(2 * math.pi * k / (n - 1)) for k in range(n)])


def _mel(f):
    return 2595.0 * math.log10(1.0 + f / 700.0)


def _imel(m):
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def mel_filters(sr: int, nfft: int, count: int = 64) -> np.ndarray:
    top = _mel(sr / 2.0)
    edges = [_imel(top * k / (count + 1)) for k in range(count + 2)]
    fb = np.zeros((count, nfft // 2 + 1))
    for m in range(count):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        for k in range(nfft // 2 + 1):
            f = k * sr / nfft
            if lo < f <= mid:
                fb[m, k] = (f - lo) / (mid - lo)
            elif mid < f < hi:
                fb[m, k] = (hi - f) / (hi - mid)
    return fb


def direct_dft_magnitude(x: np.ndarray, nfft: int) -> np.ndarray:
    """|X_k| for k = 0..nfft/2 by explicit O(N^2) summation (zero padding implied)."""
    n = np.arange(x.size)
    k = np.arange(nfft // 2 + 1)[:, None]
    ang = 2.0 * np.pi * ((k * n) % nfft) / nfft
    re = np.cos(ang) @ x
    im = -np.sin(ang) @ x
    return np.hypot(re, im)


def dct2_ortho(v: np.ndarray) -> np.ndarray:
    n = v.size
    out = np.empty(n)
    for k in range(n):
        s = math.fsum(v[i] * math.cos(math.pi * k * (2 * i + 1) / (2 * n)) for i in range(n))
        out[k] = s * (math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n))
    return out


def mfcc_reference(weighted_frame, sr: int = 44100, ceps: int = 32, filters: int = 64) -> np.ndarray:
    x = np.asarray(weighted_frame, dtype=np.float64)
    emph = np.array([x[0]] + [x[i] - 0.97 * x[i - 1] for i in range(1, x.size)])
    nfft = 1
    while nfft < x.size:
        nfft *= 2
    mag = direct_dft_magnitude(emph, nfft)
    fb = mel_filters(sr, nfft, filters)
    energies = np.array([math.fsum(fb[m] * mag) for m in range(filters)])
    logs = np.log(np.maximum(energies, 1e-10))
    return dct2_ortho(logs)[:ceps]


def deltas_reference(c: np.ndarray, width: int = 2) -> np.ndarray:
    T = c.shape[0]
    denom = 2 * sum(n * n for n in range(1, width + 1))
    out = np.zeros_like(c, dtype=np.float64)
    for t in range(T):
        acc = np.zeros(c.shape[1])
        for n in range(1, width + 1):
            acc += n * (c[min(T - 1, t + n)] - c[max(0, t - n)])
        out[t] = acc / denom
    return out


def window_count_reference(T: int, W: int, stride: int) -> int:
    """Count windows by walking start positions one at a time."""
    count, s = 0, 0
    while s + W <= T:
        count += 1
        s += stride
    return count


def dft_peak_hz(x: np.ndarray, sr: int, nfft: int = 4096) -> float:
    """Frequency of the largest direct-DFT magnitude bin over the first nfft samples."""
    seg = np.asarray(x[:nfft], dtype=np.float64) * hamming(min(nfft, len(x)))
    mag = direct_dft_magnitude(seg, nfft)
    mag[0] = 0.0
    return float(np.argmax(mag)) * sr / nfft


# --------------------------------------------------------------------------
# LSTM


def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def lstm_logits_reference(tensors, window) -> list:
    """Scalar-loop forward of the 2-layer LSTM + dense head; returns logits.

    ``tensors`` = (W1, b1, W2, b2, dense_W, dense_b) with fused gate
    matrices of shape (4H, D+H) in order i, f, g, o.
    """
    W1, b1, W2, b2, dW, db = (np.asarray(t, dtype=np.float64) for t in tensors)

    def run(W, b, xs):
        H = W.shape[0] // 4
        D = W.shape[1] - H
        h = [0.0] * H
        c = [0.0] * H
        outs = []
        for x in xs:
            # recurrent part first, then input part: a different order from the fused matmul
            pre = []
            for r in range(4 * H):
                rec = math.fsum(W[r, D + j] * h[j] for j in range(H))
                inp = math.fsum(W[r, j] * x[j] for j in range(D))
                pre.append(b[r] + rec + inp)
            new_h, new_c = [], []
            for j in range(H):
                i = _sigmoid(pre[j])
                f = _sigmoid(pre[H + j])
                g = math.tanh(pre[2 * H + j])
                o = _sigmoid(pre[3 * H + j])
                cj = f * c[j] + i * g
                new_c.append(cj)
                new_h.append(o * math.tanh(cj))
            h, c = new_h, new_c
            outs.append(list(h))
        return outs

    h1 = run(W1, b1, [list(row) for row in np.asarray(window, dtype=np.float64)])
    h2 = run(W2, b2, h1)
    last = h2[-1]
    return [db[k] + math.fsum(dW[k, j] * last[j] for j in range(len(last))) for k in range(dW.shape[0])]


def softmax_reference(logits) -> list:
    m = max(logits)
    e = [math.exp(v - m) for v in logits]
    s = math.fsum(e)
    return [v / s for v in e]


def central_difference(f, params, eps: float = 1e-5) -> list:
    """Numerical gradient of scalar f() w.r.t. every element of every array in params (mutated and restored)."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            up = f()
            flat[k] = orig - eps
            down = f()
            flat[k] = orig
            gflat[k] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


# --------------------------------------------------------------------------
# selection


def moving_average_reference(series, window: int) -> list:
    out = []
    for i in range(len(series)):
        chunk = series[max(0, i - window + 1) : i + 1]
        out.append(math.fsum(chunk) / len(chunk))
    return out


def elbow_reference(s, gain: float = 0.05, relative: bool = True, lookahead: int = 4):
    """Exhaustive scan; returns (index, no_plateau)."""
    n = len(s)
    for i in range(n - lookahead):
        bar = s[i] * (1.0 + gain) if relative else s[i] + gain
        if all(s[j] < bar for j in range(i + 1, i + lookahead + 1)):
            return i, False
    return n - 1, True


def clip_accuracy_reference(probs, clip_of_window, clip_labels) -> float:
    sums = {}
    for p, c in zip(probs, clip_of_window):
        acc = sums.setdefault(int(c), [0.0] * len(p))
        for k, v in enumerate(p):
            acc[k] += v
    correct = 0
    for c, acc in sums.items():
        best = max(range(len(acc)), key=lambda k: (acc[k], -k))
        correct += best == clip_labels[c]
    return correct / len(sums)


# --------------------------------------------------------------------------
# quantization


def quantize_reference(values):
    v = [float(x) for x in np.asarray(values, dtype=np.float64).reshape(-1)]
    lo = float(np.float32(min(v)))
    hi = float(np.float32(max(v)))
    if lo == hi:
        return lo, hi, [0] * len(v)
    codes = []
    for x in v:
        q = (x - lo) / (hi - lo) * 255.0
        codes.append(min(255, max(0, int(math.floor(q + 0.5)))))
    return lo, hi, codes
