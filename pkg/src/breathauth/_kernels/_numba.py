"""numba-compiled twins of the kernels in ``_numpy.py``."""

import math

import numpy as np
from numba import njit


# scalar libm tanh is ~4x slower than exp here, so both activations go
# through exp; exp overflow to inf still saturates to exactly 0 / 1 / -1
@njit(cache=True, inline="always")
def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


@njit(cache=True, inline="always")
def _tanh(x):
    return 2.0 / (1.0 + math.exp(-2.0 * x)) - 1.0


@njit(cache=True)
def lstm_gates_forward(z, c_prev):
    B, H = c_prev.shape
    act = np.empty_like(z)
    c = np.empty_like(c_prev)
    tanh_c = np.empty_like(c_prev)
    h = np.empty_like(c_prev)
    for b in range(B):
        for j in range(H):
            i = _sig(z[b, j])
            f = _sig(z[b, H + j])
            g = _tanh(z[b, 2 * H + j])
            o = _sig(z[b, 3 * H + j])
            act[b, j] = i
            act[b, H + j] = f
            act[b, 2 * H + j] = g
            act[b, 3 * H + j] = o
            cc = f * c_prev[b, j] + i * g
            tc = _tanh(cc)
            c[b, j] = cc
            tanh_c[b, j] = tc
            h[b, j] = o * tc
    return act, c, tanh_c, h


@njit(cache=True)
def lstm_gates_backward(dh, dc_next, act, c_prev, tanh_c):
    B, H = c_prev.shape
    dz = np.empty_like(act)
    dc_prev = np.empty_like(c_prev)
    for b in range(B):
        for j in range(H):
            i = act[b, j]
            f = act[b, H + j]
            g = act[b, 2 * H + j]
            o = act[b, 3 * H + j]
            tc = tanh_c[b, j]
            dc = dc_next[b, j] + dh[b, j] * o * (1.0 - tc * tc)
            dz[b, j] = dc * g * i * (1.0 - i)
            dz[b, H + j] = dc * c_prev[b, j] * f * (1.0 - f)
            dz[b, 2 * H + j] = dc * i * (1.0 - g * g)
            dz[b, 3 * H + j] = dh[b, j] * tc * o * (1.0 - o)
            dc_prev[b, j] = dc * f
    return dz, dc_prev


@njit(cache=True)
def pegasos_pass(X, y, order, w, lam, t):
    d = X.shape[1]
    radius = 1.0 / math.sqrt(lam)
    for k in range(order.shape[0]):
        idx = order[k]
        t += 1
        eta = 1.0 / (lam * t)
        yi = y[idx]
        acc = w[d]
        for j in range(d):
            acc += w[j] * X[idx, j]
        margin = yi * acc
        shrink = 1.0 - eta * lam
        sq = 0.0
        if margin < 1.0:
            step = eta * yi
            for j in range(d):
                w[j] = w[j] * shrink + step * X[idx, j]
                sq += w[j] * w[j]
            w[d] = w[d] * shrink + step
        else:
            for j in range(d):
                w[j] *= shrink
                sq += w[j] * w[j]
            w[d] *= shrink
        sq += w[d] * w[d]
        norm = math.sqrt(sq)
        if norm > radius:
            scale = radius / norm
            for j in range(d + 1):
                w[j] *= scale
    return t


@njit(cache=True)
def elbow_scan(smoothed, gain, relative):
    n = smoothed.shape[0] - 4
    for i in range(n):
        bar = smoothed[i] * (1.0 + gain) if relative else smoothed[i] + gain
        ok = True
        for k in range(1, 5):
            if not smoothed[i + k] < bar:
                ok = False
                break
        if ok:
            return i
    return -1
