"""Pure-numpy reference implementations of the hot kernels.

Every function here has a twin in ``_numba.py`` with the same signature;
the two backends agree to within a few ulps.
"""

import numpy as np


def sigmoid(x):
    # tanh form: no overflow for large |x|, and saturates to exactly 0/1
    return 0.5 * np.tanh(0.5 * x) + 0.5


def lstm_gates_forward(z, c_prev):
    """Pointwise half of one LSTM step for a batch.

    ``z`` is the (B, 4H) pre-activation in gate order i, f, g, o.
    Returns ``(act, c, tanh_c, h)`` where ``act`` holds the activated gates.
    """
    H = c_prev.shape[1]
    act = np.empty_like(z)
    act[:, : 2 * H] = sigmoid(z[:, : 2 * H])
    act[:, 2 * H : 3 * H] = np.tanh(z[:, 2 * H : 3 * H])
    act[:, 3 * H :] = sigmoid(z[:, 3 * H :])
    i = act[:, :H]
    f = act[:, H : 2 * H]
    g = act[:, 2 * H : 3 * H]
    o = act[:, 3 * H :]
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return act, c, tanh_c, h


def lstm_gates_backward(dh, dc_next, act, c_prev, tanh_c):
    """Backward of :func:`lstm_gates_forward`.

    Returns ``(dz, dc_prev)``: gradient w.r.t. the gate pre-activations and
    w.r.t. the previous cell state.
    """
    H = c_prev.shape[1]
    i = act[:, :H]
    f = act[:, H : 2 * H]
    g = act[:, 2 * H : 3 * H]
    o = act[:, 3 * H :]
    dc = dc_next + dh * o * (1.0 - tanh_c * tanh_c)
    dz = np.empty_like(act)
    dz[:, :H] = dc * g * i * (1.0 - i)
    dz[:, H : 2 * H] = dc * c_prev * f * (1.0 - f)
    dz[:, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
    dz[:, 3 * H :] = dh * tanh_c * o * (1.0 - o)
    return dz, dc * f


def pegasos_pass(X, y, order, w, lam, t):
    """One pass of Pegasos sub-gradient steps over ``order``, in place on ``w``.

    ``w`` has length ``d + 1``; the last entry is the bias, trained as an
    extra coordinate whose input is the constant 1. Returns the updated step
    counter.
    """
    d = X.shape[1]
    radius = 1.0 / np.sqrt(lam)
    for idx in order:
        t += 1
        eta = 1.0 / (lam * t)
        x = X[idx]
        yi = y[idx]
        margin = yi * (np.dot(w[:d], x) + w[d])
        w *= 1.0 - eta * lam
        if margin < 1.0:
            w[:d] += (eta * yi) * x
            w[d] += eta * yi
        norm = np.sqrt(np.dot(w, w))
        if norm > radius:
            w *= radius / norm
    return t


def elbow_scan(smoothed, gain, relative):
    """Smallest i whose next four values all stay below the improvement bar.

    Returns -1 when no such index exists.
    """
    s = np.asarray(smoothed, dtype=np.float64)
    n = s.shape[0] - 4
    if n <= 0:
        return -1
    bar = s[:n] * (1.0 + gain) if relative else s[:n] + gain
    ok = np.ones(n, dtype=bool)
    for k in range(1, 5):
        ok &= s[k : k + n] < bar
    hits = np.flatnonzero(ok)
    return int(hits[0]) if hits.size else -1
